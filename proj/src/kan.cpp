#include "dekan/kan.hpp"

#include <Eigen/Core>
#include <cmath>

#include "dekan/error.hpp"

namespace dekan {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

}  // namespace

// ---------------------------------------------------------------- KanLinear

template <typename T>
KanLinear<T>::KanLinear(int in_features, int out_features, const SplineGrid& grid)
    : in_(in_features),
      out_(out_features),
      grid_(grid),
      coeffs_({out_features, in_features, grid.basis_count()}),
      base_weight_({out_features, in_features}),
      spline_scale_({out_features, in_features}) {
    grid.validate();
    if (in_features < 1 || out_features < 1) throw ConfigError("KAN layer widths must be >= 1");
    spline_scale_.value.fill(T(1));
}

template <typename T>
void KanLinear<T>::init(Rng& rng) {
    fill_normal(base_weight_.value, rng, 0.0, std::sqrt(2.0 / in_));
    fill_normal(coeffs_.value, rng, 0.0, 0.1 / std::sqrt(static_cast<double>(in_)));
    spline_scale_.value.fill(T(1));
}

template <typename T>
Tensor<T> KanLinear<T>::forward(const Tensor<T>& x) {
    if (x.rank() < 1 || x.shape().back() != in_) {
        throw ConfigError("KAN layer expects " + std::to_string(in_) + " input features, got " +
                          shape_str(x.shape()));
    }
    const int rows = static_cast<int>(x.size() / in_);
    const int nb = grid_.basis_count();
    in_shape_ = x.shape();
    input_ = x;
    silu_ = Tensor<T>({rows, in_});
    for (std::size_t i = 0; i < x.size(); ++i) silu_[i] = silu(x[i]);
    basis_ = bspline_basis<T>(x.values(), grid_, true);

    // Fold spline_scale into the coefficients: (out, in*nb).
    MatRM<T> ws(out_, in_ * nb);
    for (int o = 0; o < out_; ++o) {
        for (int i = 0; i < in_; ++i) {
            const T s = spline_scale_.value[o * in_ + i];
            const T* c = coeffs_.value.data() + (static_cast<std::size_t>(o) * in_ + i) * nb;
            for (int j = 0; j < nb; ++j) ws(o, i * nb + j) = s * c[j];
        }
    }
    Shape out_shape = in_shape_;
    out_shape.back() = out_;
    Tensor<T> y(out_shape);
    MapRM<T> ym(y.data(), rows, out_);
    ym.noalias() = CMapRM<T>(silu_.data(), rows, in_) * CMapRM<T>(base_weight_.value.data(), out_, in_).transpose();
    ym.noalias() += CMapRM<T>(basis_.values.data(), rows, in_ * nb) * ws.transpose();
    return y;
}

template <typename T>
Tensor<T> KanLinear<T>::backward(const Tensor<T>& dy) {
    const int rows = static_cast<int>(input_.size() / in_);
    const int nb = grid_.basis_count();
    CMapRM<T> g(dy.data(), rows, out_);
    CMapRM<T> bv(basis_.values.data(), rows, in_ * nb);

    MapRM<T>(base_weight_.grad.data(), out_, in_).noalias() += g.transpose() * CMapRM<T>(silu_.data(), rows, in_);
    const MatRM<T> dws = g.transpose() * bv;
    MatRM<T> ws(out_, in_ * nb);
    for (int o = 0; o < out_; ++o) {
        for (int i = 0; i < in_; ++i) {
            const std::size_t oi = static_cast<std::size_t>(o) * in_ + i;
            const T s = spline_scale_.value[oi];
            const T* c = coeffs_.value.data() + oi * nb;
            T* dc = coeffs_.grad.data() + oi * nb;
            T dscale = T(0);
            for (int j = 0; j < nb; ++j) {
                dc[j] += dws(o, i * nb + j) * s;
                dscale += dws(o, i * nb + j) * c[j];
                ws(o, i * nb + j) = s * c[j];
            }
            spline_scale_.grad[oi] += dscale;
        }
    }

    const MatRM<T> dsilu = g * CMapRM<T>(base_weight_.value.data(), out_, in_);
    const MatRM<T> dbasis = g * ws;
    Tensor<T> dx(in_shape_);
    for (int r = 0; r < rows; ++r) {
        for (int i = 0; i < in_; ++i) {
            const std::size_t ri = static_cast<std::size_t>(r) * in_ + i;
            const T* db = basis_.derivatives.data() + ri * nb;
            T acc = dsilu(r, i) * silu_grad(input_[ri]);
            for (int j = 0; j < nb; ++j) acc += dbasis(r, i * nb + j) * db[j];
            dx[ri] = acc;
        }
    }
    return dx;
}

template <typename T>
void KanLinear<T>::collect(StateList<T>& out, const std::string& prefix) {
    coeffs_.add_to(out, prefix + "spline_coeffs");
    base_weight_.add_to(out, prefix + "base_weight");
    spline_scale_.add_to(out, prefix + "spline_scale");
}

// ---------------------------------------------------------------- KanComposition

template <typename T>
KanComposition<T>::KanComposition(std::array<int, 4> widths, const SplineGrid& grid) {
    for (std::size_t i = 0; i < 3; ++i) layers_[i] = KanLinear<T>(widths[i], widths[i + 1], grid);
}

template <typename T>
void KanComposition<T>::init(Rng& rng) {
    for (auto& l : layers_) l.init(rng);
}

template <typename T>
Tensor<T> KanComposition<T>::forward(const Tensor<T>& x) {
    if (x.rank() < 1 || x.shape().back() != layers_[0].in_features()) {
        throw ConfigError("KAN composition expects " + std::to_string(layers_[0].in_features()) +
                          " features, got " + shape_str(x.shape()));
    }
    Tensor<T> h = x;
    for (auto& l : layers_) h = l.forward(h);
    return h;
}

template <typename T>
Tensor<T> KanComposition<T>::backward(const Tensor<T>& dy) {
    Tensor<T> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
    return g;
}

template <typename T>
void KanComposition<T>::collect(StateList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, prefix + "phi" + std::to_string(i) + ".");
}

// ---------------------------------------------------------------- PatchEmbed

template <typename T>
PatchEmbed<T>::PatchEmbed(int in_channels, int embed_dim, int patch_size)
    : patch_(patch_size), proj_(ConvSpec{in_channels, embed_dim, patch_size, patch_size, 0, true}) {}

template <typename T>
Tensor<T> PatchEmbed<T>::forward(const Tensor<T>& map) {
    if (map.rank() != 4) throw ConfigError("patch embedding expects a (B, C, H, W) map");
    const int h = map.dim(2), w = map.dim(3);
    if (h % patch_ != 0 || w % patch_ != 0) {
        throw ConfigError("patch embedding: H=" + std::to_string(h) + ", W=" + std::to_string(w) +
                          " not divisible by P=" + std::to_string(patch_));
    }
    grid_h_ = h / patch_;
    grid_w_ = w / patch_;
    return map_to_tokens(proj_.forward(map));
}

template <typename T>
Tensor<T> PatchEmbed<T>::backward(const Tensor<T>& dtokens) {
    return proj_.backward(tokens_to_map(dtokens, grid_h_, grid_w_));
}

template <typename T>
void PatchEmbed<T>::collect(StateList<T>& out, const std::string& prefix) {
    proj_.collect(out, prefix + "proj.");
}

// ---------------------------------------------------------------- KanBlock

template <typename T>
KanBlock<T>::KanBlock(int dim, const SplineGrid& grid) : dim_(dim) {
    for (std::size_t i = 0; i < 3; ++i) {
        kans_[i] = KanComposition<T>({dim, dim, dim, dim}, grid);
        convs_[i] = ConvBnRelu<T>(ConvSpec{dim, dim, 3, 1, 1, true});
    }
}

template <typename T>
void KanBlock<T>::init(Rng& rng) {
    for (std::size_t i = 0; i < 3; ++i) {
        kans_[i].init(rng);
        convs_[i].init(rng);
    }
}

template <typename T>
Tensor<T> KanBlock<T>::forward(const Tensor<T>& tokens, int grid_h, int grid_w, bool training) {
    if (tokens.rank() != 3 || tokens.dim(2) != dim_) {
        throw ConfigError("KAN block expects (B, N, " + std::to_string(dim_) + ") tokens, got " +
                          shape_str(tokens.shape()));
    }
    if (tokens.dim(1) != grid_h * grid_w) {
        throw ConfigError("KAN block: " + std::to_string(tokens.dim(1)) + " tokens do not form a " +
                          std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
    }
    grid_h_ = grid_h;
    grid_w_ = grid_w;
    Tensor<T> h = tokens;
    for (std::size_t i = 0; i < 3; ++i) {
        h = kans_[i].forward(h);
        h = map_to_tokens(convs_[i].forward(tokens_to_map(h, grid_h, grid_w), training));
    }
    h += tokens;
    return h;
}

template <typename T>
Tensor<T> KanBlock<T>::backward(const Tensor<T>& dy) {
    Tensor<T> g = dy;
    for (int i = 2; i >= 0; --i) {
        const auto idx = static_cast<std::size_t>(i);
        g = map_to_tokens(convs_[idx].backward(tokens_to_map(g, grid_h_, grid_w_)));
        g = kans_[idx].backward(g);
    }
    g += dy;
    return g;
}

template <typename T>
void KanBlock<T>::collect(StateList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < 3; ++i) {
        kans_[i].collect(out, prefix + "kan" + std::to_string(i) + ".");
        convs_[i].collect(out, prefix + "conv" + std::to_string(i) + ".");
    }
}

// ---------------------------------------------------------------- KanStage

template <typename T>
KanStage<T>::KanStage(int in_channels, int embed_dim, int patch_size, const SplineGrid& grid)
    : embed_(in_channels, embed_dim, patch_size),
      norm_in_(embed_dim),
      block_(embed_dim, grid),
      norm_out_(embed_dim) {}

template <typename T>
void KanStage<T>::init(Rng& rng) {
    embed_.init(rng);
    block_.init(rng);
}

template <typename T>
Tensor<T> KanStage<T>::forward(const Tensor<T>& map, bool training) {
    Tensor<T> tokens = norm_in_.forward(embed_.forward(map));
    tokens = block_.forward(tokens, embed_.grid_h(), embed_.grid_w(), training);
    return tokens_to_map(norm_out_.forward(tokens), embed_.grid_h(), embed_.grid_w());
}

template <typename T>
Tensor<T> KanStage<T>::backward(const Tensor<T>& dmap) {
    Tensor<T> g = norm_out_.backward(map_to_tokens(dmap));
    g = block_.backward(g);
    return embed_.backward(norm_in_.backward(g));
}

template <typename T>
void KanStage<T>::collect(StateList<T>& out, const std::string& prefix) {
    embed_.collect(out, prefix + "patch_embed.");
    norm_in_.collect(out, prefix + "norm_in.");
    block_.collect(out, prefix + "block.");
    norm_out_.collect(out, prefix + "norm_out.");
}

template class KanLinear<float>;
template class KanLinear<double>;
template class KanComposition<float>;
template class KanComposition<double>;
template class PatchEmbed<float>;
template class PatchEmbed<double>;
template class KanBlock<float>;
template class KanBlock<double>;
template class KanStage<float>;
template class KanStage<double>;

}  // namespace dekan
