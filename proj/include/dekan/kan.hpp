#pragma once

#include <array>
#include <string>

#include "dekan/layers.hpp"
#include "dekan/spline.hpp"

namespace dekan {

/// One layer of learnable edge activations:
///   y[o] = sum_i base_weight[o,i] * silu(x[i]) + spline_scale[o,i] * sum_j coeffs[o,i,j] * B_j(x[i])
/// Applied row-wise to any tensor whose trailing axis has `in` features.
template <typename T>
class KanLinear {
public:
    KanLinear() = default;
    KanLinear(int in_features, int out_features, const SplineGrid& grid);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    int in_features() const { return in_; }
    int out_features() const { return out_; }
    const SplineGrid& grid() const { return grid_; }
    Param<T>& coeffs() { return coeffs_; }
    Param<T>& base_weight() { return base_weight_; }
    Param<T>& spline_scale() { return spline_scale_; }

private:
    int in_ = 0;
    int out_ = 0;
    SplineGrid grid_;
    Param<T> coeffs_;        // (out, in, basis_count)
    Param<T> base_weight_;   // (out, in)
    Param<T> spline_scale_;  // (out, in)

    Shape in_shape_;
    Tensor<T> input_;
    Tensor<T> silu_;
    BasisEval<T> basis_;
};

/// Three chained KAN layers, in -> hidden -> hidden -> out.
template <typename T>
class KanComposition {
public:
    KanComposition() = default;
    KanComposition(std::array<int, 4> widths, const SplineGrid& grid);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    KanLinear<T>& layer(int i) { return layers_.at(static_cast<std::size_t>(i)); }

private:
    std::array<KanLinear<T>, 3> layers_;
};

/// P x P stride-P projection followed by flattening to (B, N, D) tokens.
template <typename T>
class PatchEmbed {
public:
    PatchEmbed() = default;
    PatchEmbed(int in_channels, int embed_dim, int patch_size);

    void init(Rng& rng) { proj_.init(rng); }
    Tensor<T> forward(const Tensor<T>& map);
    Tensor<T> backward(const Tensor<T>& dtokens);
    void collect(StateList<T>& out, const std::string& prefix);

    int grid_h() const { return grid_h_; }
    int grid_w() const { return grid_w_; }
    int patch_size() const { return patch_; }
    Conv2d<T>& proj() { return proj_; }

private:
    int patch_ = 1;
    Conv2d<T> proj_;
    int grid_h_ = 0;
    int grid_w_ = 0;
};

/// Three (token-wise KAN composition -> 3x3 conv + batch-norm + relu) layers on a
/// (B, N, D) token sequence laid out on an h x w grid, plus an identity residual.
template <typename T>
class KanBlock {
public:
    KanBlock() = default;
    KanBlock(int dim, const SplineGrid& grid);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& tokens, int grid_h, int grid_w, bool training);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    KanComposition<T>& kan(int i) { return kans_.at(static_cast<std::size_t>(i)); }
    ConvBnRelu<T>& conv(int i) { return convs_.at(static_cast<std::size_t>(i)); }

private:
    int dim_ = 0;
    std::array<KanComposition<T>, 3> kans_;
    std::array<ConvBnRelu<T>, 3> convs_;
    int grid_h_ = 0;
    int grid_w_ = 0;
};

/// Patch embedding -> layer norm -> residual KAN block -> layer norm, returned
/// as a (B, D, H/P, W/P) map. Both bottleneck blocks use this pipeline.
template <typename T>
class KanStage {
public:
    KanStage() = default;
    KanStage(int in_channels, int embed_dim, int patch_size, const SplineGrid& grid);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& map, bool training);
    Tensor<T> backward(const Tensor<T>& dmap);
    void collect(StateList<T>& out, const std::string& prefix);

    PatchEmbed<T>& embed() { return embed_; }
    KanBlock<T>& block() { return block_; }

private:
    PatchEmbed<T> embed_;
    LayerNorm<T> norm_in_;
    KanBlock<T> block_;
    LayerNorm<T> norm_out_;
};

}  // namespace dekan
