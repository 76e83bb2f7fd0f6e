#include "dekan/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dekan/error.hpp"

namespace dekan {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

void require_rank4(const Shape& s, const char* who) {
    if (s.size() != 4) throw ConfigError(std::string(who) + " expects a rank-4 tensor, got " + shape_str(s));
}

// Unfold one image (C, H, W) into columns (C*k*k, Ho*Wo).
template <typename T>
void im2col(const T* img, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::fill(row + oy * wo, row + (oy + 1) * wo, T(0));
                        continue;
                    }
                    const T* src = img + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[oy * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo, T* img) {
    std::fill(img, img + static_cast<std::size_t>(c) * h * w, T(0));
    for (int ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * ho * wo;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = img + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const ConvSpec& s) { return s.kernel == 1 && s.stride == 1 && s.padding == 0; }

}  // namespace

int conv_out_size(int in, int kernel, int stride, int padding) {
    if (stride < 1) throw ConfigError("stride must be positive");
    const int span = in + 2 * padding - kernel;
    if (span < 0) return 0;
    return span / stride + 1;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const ConvSpec& spec)
    : spec_(spec),
      weight_({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}),
      bias_(spec.bias ? Shape{spec.out_channels} : Shape{0}) {
    if (spec.in_channels < 1 || spec.out_channels < 1 || spec.kernel < 1 || spec.stride < 1 || spec.padding < 0) {
        throw ConfigError("invalid convolution spec");
    }
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
    const double fan_in = static_cast<double>(spec_.in_channels) * spec_.kernel * spec_.kernel;
    fill_normal(weight_.value, rng, 0.0, std::sqrt(2.0 / fan_in));
    bias_.value.zero();
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "conv2d");
    if (x.dim(1) != spec_.in_channels) {
        throw ConfigError("conv2d input " + shape_str(x.shape()) + " does not match kernel " +
                          shape_str(weight_.value.shape()));
    }
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = conv_out_size(h, spec_.kernel, spec_.stride, spec_.padding);
    const int wo = conv_out_size(w, spec_.kernel, spec_.stride, spec_.padding);
    if (ho < 1 || wo < 1) {
        throw ConfigError("conv2d input " + shape_str(x.shape()) + " too small for kernel " +
                          shape_str(weight_.value.shape()));
    }
    input_ = x;
    const int k = spec_.kernel;
    const int kdim = c * k * k;
    const int l = ho * wo;
    Tensor<T> y({b, spec_.out_channels, ho, wo});
    CMapRM<T> wmat(weight_.value.data(), spec_.out_channels, kdim);
    std::vector<T> col(is_pointwise(spec_) ? 0 : static_cast<std::size_t>(kdim) * l);
    for (int bi = 0; bi < b; ++bi) {
        const T* img = x.data() + static_cast<std::size_t>(bi) * c * h * w;
        const T* colp = img;
        if (!is_pointwise(spec_)) {
            im2col(img, c, h, w, k, spec_.stride, spec_.padding, ho, wo, col.data());
            colp = col.data();
        }
        MapRM<T> out(y.data() + static_cast<std::size_t>(bi) * spec_.out_channels * l, spec_.out_channels, l);
        out.noalias() = wmat * CMapRM<T>(colp, kdim, l);
        if (spec_.bias) {
            for (int o = 0; o < spec_.out_channels; ++o) out.row(o).array() += bias_.value[o];
        }
    }
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
    const int b = input_.dim(0), c = input_.dim(1), h = input_.dim(2), w = input_.dim(3);
    const int ho = dy.dim(2), wo = dy.dim(3);
    const int k = spec_.kernel;
    const int kdim = c * k * k;
    const int l = ho * wo;
    Tensor<T> dx(input_.shape());
    CMapRM<T> wmat(weight_.value.data(), spec_.out_channels, kdim);
    MapRM<T> dw(weight_.grad.data(), spec_.out_channels, kdim);
    std::vector<T> col(is_pointwise(spec_) ? 0 : static_cast<std::size_t>(kdim) * l);
    std::vector<T> dcol(is_pointwise(spec_) ? 0 : static_cast<std::size_t>(kdim) * l);
    for (int bi = 0; bi < b; ++bi) {
        const T* img = input_.data() + static_cast<std::size_t>(bi) * c * h * w;
        T* dimg = dx.data() + static_cast<std::size_t>(bi) * c * h * w;
        CMapRM<T> g(dy.data() + static_cast<std::size_t>(bi) * spec_.out_channels * l, spec_.out_channels, l);
        if (spec_.bias) {
            // Plain loop: Eigen's vectorized sum() order depends on buffer alignment.
            for (int o = 0; o < spec_.out_channels; ++o) {
                const T* row = g.data() + static_cast<std::size_t>(o) * l;
                T s = 0;
                for (int i = 0; i < l; ++i) s += row[i];
                bias_.grad[o] += s;
            }
        }
        if (is_pointwise(spec_)) {
            dw.noalias() += g * CMapRM<T>(img, kdim, l).transpose();
            MapRM<T>(dimg, kdim, l).noalias() = wmat.transpose() * g;
        } else {
            im2col(img, c, h, w, k, spec_.stride, spec_.padding, ho, wo, col.data());
            dw.noalias() += g * CMapRM<T>(col.data(), kdim, l).transpose();
            MapRM<T>(dcol.data(), kdim, l).noalias() = wmat.transpose() * g;
            col2im(dcol.data(), c, h, w, k, spec_.stride, spec_.padding, ho, wo, dimg);
        }
    }
    return dx;
}

template <typename T>
void Conv2d<T>::collect(StateList<T>& out, const std::string& prefix) {
    weight_.add_to(out, prefix + "weight");
    if (spec_.bias) bias_.add_to(out, prefix + "bias");
}

// ---------------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const NormSpec& spec)
    : spec_(spec),
      scale_({spec.channels}),
      shift_({spec.channels}),
      running_mean_({spec.channels}),
      running_var_({spec.channels}, T(1)) {
    if (spec.channels < 1 || !(spec.epsilon > 0) || !(spec.momentum > 0 && spec.momentum < 1)) {
        throw ConfigError("invalid batch-norm spec");
    }
    scale_.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
    require_rank4(x.shape(), "batch_norm2d");
    const int b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (c != spec_.channels) {
        throw ConfigError("batch_norm2d input " + shape_str(x.shape()) + " does not match " +
                          std::to_string(spec_.channels) + " channels");
    }
    const std::size_t count = static_cast<std::size_t>(b) * hw;
    if (training && count < 2) {
        throw ConfigError("batch_norm2d needs at least 2 values per channel in training mode, got input " +
                          shape_str(x.shape()));
    }
    cached_training_ = training;
    normalized_ = Tensor<T>(x.shape());
    inv_std_.assign(c, T(0));
    Tensor<T> y(x.shape());
    for (int ci = 0; ci < c; ++ci) {
        double mean = 0.0, var = 0.0;
        if (training) {
            for (int bi = 0; bi < b; ++bi) {
                const T* p = x.data() + (static_cast<std::size_t>(bi) * c + ci) * hw;
                for (int i = 0; i < hw; ++i) mean += p[i];
            }
            mean /= static_cast<double>(count);
            for (int bi = 0; bi < b; ++bi) {
                const T* p = x.data() + (static_cast<std::size_t>(bi) * c + ci) * hw;
                for (int i = 0; i < hw; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            const double unbiased = var / static_cast<double>(count - 1);
            var /= static_cast<double>(count);
            const double m = spec_.momentum;
            running_mean_[ci] = static_cast<T>((1.0 - m) * running_mean_[ci] + m * mean);
            running_var_[ci] = static_cast<T>((1.0 - m) * running_var_[ci] + m * unbiased);
        } else {
            mean = running_mean_[ci];
            var = running_var_[ci];
        }
        const double inv = 1.0 / std::sqrt(var + spec_.epsilon);
        inv_std_[ci] = static_cast<T>(inv);
        const T g = scale_.value[ci], s = shift_.value[ci];
        for (int bi = 0; bi < b; ++bi) {
            const std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * hw;
            for (int i = 0; i < hw; ++i) {
                const T xh = static_cast<T>((x[off + i] - mean) * inv);
                normalized_[off + i] = xh;
                y[off + i] = g * xh + s;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy) {
    const int b = dy.dim(0), c = dy.dim(1), hw = dy.dim(2) * dy.dim(3);
    const double count = static_cast<double>(b) * hw;
    Tensor<T> dx(dy.shape());
    for (int ci = 0; ci < c; ++ci) {
        double sum_dy = 0.0, sum_dy_xh = 0.0;
        for (int bi = 0; bi < b; ++bi) {
            const std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * hw;
            for (int i = 0; i < hw; ++i) {
                sum_dy += dy[off + i];
                sum_dy_xh += static_cast<double>(dy[off + i]) * normalized_[off + i];
            }
        }
        scale_.grad[ci] += static_cast<T>(sum_dy_xh);
        shift_.grad[ci] += static_cast<T>(sum_dy);
        const double g = scale_.value[ci];
        const double inv = inv_std_[ci];
        for (int bi = 0; bi < b; ++bi) {
            const std::size_t off = (static_cast<std::size_t>(bi) * c + ci) * hw;
            for (int i = 0; i < hw; ++i) {
                if (cached_training_) {
                    const double v = count * dy[off + i] - sum_dy - normalized_[off + i] * sum_dy_xh;
                    dx[off + i] = static_cast<T>(g * inv * v / count);
                } else {
                    dx[off + i] = static_cast<T>(g * inv * dy[off + i]);
                }
            }
        }
    }
    return dx;
}

template <typename T>
void BatchNorm2d<T>::collect(StateList<T>& out, const std::string& prefix) {
    scale_.add_to(out, prefix + "weight");
    shift_.add_to(out, prefix + "bias");
    out.push_back({prefix + "running_mean", &running_mean_, nullptr});
    out.push_back({prefix + "running_var", &running_var_, nullptr});
}

// ---------------------------------------------------------------- LayerNorm

template <typename T>
LayerNorm<T>::LayerNorm(int features, double epsilon)
    : features_(features), epsilon_(epsilon), scale_({features}), shift_({features}) {
    if (features < 2) throw ConfigError("layer_norm needs at least 2 features, got " + std::to_string(features));
    if (!(epsilon > 0)) throw ConfigError("layer_norm epsilon must be positive");
    scale_.value.fill(T(1));
}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x) {
    if (x.rank() < 1 || x.shape().back() != features_) {
        throw ConfigError("layer_norm input " + shape_str(x.shape()) + " does not end in " +
                          std::to_string(features_) + " features");
    }
    const std::size_t rows = x.size() / features_;
    normalized_ = Tensor<T>(x.shape());
    inv_std_.assign(rows, T(0));
    Tensor<T> y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* p = x.data() + r * features_;
        double mean = 0.0;
        for (int i = 0; i < features_; ++i) mean += p[i];
        mean /= features_;
        double var = 0.0;
        for (int i = 0; i < features_; ++i) var += (p[i] - mean) * (p[i] - mean);
        var /= features_;
        const double inv = 1.0 / std::sqrt(var + epsilon_);
        inv_std_[r] = static_cast<T>(inv);
        T* xh = normalized_.data() + r * features_;
        T* out = y.data() + r * features_;
        for (int i = 0; i < features_; ++i) {
            xh[i] = static_cast<T>((p[i] - mean) * inv);
            out[i] = scale_.value[i] * xh[i] + shift_.value[i];
        }
    }
    return y;
}

template <typename T>
Tensor<T> LayerNorm<T>::backward(const Tensor<T>& dy) {
    const std::size_t rows = dy.size() / features_;
    Tensor<T> dx(dy.shape());
    std::vector<double> dxh(features_);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* g = dy.data() + r * features_;
        const T* xh = normalized_.data() + r * features_;
        double sum = 0.0, sum_xh = 0.0;
        for (int i = 0; i < features_; ++i) {
            scale_.grad[i] += g[i] * xh[i];
            shift_.grad[i] += g[i];
            dxh[i] = static_cast<double>(g[i]) * scale_.value[i];
            sum += dxh[i];
            sum_xh += dxh[i] * xh[i];
        }
        const double inv = inv_std_[r];
        T* out = dx.data() + r * features_;
        for (int i = 0; i < features_; ++i) {
            out[i] = static_cast<T>(inv * (dxh[i] - sum / features_ - xh[i] * sum_xh / features_));
        }
    }
    return dx;
}

template <typename T>
void LayerNorm<T>::collect(StateList<T>& out, const std::string& prefix) {
    scale_.add_to(out, prefix + "weight");
    shift_.add_to(out, prefix + "bias");
}

// ---------------------------------------------------------------- activations

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
    output_ = x;
    for (auto& v : output_.values()) v = v > T(0) ? v : T(0);
    return output_;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = output_[i] > T(0) ? dy[i] : T(0);
    return dx;
}

template <typename T>
T silu(T x) {
    return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_grad(T x) {
    const T s = T(1) / (T(1) + std::exp(-x));
    return s * (T(1) + x * (T(1) - s));
}

template <typename T>
Tensor<T> SiLU<T>::forward(const Tensor<T>& x) {
    input_ = x;
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = silu(x[i]);
    return y;
}

template <typename T>
Tensor<T> SiLU<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * silu_grad(input_[i]);
    return dx;
}

// ---------------------------------------------------------------- Upsample2x

namespace {

struct LerpTap {
    int i0;
    int i1;
    double w1;
};

std::vector<LerpTap> upsample_taps(int in) {
    std::vector<LerpTap> taps(static_cast<std::size_t>(in) * 2);
    for (int o = 0; o < 2 * in; ++o) {
        double src = (o + 0.5) / 2.0 - 0.5;
        if (src < 0) src = 0;
        int i0 = static_cast<int>(src);
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = i0 < in - 1 ? i0 + 1 : i0;
        taps[o] = {i0, i1, src - i0};
    }
    return taps;
}

}  // namespace

template <typename T>
Tensor<T> Upsample2x<T>::forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "bilinear_upsample2x");
    in_shape_ = x.shape();
    const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const auto ty = upsample_taps(h);
    const auto tx = upsample_taps(w);
    Tensor<T> y({x.dim(0), x.dim(1), 2 * h, 2 * w});
    for (int p = 0; p < planes; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = y.data() + static_cast<std::size_t>(p) * 4 * h * w;
        for (int oy = 0; oy < 2 * h; ++oy) {
            const auto& a = ty[oy];
            for (int ox = 0; ox < 2 * w; ++ox) {
                const auto& b = tx[ox];
                const double top = src[a.i0 * w + b.i0] * (1 - b.w1) + src[a.i0 * w + b.i1] * b.w1;
                const double bot = src[a.i1 * w + b.i0] * (1 - b.w1) + src[a.i1 * w + b.i1] * b.w1;
                dst[oy * 2 * w + ox] = static_cast<T>(top * (1 - a.w1) + bot * a.w1);
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> Upsample2x<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    const int planes = in_shape_[0] * in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const auto ty = upsample_taps(h);
    const auto tx = upsample_taps(w);
    for (int p = 0; p < planes; ++p) {
        const T* g = dy.data() + static_cast<std::size_t>(p) * 4 * h * w;
        T* dst = dx.data() + static_cast<std::size_t>(p) * h * w;
        for (int oy = 0; oy < 2 * h; ++oy) {
            const auto& a = ty[oy];
            for (int ox = 0; ox < 2 * w; ++ox) {
                const auto& b = tx[ox];
                const double v = g[oy * 2 * w + ox];
                dst[a.i0 * w + b.i0] += static_cast<T>(v * (1 - a.w1) * (1 - b.w1));
                dst[a.i0 * w + b.i1] += static_cast<T>(v * (1 - a.w1) * b.w1);
                dst[a.i1 * w + b.i0] += static_cast<T>(v * a.w1 * (1 - b.w1));
                dst[a.i1 * w + b.i1] += static_cast<T>(v * a.w1 * b.w1);
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- AdaptiveAvgPool2d

namespace {

int bin_start(int i, int in, int out) { return (i * in) / out; }
int bin_end(int i, int in, int out) { return ((i + 1) * in + out - 1) / out; }

}  // namespace

template <typename T>
AdaptiveAvgPool2d<T>::AdaptiveAvgPool2d(int out_h, int out_w) {
    set_output_size(out_h, out_w);
}

template <typename T>
void AdaptiveAvgPool2d<T>::set_output_size(int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ConfigError("adaptive_avg_pool2d output size must be >= 1");
    out_h_ = out_h;
    out_w_ = out_w;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "adaptive_avg_pool2d");
    in_shape_ = x.shape();
    const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> y({x.dim(0), x.dim(1), out_h_, out_w_});
    for (int p = 0; p < planes; ++p) {
        const T* src = x.data() + static_cast<std::size_t>(p) * h * w;
        T* dst = y.data() + static_cast<std::size_t>(p) * out_h_ * out_w_;
        for (int i = 0; i < out_h_; ++i) {
            const int y0 = bin_start(i, h, out_h_), y1 = bin_end(i, h, out_h_);
            for (int j = 0; j < out_w_; ++j) {
                const int x0 = bin_start(j, w, out_w_), x1 = bin_end(j, w, out_w_);
                double sum = 0.0;
                for (int yy = y0; yy < y1; ++yy) {
                    for (int xx = x0; xx < x1; ++xx) sum += src[yy * w + xx];
                }
                dst[i * out_w_ + j] = static_cast<T>(sum / ((y1 - y0) * (x1 - x0)));
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> AdaptiveAvgPool2d<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    const int planes = in_shape_[0] * in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    for (int p = 0; p < planes; ++p) {
        const T* g = dy.data() + static_cast<std::size_t>(p) * out_h_ * out_w_;
        T* dst = dx.data() + static_cast<std::size_t>(p) * h * w;
        for (int i = 0; i < out_h_; ++i) {
            const int y0 = bin_start(i, h, out_h_), y1 = bin_end(i, h, out_h_);
            for (int j = 0; j < out_w_; ++j) {
                const int x0 = bin_start(j, w, out_w_), x1 = bin_end(j, w, out_w_);
                const T share = static_cast<T>(g[i * out_w_ + j] / static_cast<double>((y1 - y0) * (x1 - x0)));
                for (int yy = y0; yy < y1; ++yy) {
                    for (int xx = x0; xx < x1; ++xx) dst[yy * w + xx] += share;
                }
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
MaxPool2d<T>::MaxPool2d(int kernel, int stride, int padding) : kernel_(kernel), stride_(stride), padding_(padding) {
    if (kernel < 1 || stride < 1 || padding < 0 || padding >= kernel) throw ConfigError("invalid max-pool spec");
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "max_pool2d");
    in_shape_ = x.shape();
    const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const int ho = conv_out_size(h, kernel_, stride_, padding_);
    const int wo = conv_out_size(w, kernel_, stride_, padding_);
    if (ho < 1 || wo < 1) throw ConfigError("max_pool2d input " + shape_str(x.shape()) + " too small");
    Tensor<T> y({x.dim(0), x.dim(1), ho, wo});
    argmax_.assign(y.size(), 0);
    for (int p = 0; p < planes; ++p) {
        const std::size_t base = static_cast<std::size_t>(p) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t arg = base;
                for (int ky = 0; ky < kernel_; ++ky) {
                    const int iy = oy * stride_ - padding_ + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kernel_; ++kx) {
                        const int ix = ox * stride_ - padding_ + kx;
                        if (ix < 0 || ix >= w) continue;
                        const std::size_t idx = base + static_cast<std::size_t>(iy) * w + ix;
                        if (x[idx] > best) {
                            best = x[idx];
                            arg = idx;
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(p) * ho + oy) * wo + ox;
                y[o] = best;
                argmax_[o] = arg;
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& dy) {
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
}

// ---------------------------------------------------------------- ConvBnRelu

template <typename T>
ConvBnRelu<T>::ConvBnRelu(const ConvSpec& spec) : conv_(spec), bn_(NormSpec{spec.out_channels}) {}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward(const Tensor<T>& x, bool training) {
    return relu_.forward(bn_.forward(conv_.forward(x), training));
}

template <typename T>
Tensor<T> ConvBnRelu<T>::backward(const Tensor<T>& dy) {
    return conv_.backward(bn_.backward(relu_.backward(dy)));
}

template <typename T>
void ConvBnRelu<T>::collect(StateList<T>& out, const std::string& prefix) {
    conv_.collect(out, prefix + "conv.");
    bn_.collect(out, prefix + "bn.");
}

// ---------------------------------------------------------------- token reshapes

template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& map) {
    require_rank4(map.shape(), "map_to_tokens");
    const int b = map.dim(0), c = map.dim(1), n = map.dim(2) * map.dim(3);
    Tensor<T> tokens({b, n, c});
    for (int bi = 0; bi < b; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const T* src = map.data() + (static_cast<std::size_t>(bi) * c + ci) * n;
            T* dst = tokens.data() + static_cast<std::size_t>(bi) * n * c + ci;
            for (int t = 0; t < n; ++t) dst[static_cast<std::size_t>(t) * c] = src[t];
        }
    }
    return tokens;
}

template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& tokens, int h, int w) {
    if (tokens.rank() != 3) throw ConfigError("expected (B, N, D) tokens, got " + shape_str(tokens.shape()));
    const int b = tokens.dim(0), n = tokens.dim(1), c = tokens.dim(2);
    if (n != h * w) {
        throw ConfigError("token count " + std::to_string(n) + " does not form a " + std::to_string(h) + "x" +
                          std::to_string(w) + " grid");
    }
    Tensor<T> map({b, c, h, w});
    for (int bi = 0; bi < b; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            T* dst = map.data() + (static_cast<std::size_t>(bi) * c + ci) * n;
            const T* src = tokens.data() + static_cast<std::size_t>(bi) * n * c + ci;
            for (int t = 0; t < n; ++t) dst[t] = src[static_cast<std::size_t>(t) * c];
        }
    }
    return map;
}

#define DEKAN_INSTANTIATE(T)                                    \
    template class Conv2d<T>;                                   \
    template class BatchNorm2d<T>;                              \
    template class LayerNorm<T>;                                \
    template class ReLU<T>;                                     \
    template class SiLU<T>;                                     \
    template class Upsample2x<T>;                               \
    template class AdaptiveAvgPool2d<T>;                        \
    template class MaxPool2d<T>;                                \
    template class ConvBnRelu<T>;                               \
    template T silu<T>(T);                                      \
    template T silu_grad<T>(T);                                 \
    template Tensor<T> map_to_tokens<T>(const Tensor<T>&);      \
    template Tensor<T> tokens_to_map<T>(const Tensor<T>&, int, int);

DEKAN_INSTANTIATE(float)
DEKAN_INSTANTIATE(double)

}  // namespace dekan
