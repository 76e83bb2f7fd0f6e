#pragma once

#include <string>
#include <vector>

#include "dekan/tensor.hpp"

namespace dekan {

// Differentiable building blocks. Every layer caches what its backward pass
// needs during forward(); backward() consumes the upstream gradient, returns the
// gradient w.r.t. the layer input, and accumulates into parameter gradients.
// A layer instance therefore supports one in-flight forward/backward at a time.

struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    bool bias = true;
};

/// Output extent of a convolution/pooling window along one axis.
int conv_out_size(int in, int kernel, int stride, int padding);

template <typename T>
class Conv2d {
public:
    Conv2d() = default;
    explicit Conv2d(const ConvSpec& spec);

    /// He (fan-in) normal init for the kernel, zero bias.
    void init(Rng& rng);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

    void collect(StateList<T>& out, const std::string& prefix);

    const ConvSpec& spec() const { return spec_; }
    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    ConvSpec spec_;
    Param<T> weight_;  // (out, in, k, k)
    Param<T> bias_;    // (out), empty when spec_.bias is false
    Tensor<T> input_;
};

struct NormSpec {
    int channels = 1;
    double epsilon = 1e-5;
    double momentum = 0.1;
};

/// Per-channel normalization over (batch, height, width).
template <typename T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(const NormSpec& spec);

    Tensor<T> forward(const Tensor<T>& x, bool training);
    Tensor<T> backward(const Tensor<T>& dy);

    void collect(StateList<T>& out, const std::string& prefix);

    Param<T>& scale() { return scale_; }
    Param<T>& shift() { return shift_; }
    Tensor<T>& running_mean() { return running_mean_; }
    Tensor<T>& running_var() { return running_var_; }

private:
    NormSpec spec_;
    Param<T> scale_;
    Param<T> shift_;
    Tensor<T> running_mean_;
    Tensor<T> running_var_;

    bool cached_training_ = false;
    Tensor<T> normalized_;
    std::vector<T> inv_std_;
};

/// Normalization over the trailing feature axis of a (..., D) tensor.
template <typename T>
class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(int features, double epsilon = 1e-5);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

    void collect(StateList<T>& out, const std::string& prefix);

    Param<T>& scale() { return scale_; }
    Param<T>& shift() { return shift_; }

private:
    int features_ = 0;
    double epsilon_ = 1e-5;
    Param<T> scale_;
    Param<T> shift_;
    Tensor<T> normalized_;
    std::vector<T> inv_std_;
};

template <typename T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Tensor<T> output_;
};

template <typename T>
T silu(T x);
template <typename T>
T silu_grad(T x);

template <typename T>
class SiLU {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Tensor<T> input_;
};

/// Bilinear 2x upsampling with half-pixel centers (align_corners disabled).
template <typename T>
class Upsample2x {
public:
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    Shape in_shape_;
};

template <typename T>
class AdaptiveAvgPool2d {
public:
    AdaptiveAvgPool2d() = default;
    AdaptiveAvgPool2d(int out_h, int out_w);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

    void set_output_size(int out_h, int out_w);

private:
    int out_h_ = 1;
    int out_w_ = 1;
    Shape in_shape_;
};

template <typename T>
class MaxPool2d {
public:
    MaxPool2d() = default;
    MaxPool2d(int kernel, int stride, int padding);

    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy);

private:
    int kernel_ = 3;
    int stride_ = 2;
    int padding_ = 1;
    Shape in_shape_;
    std::vector<std::size_t> argmax_;
};

/// conv -> batch-norm -> relu, the unit shared by the encoders, KAN blocks and decoder.
template <typename T>
class ConvBnRelu {
public:
    ConvBnRelu() = default;
    explicit ConvBnRelu(const ConvSpec& spec);

    void init(Rng& rng) { conv_.init(rng); }
    Tensor<T> forward(const Tensor<T>& x, bool training);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    Conv2d<T>& conv() { return conv_; }
    BatchNorm2d<T>& bn() { return bn_; }

private:
    Conv2d<T> conv_;
    BatchNorm2d<T> bn_;
    ReLU<T> relu_;
};

/// (B, C, H, W) -> (B, H*W, C), tokens in row-major spatial order.
template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& map);

/// (B, N, C) -> (B, C, h, w); requires N == h * w.
template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& tokens, int h, int w);

}  // namespace dekan
