#pragma once

#include <string>

#include "dekan/layers.hpp"

namespace dekan {

/// Bilinear 2x upsample, then two conv(3x3) + batch-norm + relu refinements.
template <typename T>
class DecoderStage {
public:
    DecoderStage() = default;
    DecoderStage(int in_channels, int out_channels);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x, bool training);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    ConvBnRelu<T>& conv(int i) { return i == 0 ? conv1_ : conv2_; }

private:
    int in_ = 0;
    int out_ = 0;
    Upsample2x<T> up_;
    ConvBnRelu<T> conv1_;
    ConvBnRelu<T> conv2_;
};

/// 1x1 convolution to per-pixel logits; no activation.
template <typename T>
class SegmentationHead {
public:
    SegmentationHead() = default;
    SegmentationHead(int in_channels, int classes, int image_h, int image_w);

    void init(Rng& rng) { conv_.init(rng); }
    Tensor<T> forward(const Tensor<T>& x);
    Tensor<T> backward(const Tensor<T>& dy) { return conv_.backward(dy); }
    void collect(StateList<T>& out, const std::string& prefix) { conv_.collect(out, prefix); }

    Conv2d<T>& conv() { return conv_; }

private:
    Conv2d<T> conv_;
    int image_h_ = 0;
    int image_w_ = 0;
};

}  // namespace dekan
