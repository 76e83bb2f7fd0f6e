#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "dekan/layers.hpp"

namespace dekan {

/// Channel count after applying a width multiplier; never below 1.
int scaled_width(int channels, double multiplier);

/// Four stride-1 conv(3x3, pad 1) + batch-norm + relu stages at full resolution.
template <typename T>
class CnnEncoder {
public:
    CnnEncoder() = default;
    CnnEncoder(int in_channels, std::array<int, 4> widths);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x, bool training);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    ConvBnRelu<T>& stage(int i) { return stages_.at(static_cast<std::size_t>(i)); }
    int out_channels() const { return widths_[3]; }

private:
    int in_channels_ = 3;
    std::array<int, 4> widths_{};
    std::array<ConvBnRelu<T>, 4> stages_;
};

/// ResNet basic block: two 3x3 convs with an identity or 1x1 projection shortcut.
template <typename T>
class BasicBlock {
public:
    BasicBlock() = default;
    BasicBlock(int in_channels, int out_channels, int stride);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x, bool training);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    bool has_projection() const { return projection_; }
    Conv2d<T>& conv1() { return conv1_; }
    Conv2d<T>& conv2() { return conv2_; }
    BatchNorm2d<T>& bn2() { return bn2_; }

private:
    bool projection_ = false;
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    ReLU<T> relu1_;
    Conv2d<T> conv2_;
    BatchNorm2d<T> bn2_;
    Conv2d<T> down_conv_;
    BatchNorm2d<T> down_bn_;
    ReLU<T> relu_out_;
};

/// ResNet-18 layout: 7x7/2 stem, 3x3/2 max-pool, four stages of two basic
/// blocks; total downsampling x32. State names follow the torchvision layout
/// (conv1, bn1, layerN.M.conv1, layerN.M.downsample.0, ...).
template <typename T>
class ResNetEncoder {
public:
    static constexpr int kDownsampling = 32;

    ResNetEncoder() = default;
    ResNetEncoder(int in_channels, std::array<int, 4> widths);

    void init(Rng& rng);
    Tensor<T> forward(const Tensor<T>& x, bool training);
    Tensor<T> backward(const Tensor<T>& dy);
    void collect(StateList<T>& out, const std::string& prefix);

    BasicBlock<T>& block(int stage, int index) {
        return blocks_.at(static_cast<std::size_t>(stage * 2 + index));
    }
    int out_channels() const { return widths_[3]; }

private:
    int in_channels_ = 3;
    std::array<int, 4> widths_{};
    Conv2d<T> stem_conv_;
    BatchNorm2d<T> stem_bn_;
    ReLU<T> stem_relu_;
    MaxPool2d<T> stem_pool_;
    std::array<BasicBlock<T>, 8> blocks_;
};

/// f_res + adaptive_avg_pool(f_cnn) to the spatial size of f_res.
template <typename T>
class FeatureFusion {
public:
    Tensor<T> forward(const Tensor<T>& f_res, const Tensor<T>& f_cnn);
    /// Returns (d f_res, d f_cnn).
    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dy);

private:
    AdaptiveAvgPool2d<T> pool_;
};

}  // namespace dekan
