#include "dekan/encoders.hpp"

#include <cmath>

#include "dekan/error.hpp"

namespace dekan {

int scaled_width(int channels, double multiplier) {
    if (!(multiplier > 0)) throw ConfigError("width multiplier must be positive");
    const int c = static_cast<int>(std::lround(channels * multiplier));
    return c < 1 ? 1 : c;
}

namespace {


template <typename T>
void check_input(const Tensor<T>& x, int channels, const char* who) {
    if (x.rank() != 4 || x.dim(1) != channels) {
        throw ConfigError(std::string(who) + " expects (B, " + std::to_string(channels) + ", H, W) input, got " +
                          shape_str(x.shape()));
    }
}

}  // namespace

// ---------------------------------------------------------------- CnnEncoder

template <typename T>
CnnEncoder<T>::CnnEncoder(int in_channels, std::array<int, 4> widths) : in_channels_(in_channels), widths_(widths) {
    int prev = in_channels;
    for (std::size_t i = 0; i < 4; ++i) {
        stages_[i] = ConvBnRelu<T>(ConvSpec{prev, widths[i], 3, 1, 1, true});
        prev = widths[i];
    }
}

template <typename T>
void CnnEncoder<T>::init(Rng& rng) {
    for (auto& s : stages_) s.init(rng);
}

template <typename T>
Tensor<T> CnnEncoder<T>::forward(const Tensor<T>& x, bool training) {
    check_input(x, in_channels_, "CNN encoder");
    Tensor<T> h = x;
    for (auto& s : stages_) h = s.forward(h, training);
    return h;
}

template <typename T>
Tensor<T> CnnEncoder<T>::backward(const Tensor<T>& dy) {
    Tensor<T> g = dy;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = it->backward(g);
    return g;
}

template <typename T>
void CnnEncoder<T>::collect(StateList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < 4; ++i) stages_[i].collect(out, prefix + "layer" + std::to_string(i + 1) + ".");
}

// ---------------------------------------------------------------- BasicBlock

template <typename T>
BasicBlock<T>::BasicBlock(int in_channels, int out_channels, int stride)
    : projection_(stride != 1 || in_channels != out_channels),
      conv1_(ConvSpec{in_channels, out_channels, 3, stride, 1, false}),
      bn1_(NormSpec{out_channels}),
      conv2_(ConvSpec{out_channels, out_channels, 3, 1, 1, false}),
      bn2_(NormSpec{out_channels}) {
    if (projection_) {
        down_conv_ = Conv2d<T>(ConvSpec{in_channels, out_channels, 1, stride, 0, false});
        down_bn_ = BatchNorm2d<T>(NormSpec{out_channels});
    }
}

template <typename T>
void BasicBlock<T>::init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (projection_) down_conv_.init(rng);
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x, bool training) {
    Tensor<T> h = relu1_.forward(bn1_.forward(conv1_.forward(x), training));
    h = bn2_.forward(conv2_.forward(h), training);
    if (projection_) {
        h += down_bn_.forward(down_conv_.forward(x), training);
    } else {
        h += x;
    }
    return relu_out_.forward(h);
}

template <typename T>
Tensor<T> BasicBlock<T>::backward(const Tensor<T>& dy) {
    const Tensor<T> g = relu_out_.backward(dy);
    Tensor<T> dx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(g)))));
    if (projection_) {
        dx += down_conv_.backward(down_bn_.backward(g));
    } else {
        dx += g;
    }
    return dx;
}

template <typename T>
void BasicBlock<T>::collect(StateList<T>& out, const std::string& prefix) {
    conv1_.collect(out, prefix + "conv1.");
    bn1_.collect(out, prefix + "bn1.");
    conv2_.collect(out, prefix + "conv2.");
    bn2_.collect(out, prefix + "bn2.");
    if (projection_) {
        down_conv_.collect(out, prefix + "downsample.0.");
        down_bn_.collect(out, prefix + "downsample.1.");
    }
}

// ---------------------------------------------------------------- ResNetEncoder

template <typename T>
ResNetEncoder<T>::ResNetEncoder(int in_channels, std::array<int, 4> widths)
    : in_channels_(in_channels),
      widths_(widths),
      stem_conv_(ConvSpec{in_channels, widths[0], 7, 2, 3, false}),
      stem_bn_(NormSpec{widths[0]}),
      stem_pool_(3, 2, 1) {
    int prev = widths[0];
    for (std::size_t s = 0; s < 4; ++s) {
        const int stride = s == 0 ? 1 : 2;
        blocks_[s * 2] = BasicBlock<T>(prev, widths[s], stride);
        blocks_[s * 2 + 1] = BasicBlock<T>(widths[s], widths[s], 1);
        prev = widths[s];
    }
}

template <typename T>
void ResNetEncoder<T>::init(Rng& rng) {
    stem_conv_.init(rng);
    for (auto& b : blocks_) b.init(rng);
}

template <typename T>
Tensor<T> ResNetEncoder<T>::forward(const Tensor<T>& x, bool training) {
    check_input(x, in_channels_, "residual encoder");
    if (x.dim(2) % kDownsampling != 0 || x.dim(3) % kDownsampling != 0) {
        throw ConfigError("residual encoder input " + shape_str(x.shape()) + " must have H and W divisible by 32");
    }
    Tensor<T> h = stem_pool_.forward(stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x), training)));
    for (auto& b : blocks_) h = b.forward(h, training);
    return h;
}

template <typename T>
Tensor<T> ResNetEncoder<T>::backward(const Tensor<T>& dy) {
    Tensor<T> g = dy;
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    return stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(stem_pool_.backward(g))));
}

template <typename T>
void ResNetEncoder<T>::collect(StateList<T>& out, const std::string& prefix) {
    stem_conv_.collect(out, prefix + "conv1.");
    stem_bn_.collect(out, prefix + "bn1.");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        blocks_[i].collect(out, prefix + "layer" + std::to_string(i / 2 + 1) + "." + std::to_string(i % 2) + ".");
    }
}

// ---------------------------------------------------------------- FeatureFusion

template <typename T>
Tensor<T> FeatureFusion<T>::forward(const Tensor<T>& f_res, const Tensor<T>& f_cnn) {
    if (f_res.rank() != 4 || f_cnn.rank() != 4 || f_res.dim(0) != f_cnn.dim(0) || f_res.dim(1) != f_cnn.dim(1)) {
        throw ConfigError("feature fusion: residual features " + shape_str(f_res.shape()) +
                          " incompatible with CNN features " + shape_str(f_cnn.shape()));
    }
    pool_.set_output_size(f_res.dim(2), f_res.dim(3));
    Tensor<T> merged = pool_.forward(f_cnn);
    merged += f_res;
    return merged;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> FeatureFusion<T>::backward(const Tensor<T>& dy) {
    return {dy, pool_.backward(dy)};
}

template class CnnEncoder<float>;
template class CnnEncoder<double>;
template class BasicBlock<float>;
template class BasicBlock<double>;
template class ResNetEncoder<float>;
template class ResNetEncoder<double>;
template class FeatureFusion<float>;
template class FeatureFusion<double>;

}  // namespace dekan
