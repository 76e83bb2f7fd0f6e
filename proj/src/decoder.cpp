#include "dekan/decoder.hpp"

#include "dekan/error.hpp"

namespace dekan {

template <typename T>
DecoderStage<T>::DecoderStage(int in_channels, int out_channels)
    : in_(in_channels),
      out_(out_channels),
      conv1_(ConvSpec{in_channels, out_channels, 3, 1, 1, true}),
      conv2_(ConvSpec{out_channels, out_channels, 3, 1, 1, true}) {}

template <typename T>
void DecoderStage<T>::init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
}

template <typename T>
Tensor<T> DecoderStage<T>::forward(const Tensor<T>& x, bool training) {
    if (x.rank() != 4 || x.dim(1) != in_) {
        throw ConfigError("decoder stage expects " + std::to_string(in_) + " channels, got " + shape_str(x.shape()));
    }
    return conv2_.forward(conv1_.forward(up_.forward(x), training), training);
}

template <typename T>
Tensor<T> DecoderStage<T>::backward(const Tensor<T>& dy) {
    return up_.backward(conv1_.backward(conv2_.backward(dy)));
}

template <typename T>
void DecoderStage<T>::collect(StateList<T>& out, const std::string& prefix) {
    conv1_.collect(out, prefix + "conv1.");
    conv2_.collect(out, prefix + "conv2.");
}

template <typename T>
SegmentationHead<T>::SegmentationHead(int in_channels, int classes, int image_h, int image_w)
    : conv_(ConvSpec{in_channels, classes, 1, 1, 0, true}), image_h_(image_h), image_w_(image_w) {
    if (classes < 1) throw ConfigError("segmentation head needs at least one output channel");
}

template <typename T>
Tensor<T> SegmentationHead<T>::forward(const Tensor<T>& x) {
    if (x.rank() != 4 || (image_h_ > 0 && (x.dim(2) != image_h_ || x.dim(3) != image_w_))) {
        throw ConfigError("segmentation head input " + shape_str(x.shape()) + " does not match image size " +
                          std::to_string(image_h_) + "x" + std::to_string(image_w_));
    }
    return conv_.forward(x);
}

template class DecoderStage<float>;
template class DecoderStage<double>;
template class SegmentationHead<float>;
template class SegmentationHead<double>;

}  // namespace dekan
