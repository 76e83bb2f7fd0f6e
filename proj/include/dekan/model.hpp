#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dekan/decoder.hpp"
#include "dekan/encoders.hpp"
#include "dekan/kan.hpp"

namespace dekan {

/// Every architectural hyperparameter of the network.
struct ModelConfig {
    int image_h = 64;
    int image_w = 64;
    int in_channels = 3;
    int patch_size = 1;
    int embed_dim = 64;
    SplineGrid grid{};
    double width_multiplier = 0.125;
    // Output channels of each decoder stage; empty selects the default halving
    // schedule (see decoder_schedule()).
    std::vector<int> decoder_channels;
    int classes = 1;
    std::uint64_t seed = 42;

    /// 64x64 images, 1/8 widths, P=1, D=64.
    static ModelConfig desk();
    /// 320x320 images, full widths (64..512), P=1, D=512.
    static ModelConfig full();

    void validate() const;

    std::array<int, 4> encoder_widths() const;
    int decoder_stage_count() const;
    std::vector<int> decoder_schedule() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Dual-encoder segmentation network with a two-block KAN bottleneck.
///
///   merged     = resnet(x_aug) + avgpool(cnn(x_orig))
///   k1         = LN(block1(LN(embed1(merged))))           as a map
///   up         = decoder[0](k1)
///   bottleneck = up + restore(LN(block2(LN(embed2(up)))))
///   logits     = head(decoder[1..](bottleneck))
///
/// `restore` re-applies bilinear 2x upsampling log2(P) times so the second
/// block's output lines up with `up` when P > 1.
template <typename T>
class Dekan {
public:
    explicit Dekan(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    Tensor<T> forward(const Tensor<T>& x_aug, const Tensor<T>& x_orig, bool training);
    /// Propagates d(loss)/d(logits); returns gradients for (x_aug, x_orig).
    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dlogits);

    /// Named parameters and buffers in a fixed order.
    StateList<T> state();
    std::size_t parameter_count();
    void zero_grad();

    ResNetEncoder<T>& res_encoder() { return res_; }
    CnnEncoder<T>& cnn_encoder() { return cnn_; }
    KanStage<T>& block1() { return stage1_; }
    KanStage<T>& block2() { return stage2_; }
    DecoderStage<T>& decoder(int i) { return decoder_.at(static_cast<std::size_t>(i)); }
    SegmentationHead<T>& head() { return head_; }

private:
    ModelConfig config_;
    ResNetEncoder<T> res_;
    CnnEncoder<T> cnn_;
    FeatureFusion<T> fusion_;
    KanStage<T> stage1_;
    std::vector<DecoderStage<T>> decoder_;
    KanStage<T> stage2_;
    std::vector<Upsample2x<T>> restore_;
    SegmentationHead<T> head_;
};

/// Per-pixel class labels for one image, row-major.
struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;
};

/// Binary (C_Y = 1): sigmoid(logit) >= threshold, boundary inclusive.
/// Multi-class: argmax over channels.
template <typename T>
std::vector<LabelMask> logits_to_masks(const Tensor<T>& logits, double threshold = 0.5);

/// Inference contract: both encoders see the same unaugmented input, eval mode.
template <typename T>
std::vector<LabelMask> dekan_infer(Dekan<T>& model, const Tensor<T>& x, double threshold = 0.5);

}  // namespace dekan
