#include "dekan/model.hpp"

#include <algorithm>
#include <cmath>

#include "dekan/error.hpp"

namespace dekan {

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

int log2_exact(int v) {
    int n = 0;
    while ((1 << n) < v) ++n;
    return n;
}

}  // namespace

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.image_h = 320;
    c.image_w = 320;
    c.embed_dim = 512;
    c.width_multiplier = 1.0;
    return c;
}

void ModelConfig::validate() const {
    const auto size = std::to_string(image_h) + "x" + std::to_string(image_w);
    if (image_h < 32 || image_w < 32 || image_h % 32 != 0 || image_w % 32 != 0) {
        throw ConfigError("image size " + size + " must be a positive multiple of 32");
    }
    if (!is_power_of_two(patch_size)) {
        throw ConfigError("patch size " + std::to_string(patch_size) + " must be a power of two");
    }
    if ((image_h / 32) % patch_size != 0 || (image_w / 32) % patch_size != 0) {
        throw ConfigError("fused feature map of image " + size + " (" + std::to_string(image_h / 32) + "x" +
                          std::to_string(image_w / 32) + ") is not divisible by patch size " +
                          std::to_string(patch_size));
    }
    if (in_channels < 1 || embed_dim < 2 || classes < 1) {
        throw ConfigError("in_channels and classes must be >= 1 and embed_dim >= 2");
    }
    if (!(width_multiplier > 0)) throw ConfigError("width multiplier must be positive");
    grid.validate();
    if (!decoder_channels.empty()) {
        if (static_cast<int>(decoder_channels.size()) != decoder_stage_count()) {
            throw ConfigError("decoder schedule has " + std::to_string(decoder_channels.size()) +
                              " stages but the network needs " + std::to_string(decoder_stage_count()));
        }
        for (int c : decoder_channels) {
            if (c < 2) throw ConfigError("decoder stage widths must be >= 2 (layer-normalized bottleneck)");
        }
    }
}

std::array<int, 4> ModelConfig::encoder_widths() const {
    return {scaled_width(64, width_multiplier), scaled_width(128, width_multiplier),
            scaled_width(256, width_multiplier), scaled_width(512, width_multiplier)};
}

int ModelConfig::decoder_stage_count() const { return log2_exact(32 * patch_size); }

std::vector<int> ModelConfig::decoder_schedule() const {
    if (!decoder_channels.empty()) return decoder_channels;
    std::vector<int> out;
    int base = 256;
    for (int i = 0; i < decoder_stage_count(); ++i) {
        out.push_back(std::max(scaled_width(base, width_multiplier), std::min(base, 8)));
        base = std::max(base / 2, 2);
    }
    return out;
}

template <typename T>
Dekan<T>::Dekan(const ModelConfig& config) : config_(config) {
    config.validate();
    const auto widths = config.encoder_widths();
    const auto schedule = config.decoder_schedule();
    res_ = ResNetEncoder<T>(config.in_channels, widths);
    cnn_ = CnnEncoder<T>(config.in_channels, widths);
    stage1_ = KanStage<T>(widths[3], config.embed_dim, config.patch_size, config.grid);
    int prev = config.embed_dim;
    for (int c : schedule) {
        decoder_.emplace_back(prev, c);
        prev = c;
    }
    stage2_ = KanStage<T>(schedule[0], schedule[0], config.patch_size, config.grid);
    restore_.resize(static_cast<std::size_t>(log2_exact(config.patch_size)));
    head_ = SegmentationHead<T>(schedule.back(), config.classes, config.image_h, config.image_w);

    Rng rng(config.seed);
    res_.init(rng);
    cnn_.init(rng);
    stage1_.init(rng);
    for (auto& d : decoder_) d.init(rng);
    stage2_.init(rng);
    head_.init(rng);
}

template <typename T>
Tensor<T> Dekan<T>::forward(const Tensor<T>& x_aug, const Tensor<T>& x_orig, bool training) {
    if (!x_aug.same_shape(x_orig)) {
        throw InputError("augmented input " + shape_str(x_aug.shape()) + " and original input " +
                         shape_str(x_orig.shape()) + " differ in shape");
    }
    if (x_aug.rank() != 4 || x_aug.dim(1) != config_.in_channels || x_aug.dim(2) != config_.image_h ||
        x_aug.dim(3) != config_.image_w) {
        throw ConfigError("input " + shape_str(x_aug.shape()) + " does not match configured image size " +
                          std::to_string(config_.image_h) + "x" + std::to_string(config_.image_w) + " with " +
                          std::to_string(config_.in_channels) + " channels");
    }
    const Tensor<T> merged = fusion_.forward(res_.forward(x_aug, training), cnn_.forward(x_orig, training));
    const Tensor<T> up = decoder_[0].forward(stage1_.forward(merged, training), training);
    Tensor<T> refined = stage2_.forward(up, training);
    for (auto& r : restore_) refined = r.forward(refined);
    Tensor<T> f = up;
    f += refined;
    for (std::size_t i = 1; i < decoder_.size(); ++i) f = decoder_[i].forward(f, training);
    return head_.forward(f);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Dekan<T>::backward(const Tensor<T>& dlogits) {
    Tensor<T> g = head_.backward(dlogits);
    for (std::size_t i = decoder_.size() - 1; i >= 1; --i) g = decoder_[i].backward(g);
    Tensor<T> g2 = g;
    for (auto it = restore_.rbegin(); it != restore_.rend(); ++it) g2 = it->backward(g2);
    g += stage2_.backward(g2);
    const Tensor<T> dmerged = stage1_.backward(decoder_[0].backward(g));
    auto [dres, dcnn] = fusion_.backward(dmerged);
    return {res_.backward(dres), cnn_.backward(dcnn)};
}

template <typename T>
StateList<T> Dekan<T>::state() {
    StateList<T> out;
    res_.collect(out, "res_encoder.");
    cnn_.collect(out, "cnn_encoder.");
    stage1_.collect(out, "bottleneck.block1.");
    for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect(out, "decoder." + std::to_string(i) + ".");
    stage2_.collect(out, "bottleneck.block2.");
    head_.collect(out, "head.");
    return out;
}

template <typename T>
std::size_t Dekan<T>::parameter_count() {
    return count_parameters(state());
}

template <typename T>
void Dekan<T>::zero_grad() {
    zero_grads(state());
}

template <typename T>
std::vector<LabelMask> logits_to_masks(const Tensor<T>& logits, double threshold) {
    if (logits.rank() != 4) throw ConfigError("expected (B, C, H, W) logits, got " + shape_str(logits.shape()));
    const int b = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    std::vector<LabelMask> masks;
    for (int bi = 0; bi < b; ++bi) {
        LabelMask m{h, w, std::vector<std::uint8_t>(hw, 0)};
        const T* p = logits.data() + static_cast<std::size_t>(bi) * c * hw;
        for (std::size_t i = 0; i < hw; ++i) {
            if (c == 1) {
                const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(p[i])));
                m.labels[i] = prob >= threshold ? 1 : 0;
            } else {
                int best = 0;
                for (int ci = 1; ci < c; ++ci) {
                    if (p[ci * hw + i] > p[best * hw + i]) best = ci;
                }
                m.labels[i] = static_cast<std::uint8_t>(best);
            }
        }
        masks.push_back(std::move(m));
    }
    return masks;
}

template <typename T>
std::vector<LabelMask> dekan_infer(Dekan<T>& model, const Tensor<T>& x, double threshold) {
    return logits_to_masks(model.forward(x, x, false), threshold);
}

template class Dekan<float>;
template class Dekan<double>;
template std::vector<LabelMask> logits_to_masks(const Tensor<float>&, double);
template std::vector<LabelMask> logits_to_masks(const Tensor<double>&, double);
template std::vector<LabelMask> dekan_infer(Dekan<float>&, const Tensor<float>&, double);
template std::vector<LabelMask> dekan_infer(Dekan<double>&, const Tensor<double>&, double);

}  // namespace dekan
