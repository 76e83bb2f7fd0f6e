#pragma once

#include <cstdint>
#include <filesystem>
#include <opencv2/core.hpp>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dekan/model.hpp"
#include "dekan/tensor.hpp"

namespace dekan {

/// Image (8-bit, 3 channels, BGR) with its binary mask (8-bit, 1 channel, {0, 255}).
struct SamplePair {
    std::string id;
    cv::Mat image;
    cv::Mat mask;
};

/// Photometric jitter fed to the residual encoder during training. Magnitudes
/// are on the 8-bit scale except brightness/contrast (fractions) and hue (degrees).
struct AugmentSpec {
    double brightness_limit = 0.2;
    double contrast_limit = 0.2;
    int blur_min = 3;  // odd kernel sizes; 1 disables blurring
    int blur_max = 7;
    double hue_shift_limit = 10.0;
    double sat_shift_limit = 20.0;
    double val_shift_limit = 20.0;
    double probability = 1.0;
    std::uint64_t seed = 1234;

    /// All limits zero and blur disabled: augment() returns its input unchanged.
    static AugmentSpec none();
    void validate() const;
};

/// Reads root/images/<id>.png and root/masks/<id>.png, matched by id and sorted
/// lexicographically. Masks are binarized at 128. A missing root or an empty
/// layout yields an empty list.
std::vector<SamplePair> load_dataset(const std::filesystem::path& root);

/// Writes pairs into the root/images, root/masks layout.
void save_dataset(const std::vector<SamplePair>& pairs, const std::filesystem::path& root);

/// Brightness/contrast, Gaussian blur, then HSV shifts; geometry is never changed.
cv::Mat augment(const cv::Mat& image, const AugmentSpec& spec, Rng& rng);

/// Seeded shuffle then prefix split; round(n * train_fraction) samples (at least
/// one on each side) go to the first list.
std::pair<std::vector<SamplePair>, std::vector<SamplePair>> split_dataset(const std::vector<SamplePair>& pairs,
                                                                          double train_fraction,
                                                                          std::uint64_t seed);

/// Toy panoramic radiographs: two arcs of overlapping bright ellipses ("teeth")
/// on a textured dark background. Sample i depends only on (seed, i).
std::vector<SamplePair> synth_generate(int count, int image_size, std::uint64_t seed);
SamplePair synth_sample(int index, int image_size, std::uint64_t seed);

struct TrainingBatch {
    Tensor<float> x_aug;
    Tensor<float> x_orig;
    Tensor<float> target;  // (B, 1, H, W) in {0, 1}
};

/// Resizes each pair to (height, width) (bilinear images, nearest masks),
/// augments a copy for the residual stream, and normalizes to (v/255 - 0.5) / 0.5.
TrainingBatch make_training_batch(std::span<const SamplePair* const> pairs, const AugmentSpec& spec, int height,
                                  int width, Rng& rng);

/// Unaugmented inputs and targets for validation/evaluation.
TrainingBatch make_eval_batch(std::span<const SamplePair* const> pairs, int height, int width);

/// Normalized (1, 3, H, W) tensor of one image, resized to (height, width).
Tensor<float> image_to_tensor(const cv::Mat& image, int height, int width);

/// Nearest-neighbour resize of a {0, 255} mask; the result stays binary.
cv::Mat resize_mask(const cv::Mat& mask, int height, int width);

/// {0, 1} labels of a {0, 255} mask.
std::vector<std::uint8_t> mask_labels(const cv::Mat& mask);

}  // namespace dekan
