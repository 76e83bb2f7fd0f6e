#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dekan/checkpoint.hpp"
#include "dekan/data.hpp"
#include "dekan/metrics.hpp"
#include "dekan/model.hpp"

namespace dekan {

struct TrainConfig {
    int batch_size = 32;
    double lr = 1e-4;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double min_lr = 1e-5;
    int epochs = 200;
    int early_stop_patience = 20;
    std::uint64_t seed = 42;
    double train_fraction = 0.8;
    // Evaluate the training split in inference mode after every epoch (train_dice column).
    bool log_train_dice = true;
    ModelConfig model{};
    AugmentSpec augment{};
    std::string data_root;
    std::string output_dir = "runs/latest";
    // Optional parameter table for the residual encoder (see docs/checkpoint_format.md).
    std::string import_weights;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_dice = 0.0;
    double train_dice = 0.0;
};

std::string format_log(const std::vector<EpochLog>& log);

struct TrainResult {
    Checkpoint best;
    Checkpoint last;
    std::vector<EpochLog> log;
    bool early_stopped = false;
};

/// Trains from scratch on explicit splits. Progress lines go to `progress` when given.
TrainResult train(const TrainConfig& config, const std::vector<SamplePair>& train_set,
                  const std::vector<SamplePair>& val_set, std::ostream* progress = nullptr);

/// Loads config.data_root, splits it, trains, and writes best.ckpt, last.ckpt
/// and train_log.csv into config.output_dir.
TrainResult train(const TrainConfig& config, std::ostream* progress = nullptr);

struct SampleMetrics {
    std::string id;
    MetricReport metrics;
};

struct EvalReport {
    MetricReport overall;
    ConfusionCounts counts{2};
    std::vector<SampleMetrics> samples;
    double loss = 0.0;  // mean combined loss

    /// "key = value" lines.
    std::string text() const;
    /// Header plus one `id,miou,dice,accuracy,recall` row per sample.
    std::string csv() const;
};

/// Inference-mode pass over `samples` (which must match the model's image size);
/// counts are accumulated globally across samples.
EvalReport evaluate(Dekan<float>& model, const std::vector<SamplePair>& samples, double threshold = 0.5,
                    int batch_size = 8);

struct Prediction {
    cv::Mat mask;     // 8-bit {0, 255}, input resolution
    cv::Mat overlay;  // input with the mask alpha-blended at 0.4
};

/// Resizes to the model input, runs inference, and maps the mask back (nearest).
Prediction predict(Dekan<float>& model, const cv::Mat& image, double threshold = 0.5);

/// Writes <stem>_mask.png and <stem>_overlay.png into out_dir; returns the mask path.
std::filesystem::path predict_to_files(Dekan<float>& model, const std::filesystem::path& image_path,
                                       const std::filesystem::path& out_dir, double threshold = 0.5);

}  // namespace dekan
