#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dekan/model.hpp"
#include "dekan/optim.hpp"

namespace dekan {

inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'K', 'A', 'N', 'C', 'K', 'P'};
inline constexpr char kParamTableMagic[8] = {'D', 'E', 'K', 'A', 'N', 'T', 'B', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
    std::string name;
    Shape shape;
    std::vector<float> values;

    bool operator==(const TensorRecord&) const = default;
};

/// Everything needed to rebuild a trained network and continue its optimizer.
struct Checkpoint {
    ModelConfig model;
    std::vector<TensorRecord> state;     // parameters and batch-norm buffers, model order
    std::vector<TensorRecord> momentum;  // SGD buffers, empty before the first step
    std::int32_t epoch = -1;
    double best_val_loss = 0.0;
    std::string rng_state;

    bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError (bad magic/trailing bytes), CheckpointVersionError or
/// CheckpointTruncatedError; shapes are checked against the stored config
/// (CheckpointShapeError).
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture_checkpoint(Dekan<float>& model, const Sgd<float>* optimizer, int epoch, double best_val_loss,
                              std::string rng_state);

/// Copies every tensor into `model`; throws CheckpointShapeError naming the first
/// parameter whose name or shape disagrees with the model.
void restore_model(const Checkpoint& ckpt, Dekan<float>& model);

/// Builds a model from the checkpoint's config and restores its state.
Dekan<float> model_from_checkpoint(const Checkpoint& ckpt);

/// Flat (name -> shape + float32) table; used for external residual-encoder weights.
std::string encode_param_table(const std::vector<TensorRecord>& records);
std::vector<TensorRecord> decode_param_table(std::string_view bytes);

/// Loads torchvision-named ResNet-18 tensors (conv1.weight, layer1.0.bn1.running_mean,
/// ...) into the residual encoder. Unknown or missing names and shape mismatches throw.
void import_residual_weights(const std::filesystem::path& path, Dekan<float>& model);

}  // namespace dekan
