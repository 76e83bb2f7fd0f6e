#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dekan/tensor.hpp"

namespace dekan {

/// min_lr + (initial_lr - min_lr) * (1 + cos(pi * epoch / (epochs - 1))) / 2 for 0 <= epoch < epochs.
double cosine_lr(int epoch, int epochs, double initial_lr, double min_lr);

/// SGD with classical momentum; weight decay enters the buffer as lambda * theta:
///   v <- momentum * v + (g + weight_decay * theta);  theta <- theta - lr * v
template <typename T>
class Sgd {
public:
    Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

    /// Updates every trainable entry of `state`. Throws NumericalError naming
    /// the first parameter with a non-finite gradient (nothing is modified then).
    void step(const StateList<T>& state, double lr);

    /// Momentum buffers by parameter name, in state order; empty before the first step.
    const std::vector<std::string>& buffer_names() const { return names_; }
    const std::vector<Tensor<T>>& buffers() const { return buffers_; }
    void set_buffers(std::vector<std::string> names, std::vector<Tensor<T>> buffers);

private:
    double momentum_;
    double weight_decay_;
    std::vector<std::string> names_;
    std::vector<Tensor<T>> buffers_;
};

/// Stops once validation loss has failed to improve for `patience` consecutive epochs.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}

    /// Records one epoch; returns true when it is a new best.
    bool update(double val_loss);
    bool should_stop() const { return stale_ >= patience_; }
    double best() const { return best_; }
    int best_epoch() const { return best_epoch_; }

    void restore(double best, int best_epoch, int stale) {
        best_ = best;
        best_epoch_ = best_epoch;
        stale_ = stale;
    }
    int stale() const { return stale_; }

private:
    int patience_;
    int epoch_ = 0;
    int stale_ = 0;
    int best_epoch_ = -1;
    double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace dekan
