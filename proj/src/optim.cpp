#include "dekan/optim.hpp"

#include <cmath>
#include <numbers>

#include "dekan/error.hpp"

namespace dekan {

double cosine_lr(int epoch, int epochs, double initial_lr, double min_lr) {
    if (epochs < 1 || epoch < 0 || epoch >= epochs) {
        throw InputError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(epochs) + ")");
    }
    if (epochs == 1) return initial_lr;
    const double phase = std::numbers::pi * epoch / (epochs - 1);
    return min_lr + 0.5 * (initial_lr - min_lr) * (1.0 + std::cos(phase));
}

template <typename T>
void Sgd<T>::step(const StateList<T>& state, double lr) {
    for (const auto& e : state) {
        if (e.trainable() && !e.grad->all_finite()) {
            throw NumericalError("non-finite gradient in parameter " + e.name);
        }
    }
    if (names_.empty()) {
        for (const auto& e : state) {
            if (!e.trainable()) continue;
            names_.push_back(e.name);
            buffers_.emplace_back(e.value->shape());
        }
    }
    std::size_t k = 0;
    for (const auto& e : state) {
        if (!e.trainable()) continue;
        if (k >= names_.size() || names_[k] != e.name) {
            throw ConfigError("optimizer state does not match parameter " + e.name);
        }
        auto& v = buffers_[k++];
        auto& theta = *e.value;
        const auto& g = *e.grad;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const T vi = static_cast<T>(momentum_ * v[i] + (g[i] + weight_decay_ * theta[i]));
            v[i] = vi;
            theta[i] = static_cast<T>(theta[i] - lr * vi);
        }
    }
}

template <typename T>
void Sgd<T>::set_buffers(std::vector<std::string> names, std::vector<Tensor<T>> buffers) {
    if (names.size() != buffers.size()) throw ConfigError("momentum buffer names and tensors differ in count");
    names_ = std::move(names);
    buffers_ = std::move(buffers);
}

bool EarlyStopping::update(double val_loss) {
    const int epoch = epoch_++;
    if (val_loss < best_) {
        best_ = val_loss;
        best_epoch_ = epoch;
        stale_ = 0;
        return true;
    }
    ++stale_;
    return false;
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace dekan
