#pragma once

#include <span>

#include "dekan/tensor.hpp"

namespace dekan {

/// Smoothing constant of the Dice terms.
inline constexpr double kDiceSmoothing = 1e-5;

struct LossValue {
    double total = 0.0;
    double bce_part = 0.0;
    double dice_part = 0.0;
};

// Each loss reduces over every pixel of the batch. When `dlogits` is given,
// weight * d(loss)/d(logits) is added into it (it must match logits' shape).

/// Mean binary cross-entropy on logits, evaluated as max(x,0) - x*y + log(1 + exp(-|x|)).
template <typename T>
double bce_loss(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits = nullptr, double weight = 1.0);

/// 1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps) with p = sigmoid(logits).
template <typename T>
double dice_loss(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits = nullptr,
                 double weight = 1.0);

/// (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps) for probabilities or hard masks.
double dice_coefficient(std::span<const double> pred, std::span<const double> target,
                        double eps = kDiceSmoothing);

/// 0.5 * BCE + Dice loss. Overwrites `dlogits` with the gradient when given.
template <typename T>
LossValue combined_loss(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits = nullptr);

}  // namespace dekan
