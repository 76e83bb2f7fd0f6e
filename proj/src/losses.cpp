#include "dekan/losses.hpp"

#include <cmath>

#include "dekan/error.hpp"

namespace dekan {

namespace {

template <typename T>
void check_pair(const Tensor<T>& logits, const Tensor<T>& target, const Tensor<T>* dlogits) {
    if (!logits.same_shape(target)) {
        throw InputError("logits " + shape_str(logits.shape()) + " and target " + shape_str(target.shape()) +
                         " differ in shape");
    }
    if (logits.empty()) throw InputError("loss over an empty tensor");
    if (dlogits && !dlogits->same_shape(logits)) throw InputError("gradient buffer shape mismatch");
    for (const T y : target.values()) {
        if (y != T(0) && y != T(1)) throw InputError("target must be binary (0 or 1)");
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

template <typename T>
double bce_loss(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits, double weight) {
    check_pair(logits, target, dlogits);
    const double n = static_cast<double>(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double x = logits[i], y = target[i];
        sum += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
        if (dlogits) (*dlogits)[i] += static_cast<T>(weight * (sigmoid(x) - y) / n);
    }
    return sum / n;
}

template <typename T>
double dice_loss(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits, double weight) {
    check_pair(logits, target, dlogits);
    double inter = 0.0, psum = 0.0, ysum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = sigmoid(logits[i]);
        inter += p * target[i];
        psum += p;
        ysum += target[i];
    }
    const double num = 2.0 * inter + kDiceSmoothing;
    const double den = psum + ysum + kDiceSmoothing;
    if (dlogits) {
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double p = sigmoid(logits[i]);
            const double dp = -(2.0 * target[i] * den - num) / (den * den);
            (*dlogits)[i] += static_cast<T>(weight * dp * p * (1.0 - p));
        }
    }
    return 1.0 - num / den;
}

double dice_coefficient(std::span<const double> pred, std::span<const double> target, double eps) {
    if (pred.size() != target.size()) throw InputError("dice: prediction and target differ in size");
    double inter = 0.0, psum = 0.0, ysum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += pred[i] * target[i];
        psum += pred[i];
        ysum += target[i];
    }
    return (2.0 * inter + eps) / (psum + ysum + eps);
}

template <typename T>
LossValue combined_loss(const Tensor<T>& logits, const Tensor<T>& target, Tensor<T>* dlogits) {
    if (dlogits) *dlogits = Tensor<T>(logits.shape());
    LossValue v;
    v.bce_part = bce_loss(logits, target, dlogits, 0.5);
    v.dice_part = dice_loss(logits, target, dlogits, 1.0);
    v.total = 0.5 * v.bce_part + v.dice_part;
    return v;
}

template double bce_loss(const Tensor<float>&, const Tensor<float>&, Tensor<float>*, double);
template double bce_loss(const Tensor<double>&, const Tensor<double>&, Tensor<double>*, double);
template double dice_loss(const Tensor<float>&, const Tensor<float>&, Tensor<float>*, double);
template double dice_loss(const Tensor<double>&, const Tensor<double>&, Tensor<double>*, double);
template LossValue combined_loss(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template LossValue combined_loss(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);

}  // namespace dekan
