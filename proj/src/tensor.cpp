#include "dekan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dekan/error.hpp"

namespace dekan {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ConfigError("negative dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_numel(shape_)) {
        throw ConfigError("tensor of shape " + shape_str(shape_) + " given " + std::to_string(data_.size()) +
                          " values");
    }
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ConfigError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& other) {
    if (!same_shape(other)) {
        throw ConfigError("cannot add " + shape_str(other.shape_) + " into " + shape_str(shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

template <typename T>
void zero_grads(const StateList<T>& state) {
    for (const auto& e : state) {
        if (e.grad) e.grad->zero();
    }
}

template <typename T>
std::size_t count_parameters(const StateList<T>& state) {
    std::size_t n = 0;
    for (const auto& e : state) {
        if (e.trainable()) n += e.value->size();
    }
    return n;
}

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template class Tensor<float>;
template class Tensor<double>;
template void zero_grads(const StateList<float>&);
template void zero_grads(const StateList<double>&);
template std::size_t count_parameters(const StateList<float>&);
template std::size_t count_parameters(const StateList<double>&);
template void fill_normal(Tensor<float>&, Rng&, double, double);
template void fill_normal(Tensor<double>&, Rng&, double, double);

}  // namespace dekan
