#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dekan {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of rank 1..4. Activations are (batch, channel, height, width);
/// token sequences are (batch, tokens, features).
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int b, int c, int h, int w) { return data_[index(b, c, h, w)]; }
    const T& at(int b, int c, int h, int w) const { return data_[index(b, c, h, w)]; }

    void fill(T v);
    void zero() { fill(T(0)); }

    // Same storage, new shape; element count must match.
    Tensor reshaped(Shape shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    Tensor& operator+=(const Tensor& other);

private:
    std::size_t index(int b, int c, int h, int w) const {
        return ((static_cast<std::size_t>(b) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
    }

    Shape shape_;
    std::vector<T> data_;
};

/// Named view into a module's state. `grad` is null for non-trainable buffers
/// (batch-norm running statistics).
template <typename T>
struct StateEntry {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;

    bool trainable() const { return grad != nullptr; }
};

template <typename T>
using StateList = std::vector<StateEntry<T>>;

/// Learnable tensor with a gradient slot of identical shape.
template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;

    Param() = default;
    explicit Param(Shape shape) : value(shape), grad(std::move(shape)) {}

    void zero_grad() { grad.zero(); }
    void add_to(StateList<T>& out, const std::string& name) { out.push_back({name, &value, &grad}); }
};

template <typename T>
void zero_grads(const StateList<T>& state);

template <typename T>
std::size_t count_parameters(const StateList<T>& state);

using Rng = std::mt19937_64;

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double mean, double stddev);

}  // namespace dekan
