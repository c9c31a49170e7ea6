#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spyflow {

/// Raised when tensor shapes or resolutions do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised for malformed files and invalid data on disk.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string shape_to_string(std::span<const int> shape);

/// Dense row-major array. The float instantiation carries all learnable
/// math; the double instantiation is used to re-run kernels for gradient
/// verification.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    explicit BasicTensor(std::vector<int> shape, T fill = T(0))
        : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(element_count(shape_), fill);
    }

    BasicTensor(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != element_count(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_to_string(shape_));
        }
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // [C,H,W] accessors.
    T& at(int c, int y, int x) { return data_[offset3(c, y, x)]; }
    const T& at(int c, int y, int x) const { return data_[offset3(c, y, x)]; }

    int channels() const { return shape_.at(0); }
    int height() const { return shape_.at(1); }
    int width() const { return shape_.at(2); }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool all_finite() const {
        for (T v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return BasicTensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

    static std::size_t element_count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

private:
    std::size_t offset3(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_[1]) +
                static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(shape_[2]) +
               static_cast<std::size_t>(x);
    }

    void validate_shape() const {
        for (int d : shape_) {
            if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
        }
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Throws ShapeError unless `t` has rank 3 and (when given) the expected channel count.
template <typename T>
void require_chw(const BasicTensor<T>& t, const char* what, int channels = -1) {
    if (t.rank() != 3) {
        throw ShapeError(std::string(what) + ": expected a [C,H,W] tensor, got shape " +
                         shape_to_string(t.shape()));
    }
    if (channels >= 0 && t.channels() != channels) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(channels) +
                         " channels, got " + std::to_string(t.channels()));
    }
}

}  // namespace spyflow
