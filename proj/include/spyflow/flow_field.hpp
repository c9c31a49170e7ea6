#pragma once

#include "spyflow/tensor.hpp"

namespace spyflow {

/// Per-pixel displacement (u, v) in pixels of its own resolution, stored as a
/// [2,H,W] tensor: channel 0 is horizontal, channel 1 vertical.
template <typename T>
class BasicFlowField {
public:
    BasicFlowField() = default;
    BasicFlowField(int height, int width) : data_({2, height, width}) {}
    BasicFlowField(int height, int width, T u, T v) : data_({2, height, width}) {
        fill(u, v);
    }
    explicit BasicFlowField(BasicTensor<T> data) : data_(std::move(data)) {
        require_chw(data_, "flow field", 2);
    }

    int width() const { return data_.width(); }
    int height() const { return data_.height(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width()) * height(); }

    T& u(int x, int y) { return data_.at(0, y, x); }
    const T& u(int x, int y) const { return data_.at(0, y, x); }
    T& v(int x, int y) { return data_.at(1, y, x); }
    const T& v(int x, int y) const { return data_.at(1, y, x); }

    void fill(T u_value, T v_value) {
        auto d = data_.data();
        const std::size_t n = pixel_count();
        std::fill(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(n), u_value);
        std::fill(d.begin() + static_cast<std::ptrdiff_t>(n), d.end(), v_value);
    }

    BasicTensor<T>& tensor() { return data_; }
    const BasicTensor<T>& tensor() const { return data_; }

    bool same_resolution(const BasicFlowField& other) const {
        return !data_.empty() && width() == other.width() && height() == other.height();
    }

    template <typename U>
    BasicFlowField<U> cast() const {
        return BasicFlowField<U>(data_.template cast<U>());
    }

    friend bool operator==(const BasicFlowField& a, const BasicFlowField& b) {
        return a.data_ == b.data_;
    }

private:
    BasicTensor<T> data_;
};

using FlowField = BasicFlowField<float>;
using FlowFieldD = BasicFlowField<double>;

std::string resolution_string(int height, int width);

template <typename A, typename B>
void require_same_resolution(const A& a, const B& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw ShapeError(std::string(what) + ": resolution mismatch " +
                         resolution_string(a.height(), a.width()) + " vs " +
                         resolution_string(b.height(), b.width()));
    }
}

}  // namespace spyflow
