#pragma once

// Dense row-major tensor of rank <= 4. Feature maps use height x width x
// channels, so the channel index is the fastest-moving one.

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "amc/error.hpp"

namespace amc {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(shape_numel(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_numel(shape_)) {
            throw Error(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                                      " does not match shape " + shape_str(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    // rank-3 (H x W x C) access
    T& at(std::size_t h, std::size_t w, std::size_t c) noexcept {
        return data_[(h * shape_[1] + w) * shape_[2] + c];
    }
    const T& at(std::size_t h, std::size_t w, std::size_t c) const noexcept {
        return data_[(h * shape_[1] + w) * shape_[2] + c];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Tensor& other) const = default;

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

private:
    void check_shape() const {
        if (shape_.empty() || shape_.size() > 4) {
            throw Error(ErrorKind::ShapeMismatch, "tensor rank must be 1..4, got " + std::to_string(shape_.size()));
        }
        for (auto d : shape_) {
            if (d == 0) throw Error(ErrorKind::ShapeMismatch, "zero-sized dimension in shape " + shape_str(shape_));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
bool all_finite(std::span<const T> values);

}  // namespace amc
