#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace segda {

// Dense row-major tensor. Rank is dynamic; the NN code uses NCHW.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), T(0));
    }
    Tensor(std::vector<std::size_t> shape, T fill) : shape_(std::move(shape)) {
        data_.assign(numel_of(shape_), fill);
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    void fill(T v) { data_.assign(data_.size(), v); }
    void zero() { fill(T(0)); }

    void reshape(std::vector<std::size_t> shape) {
        if (numel_of(shape) != data_.size())
            throw std::invalid_argument("Tensor::reshape: element count mismatch");
        shape_ = std::move(shape);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

} // namespace segda
