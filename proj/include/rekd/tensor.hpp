#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rekd/error.hpp"

namespace rekd {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape)
{
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array. Values are owned; copies are deep.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
        for (int d : shape_)
            if (d < 0) throw Error(ErrorCode::shape_mismatch, "negative extent in " + shape_string(shape_));
    }

    Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_size(shape_) != data_.size())
            throw Error(ErrorCode::shape_mismatch,
                        "shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) + " values");
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[i < 0 ? shape_.size() + i : i]; }
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

    T& operator()(int i, int j) { return data_[std::size_t(i) * shape_[1] + j]; }
    const T& operator()(int i, int j) const { return data_[std::size_t(i) * shape_[1] + j]; }
    T& operator()(int i, int j, int k) { return data_[(std::size_t(i) * shape_[1] + j) * shape_[2] + k]; }
    const T& operator()(int i, int j, int k) const { return data_[(std::size_t(i) * shape_[1] + j) * shape_[2] + k]; }
    T& operator()(int i, int j, int k, int l)
    { return data_[((std::size_t(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l]; }
    const T& operator()(int i, int j, int k, int l) const
    { return data_[((std::size_t(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l]; }

    /// Same values under a new shape with equal element count.
    Tensor reshaped(Shape shape) const
    {
        Tensor out;
        out.shape_ = std::move(shape);
        if (shape_size(out.shape_) != data_.size())
            throw Error(ErrorCode::shape_mismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(out.shape_));
        out.data_ = data_;
        return out;
    }

    void reshape_inplace(Shape shape)
    {
        if (shape_size(shape) != data_.size())
            throw Error(ErrorCode::shape_mismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        shape_ = std::move(shape);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o)
    {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator*=(T s)
    {
        for (auto& v : data_) v *= s;
        return *this;
    }

    template <typename U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const
    {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_same_shape(const Tensor& o, const char* what) const
    {
        if (o.shape_ != shape_)
            throw Error(ErrorCode::shape_mismatch,
                        std::string(what) + ": " + shape_string(shape_) + " vs " + shape_string(o.shape_));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b)
{
    a.require_same_shape(b, "max_abs_diff");
    T m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
T max_abs(const Tensor<T>& a)
{
    T m = 0;
    for (T v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

} // namespace rekd
