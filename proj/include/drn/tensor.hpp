#pragma once

/// \file tensor.hpp
/// \brief Dense NCHW tensors backed by an Eigen array, templated on scalar.

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "drn/errors.hpp"

namespace drn {

using Index = Eigen::Index;

/// Four-dimensional NCHW extent. Vectors are (n, c, 1, 1), scalars (1, 1, 1, 1).
struct Shape {
    Index n = 0;
    Index c = 0;
    Index h = 0;
    Index w = 0;

    Index numel() const { return n * c * h * w; }
    Index plane() const { return h * w; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tensor {
public:
    using Scalar = T;
    using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
    using PlaneMap = Eigen::Map<RowMatrix<T>>;
    using ConstPlaneMap = Eigen::Map<const RowMatrix<T>>;

    Tensor() = default;
    explicit Tensor(const Shape& shape) : shape_(shape), data_(Array::Zero(shape.numel())) {}
    Tensor(const Shape& shape, T fill) : shape_(shape), data_(Array::Constant(shape.numel(), fill)) {}
    Tensor(const Shape& shape, Array data) : shape_(shape), data_(std::move(data))
    {
        if (data_.size() != shape_.numel())
            throw DimensionError("tensor payload of " + std::to_string(data_.size()) +
                                 " values does not fit shape " + shape_.str());
    }

    static Tensor zeros(const Shape& shape) { return Tensor(shape); }
    static Tensor constant(const Shape& shape, T value) { return Tensor(shape, value); }
    static Tensor scalar(T value) { return Tensor(Shape{1, 1, 1, 1}, value); }

    const Shape& shape() const { return shape_; }
    Index n() const { return shape_.n; }
    Index c() const { return shape_.c; }
    Index h() const { return shape_.h; }
    Index w() const { return shape_.w; }
    Index numel() const { return shape_.numel(); }
    bool empty() const { return data_.size() == 0; }

    Array& array() { return data_; }
    const Array& array() const { return data_; }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    Index offset(Index n, Index c, Index y, Index x) const
    {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(Index n, Index c, Index y, Index x) { return data_[offset(n, c, y, x)]; }
    T operator()(Index n, Index c, Index y, Index x) const { return data_[offset(n, c, y, x)]; }

    T* plane_data(Index n, Index c) { return data() + offset(n, c, 0, 0); }
    const T* plane_data(Index n, Index c) const { return data() + offset(n, c, 0, 0); }

    /// H×W view of channel c of sample n.
    PlaneMap plane(Index n, Index c) { return PlaneMap(plane_data(n, c), shape_.h, shape_.w); }
    ConstPlaneMap plane(Index n, Index c) const
    {
        return ConstPlaneMap(plane_data(n, c), shape_.h, shape_.w);
    }

    /// C×(H·W) view of sample n.
    PlaneMap sample_matrix(Index n) { return PlaneMap(plane_data(n, 0), shape_.c, shape_.plane()); }
    ConstPlaneMap sample_matrix(Index n) const
    {
        return ConstPlaneMap(plane_data(n, 0), shape_.c, shape_.plane());
    }

    T item() const
    {
        if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_.str());
        return data_[0];
    }

    bool all_finite() const { return data_.isFinite().all(); }

    Tensor reshaped(const Shape& shape) const
    {
        if (shape.numel() != numel())
            throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
        return Tensor(shape, data_);
    }

    template <typename U>
    Tensor<U> cast() const
    {
        return Tensor<U>(shape_, data_.template cast<U>());
    }

    /// Sample n as a batch of one.
    Tensor slice_batch(Index n) const
    {
        Shape s = shape_;
        s.n = 1;
        const Index len = s.numel();
        return Tensor(s, data_.segment(n * len, len));
    }

private:
    Shape shape_{};
    Array data_;
};

/// Stacks batch-of-one tensors along the batch axis.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items);

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace drn
