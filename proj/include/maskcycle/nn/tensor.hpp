#pragma once

#include <Eigen/Core>

#include <string>

#include "maskcycle/common/error.hpp"

namespace maskcycle::nn {

using Index = Eigen::Index;

struct Shape {
    Index batch = 0;
    Index channels = 0;
    Index height = 0;
    Index width = 0;

    Index size() const { return batch * channels * height * width; }
    Index plane() const { return height * width; }
    bool operator==(const Shape&) const = default;

    std::string str() const
    {
        return std::to_string(batch) + "x" + std::to_string(channels) + "x" + std::to_string(height) + "x" +
               std::to_string(width);
    }
};

// Dense NCHW tensor. Each sample is viewable as a (channels, height*width)
// row-major matrix, which is the layout every layer's GEMM works on.
template <typename Scalar>
class Tensor {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using SampleMap = Eigen::Map<Matrix>;
    using ConstSampleMap = Eigen::Map<const Matrix>;

    Tensor() = default;
    explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : shape_(shape), values_(Vector::Constant(shape.size(), fill))
    {
    }
    Tensor(Index n, Index c, Index h, Index w, Scalar fill = Scalar(0)) : Tensor(Shape{n, c, h, w}, fill) {}

    const Shape& shape() const { return shape_; }
    Index batch() const { return shape_.batch; }
    Index channels() const { return shape_.channels; }
    Index height() const { return shape_.height; }
    Index width() const { return shape_.width; }
    Index size() const { return shape_.size(); }

    Vector& values() { return values_; }
    const Vector& values() const { return values_; }

    SampleMap sample(Index n)
    {
        return SampleMap(values_.data() + n * sample_size(), shape_.channels, shape_.plane());
    }
    ConstSampleMap sample(Index n) const
    {
        return ConstSampleMap(values_.data() + n * sample_size(), shape_.channels, shape_.plane());
    }

    Scalar& at(Index n, Index c, Index y, Index x) { return values_[offset(n, c, y, x)]; }
    Scalar at(Index n, Index c, Index y, Index x) const { return values_[offset(n, c, y, x)]; }

    template <typename Other>
    Tensor<Other> cast() const
    {
        Tensor<Other> out(shape_);
        out.values() = values_.template cast<Other>();
        return out;
    }

    bool all_finite() const { return values_.allFinite(); }

private:
    Index sample_size() const { return shape_.channels * shape_.plane(); }
    Index offset(Index n, Index c, Index y, Index x) const
    {
        return ((n * shape_.channels + c) * shape_.height + y) * shape_.width + x;
    }

    Shape shape_;
    Vector values_;
};

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b)
{
    if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width())
        throw ShapeError("cannot concatenate " + a.shape().str() + " with " + b.shape().str());
    Tensor<Scalar> out(a.batch(), a.channels() + b.channels(), a.height(), a.width());
    for (Index n = 0; n < a.batch(); ++n) {
        out.sample(n).topRows(a.channels()) = a.sample(n);
        out.sample(n).bottomRows(b.channels()) = b.sample(n);
    }
    return out;
}

template <typename Scalar>
Tensor<Scalar> slice_channels(const Tensor<Scalar>& t, Index first, Index count)
{
    if (first < 0 || count < 0 || first + count > t.channels())
        throw ShapeError("channel slice out of range for " + t.shape().str());
    Tensor<Scalar> out(t.batch(), count, t.height(), t.width());
    for (Index n = 0; n < t.batch(); ++n)
        out.sample(n) = t.sample(n).middleRows(first, count);
    return out;
}

} // namespace maskcycle::nn
