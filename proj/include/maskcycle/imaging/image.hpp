#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>

#include "maskcycle/common/error.hpp"

namespace maskcycle {

using Index = Eigen::Index;

struct PixelPoint {
    Index y = 0;
    Index x = 0;
    bool operator==(const PixelPoint&) const = default;
};

struct PixelRect {
    Index y = 0;
    Index x = 0;
    Index height = 0;
    Index width = 0;
    bool operator==(const PixelRect&) const = default;
};

// Planar image: one row of `data()` per channel, pixels in row-major order
// within a row. Intensities are normalized to [0,1].
template <typename Scalar>
class Image {
public:
    using Planes = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using PlaneMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstPlaneMap =
        Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    Image() = default;

    Image(Index height, Index width, Index channels, Scalar fill = Scalar(0))
        : height_(height), width_(width)
    {
        if (channels != 1 && channels != 3 && channels != 4)
            throw ShapeError("image channels must be 1, 3 or 4, got " + std::to_string(channels));
        if (height < 0 || width < 0)
            throw ShapeError("negative image dimensions");
        data_ = Planes::Constant(channels, height * width, fill);
    }

    Index height() const { return height_; }
    Index width() const { return width_; }
    Index channels() const { return data_.rows(); }
    Index pixels() const { return height_ * width_; }
    bool empty() const { return pixels() == 0; }

    Scalar& operator()(Index c, Index y, Index x) { return data_(c, y * width_ + x); }
    Scalar operator()(Index c, Index y, Index x) const { return data_(c, y * width_ + x); }

    PlaneMap plane(Index c) { return PlaneMap(data_.row(c).data(), height_, width_); }
    ConstPlaneMap plane(Index c) const { return ConstPlaneMap(data_.row(c).data(), height_, width_); }

    Planes& data() { return data_; }
    const Planes& data() const { return data_; }

    bool in_unit_range() const
    {
        return data_.size() == 0 || (data_.minCoeff() >= Scalar(0) && data_.maxCoeff() <= Scalar(1));
    }

    template <typename Other>
    Image<Other> cast() const
    {
        Image<Other> out(height_, width_, channels());
        out.data() = data_.template cast<Other>();
        return out;
    }

    bool operator==(const Image& other) const
    {
        return height_ == other.height_ && width_ == other.width_ && channels() == other.channels() &&
               (data_ == other.data_).all();
    }

private:
    Index height_ = 0;
    Index width_ = 0;
    Planes data_;
};

using ImageBuffer = Image<float>;

class BinaryMask {
public:
    using Array = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    BinaryMask() = default;
    BinaryMask(Index height, Index width, std::uint8_t fill = 0) : data_(Array::Constant(height, width, fill))
    {
        if (fill > 1)
            throw FormatError("binary mask fill must be 0 or 1");
    }
    explicit BinaryMask(Array data) : data_(std::move(data))
    {
        if (!is_binary())
            throw FormatError("binary mask values must be 0 or 1");
    }

    Index height() const { return data_.rows(); }
    Index width() const { return data_.cols(); }
    Index pixels() const { return data_.size(); }

    std::uint8_t& operator()(Index y, Index x) { return data_(y, x); }
    std::uint8_t operator()(Index y, Index x) const { return data_(y, x); }

    Index count() const { return (data_ != 0).count(); }
    bool is_binary() const { return (data_ <= 1).all(); }

    Array& data() { return data_; }
    const Array& data() const { return data_; }

    bool operator==(const BinaryMask& other) const
    {
        return height() == other.height() && width() == other.width() && (data_ == other.data_).all();
    }

private:
    Array data_;
};

struct MaskedSample {
    ImageBuffer image;
    BinaryMask mask;
    std::string source_id;

    void validate() const
    {
        if (image.channels() != 3)
            throw ShapeError("masked sample image must have 3 channels");
        if (image.height() != mask.height() || image.width() != mask.width())
            throw ShapeError("masked sample image is " + std::to_string(image.height()) + "x" +
                             std::to_string(image.width()) + " but mask is " + std::to_string(mask.height()) +
                             "x" + std::to_string(mask.width()));
        if (!mask.is_binary())
            throw FormatError("masked sample mask is not binary");
    }
};

template <typename Scalar>
Image<Scalar> crop(const Image<Scalar>& image, const PixelRect& rect)
{
    if (rect.y < 0 || rect.x < 0 || rect.y + rect.height > image.height() || rect.x + rect.width > image.width())
        throw BoundsError("crop rectangle exceeds image bounds");
    Image<Scalar> out(rect.height, rect.width, image.channels());
    for (Index c = 0; c < image.channels(); ++c)
        out.plane(c) = image.plane(c).block(rect.y, rect.x, rect.height, rect.width);
    return out;
}

inline BinaryMask crop(const BinaryMask& mask, const PixelRect& rect)
{
    if (rect.y < 0 || rect.x < 0 || rect.y + rect.height > mask.height() || rect.x + rect.width > mask.width())
        throw BoundsError("crop rectangle exceeds mask bounds");
    return BinaryMask(BinaryMask::Array(mask.data().block(rect.y, rect.x, rect.height, rect.width)));
}

template <typename Scalar>
Image<Scalar> flip_horizontal(const Image<Scalar>& image)
{
    Image<Scalar> out(image.height(), image.width(), image.channels());
    for (Index c = 0; c < image.channels(); ++c)
        out.plane(c) = image.plane(c).rowwise().reverse();
    return out;
}

inline BinaryMask flip_horizontal(const BinaryMask& mask)
{
    return BinaryMask(BinaryMask::Array(mask.data().rowwise().reverse()));
}

} // namespace maskcycle
