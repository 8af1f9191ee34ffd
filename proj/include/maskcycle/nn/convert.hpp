#pragma once

#include <span>

#include "maskcycle/imaging/image.hpp"
#include "maskcycle/nn/tensor.hpp"

namespace maskcycle::nn {

enum class Range {
    Unit,   // [0,1], stored as-is
    Signed, // [-1,1], v * 2 - 1
};

template <typename Scalar>
Tensor<Scalar> images_to_tensor(std::span<const ImageBuffer> images, Range range)
{
    if (images.empty())
        throw ShapeError("cannot build a tensor from an empty batch");
    const auto& first = images.front();
    Tensor<Scalar> t(static_cast<Index>(images.size()), first.channels(), first.height(), first.width());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = images[i];
        if (img.channels() != first.channels() || img.height() != first.height() || img.width() != first.width())
            throw ShapeError("batch images differ in shape");
        auto s = t.sample(static_cast<Index>(i));
        s = img.data().matrix().template cast<Scalar>();
        if (range == Range::Signed)
            s.array() = s.array() * Scalar(2) - Scalar(1);
    }
    return t;
}

template <typename Scalar>
Tensor<Scalar> masks_to_tensor(std::span<const BinaryMask> masks)
{
    if (masks.empty())
        throw ShapeError("cannot build a tensor from an empty batch");
    Tensor<Scalar> t(static_cast<Index>(masks.size()), 1, masks.front().height(), masks.front().width());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        if (masks[i].height() != t.height() || masks[i].width() != t.width())
            throw ShapeError("batch masks differ in shape");
        t.sample(static_cast<Index>(i)) =
            Eigen::Map<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>(masks[i].data().data(), masks[i].pixels())
                .template cast<Scalar>();
    }
    return t;
}

// Sample n of a 1/3/4-channel tensor as an image, clamped into [0,1].
template <typename Scalar>
ImageBuffer tensor_to_image(const Tensor<Scalar>& t, Index n, Range range)
{
    ImageBuffer img(t.height(), t.width(), t.channels());
    auto v = t.sample(n).array();
    if (range == Range::Signed)
        img.data() = ((v + Scalar(1)) / Scalar(2)).max(Scalar(0)).min(Scalar(1)).template cast<float>();
    else
        img.data() = v.max(Scalar(0)).min(Scalar(1)).template cast<float>();
    return img;
}

// Single-channel sample n as an (height, width) array.
template <typename Scalar>
Eigen::ArrayXXf tensor_to_plane(const Tensor<Scalar>& t, Index n, Index channel = 0)
{
    Eigen::ArrayXXf out(t.height(), t.width());
    const auto row = t.sample(n).row(channel);
    for (Index y = 0; y < t.height(); ++y)
        for (Index x = 0; x < t.width(); ++x)
            out(y, x) = static_cast<float>(row(y * t.width() + x));
    return out;
}

} // namespace maskcycle::nn
