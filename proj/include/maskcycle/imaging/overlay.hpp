#pragma once

#include "maskcycle/imaging/image.hpp"

namespace maskcycle {

// Hard-edged compositing: output takes `patch` wherever `patch_alpha` is 1
// and `base` elsewhere. The patch must lie entirely inside `base`.
template <typename Scalar>
Image<Scalar> overlay(const Image<Scalar>& base, const Image<Scalar>& patch, const BinaryMask& patch_alpha,
                      PixelPoint top_left)
{
    if (patch.height() != patch_alpha.height() || patch.width() != patch_alpha.width())
        throw ShapeError("overlay patch and alpha dimensions differ");
    if (patch.channels() != base.channels())
        throw ShapeError("overlay patch and base channel counts differ");
    if (top_left.y < 0 || top_left.x < 0 || top_left.y + patch.height() > base.height() ||
        top_left.x + patch.width() > base.width())
        throw BoundsError("overlay patch exceeds base bounds");

    Image<Scalar> out = base;
    const auto support = (patch_alpha.data() != 0);
    for (Index c = 0; c < base.channels(); ++c) {
        auto region = out.plane(c).block(top_left.y, top_left.x, patch.height(), patch.width());
        region = support.select(patch.plane(c), region);
    }
    return out;
}

// Unions `alpha` into `mask` at `top_left`; the mask-side twin of overlay.
inline void paint_support(BinaryMask& mask, const BinaryMask& alpha, PixelPoint top_left)
{
    if (top_left.y < 0 || top_left.x < 0 || top_left.y + alpha.height() > mask.height() ||
        top_left.x + alpha.width() > mask.width())
        throw BoundsError("alpha exceeds mask bounds");
    auto region = mask.data().block(top_left.y, top_left.x, alpha.height(), alpha.width());
    region = region.max(alpha.data());
}

} // namespace maskcycle
