#include "maskcycle/synthesis/cutout.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace maskcycle {

ComponentLabels label_components(const BinaryMask& mask)
{
    ComponentLabels result{Eigen::ArrayXXi::Zero(mask.height(), mask.width()), 0};
    std::vector<PixelPoint> stack;
    for (Index y = 0; y < mask.height(); ++y) {
        for (Index x = 0; x < mask.width(); ++x) {
            if (!mask(y, x) || result.labels(y, x) != 0)
                continue;
            const int label = ++result.count;
            result.labels(y, x) = label;
            stack.push_back({y, x});
            while (!stack.empty()) {
                const PixelPoint p = stack.back();
                stack.pop_back();
                for (Index dy = -1; dy <= 1; ++dy) {
                    for (Index dx = -1; dx <= 1; ++dx) {
                        const Index ny = p.y + dy;
                        const Index nx = p.x + dx;
                        if (ny < 0 || nx < 0 || ny >= mask.height() || nx >= mask.width())
                            continue;
                        if (mask(ny, nx) && result.labels(ny, nx) == 0) {
                            result.labels(ny, nx) = label;
                            stack.push_back({ny, nx});
                        }
                    }
                }
            }
        }
    }
    return result;
}

CutoutLibrary extract_cutouts(const MaskedSample& annotated)
{
    annotated.validate();
    const ComponentLabels comps = label_components(annotated.mask);
    if (comps.count == 0)
        throw EmptyAnnotationError("annotated frame " + annotated.source_id + " has an empty mask");

    struct Box {
        Index y0, x0, y1, x1;
    };
    std::vector<Box> boxes(static_cast<std::size_t>(comps.count),
                           Box{annotated.mask.height(), annotated.mask.width(), -1, -1});
    for (Index y = 0; y < comps.labels.rows(); ++y) {
        for (Index x = 0; x < comps.labels.cols(); ++x) {
            const int l = comps.labels(y, x);
            if (l == 0)
                continue;
            Box& b = boxes[static_cast<std::size_t>(l - 1)];
            b.y0 = std::min(b.y0, y);
            b.x0 = std::min(b.x0, x);
            b.y1 = std::max(b.y1, y);
            b.x1 = std::max(b.x1, x);
        }
    }

    CutoutLibrary library;
    library.origin_frame_id = annotated.source_id;
    for (int l = 1; l <= comps.count; ++l) {
        const Box& b = boxes[static_cast<std::size_t>(l - 1)];
        const PixelRect rect{b.y0, b.x0, b.y1 - b.y0 + 1, b.x1 - b.x0 + 1};
        BinaryMask::Array alpha =
            (comps.labels.block(rect.y, rect.x, rect.height, rect.width) == l).cast<std::uint8_t>();
        library.cutouts.push_back({crop(annotated.image, rect), BinaryMask(std::move(alpha)), rect});
    }
    return library;
}

namespace {

float bilinear(const ImageBuffer::ConstPlaneMap& plane, double y, double x)
{
    y = std::clamp(y, 0.0, static_cast<double>(plane.rows() - 1));
    x = std::clamp(x, 0.0, static_cast<double>(plane.cols() - 1));
    const Index y0 = static_cast<Index>(std::floor(y));
    const Index x0 = static_cast<Index>(std::floor(x));
    const Index y1 = std::min<Index>(y0 + 1, plane.rows() - 1);
    const Index x1 = std::min<Index>(x0 + 1, plane.cols() - 1);
    const double fy = y - static_cast<double>(y0);
    const double fx = x - static_cast<double>(x0);
    const double top = (1 - fx) * plane(y0, x0) + fx * plane(y0, x1);
    const double bottom = (1 - fx) * plane(y1, x0) + fx * plane(y1, x1);
    return static_cast<float>((1 - fy) * top + fy * bottom);
}

std::optional<Cutout> crop_to_support(Cutout c)
{
    const auto& a = c.alpha.data();
    Index y0 = a.rows(), x0 = a.cols(), y1 = -1, x1 = -1;
    for (Index y = 0; y < a.rows(); ++y)
        for (Index x = 0; x < a.cols(); ++x)
            if (a(y, x)) {
                y0 = std::min(y0, y);
                x0 = std::min(x0, x);
                y1 = std::max(y1, y);
                x1 = std::max(x1, x);
            }
    if (y1 < 0)
        return std::nullopt;
    const PixelRect rect{y0, x0, y1 - y0 + 1, x1 - x0 + 1};
    if (rect.height == a.rows() && rect.width == a.cols())
        return c;
    return Cutout{crop(c.patch, rect), crop(c.alpha, rect), c.source_bbox};
}

} // namespace

std::optional<Cutout> transform_cutout(const Cutout& cutout, const CutoutTransform& t)
{
    if (!(t.scale > 0.0))
        throw PreconditionError("cutout scale must be positive");
    Cutout src = cutout;
    if (t.flip) {
        src.patch = flip_horizontal(src.patch);
        src.alpha = flip_horizontal(src.alpha);
    }
    if (t.is_identity_geometry())
        return crop_to_support(std::move(src));

    const double h = static_cast<double>(src.alpha.height());
    const double w = static_cast<double>(src.alpha.width());
    const double theta = t.rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const Index out_h = std::max<Index>(1, static_cast<Index>(std::ceil(t.scale * (h * std::abs(cs) + w * std::abs(sn)))));
    const Index out_w = std::max<Index>(1, static_cast<Index>(std::ceil(t.scale * (w * std::abs(cs) + h * std::abs(sn)))));

    // Pixel centres: source centre (h-1)/2, (w-1)/2 maps to output centre.
    const double scy = (h - 1) / 2.0, scx = (w - 1) / 2.0;
    const double dcy = (static_cast<double>(out_h) - 1) / 2.0, dcx = (static_cast<double>(out_w) - 1) / 2.0;

    Cutout out{ImageBuffer(out_h, out_w, src.patch.channels()), BinaryMask(out_h, out_w), src.source_bbox};
    std::vector<ImageBuffer::ConstPlaneMap> planes;
    for (Index c = 0; c < src.patch.channels(); ++c)
        planes.push_back(std::as_const(src.patch).plane(c));

    for (Index y = 0; y < out_h; ++y) {
        for (Index x = 0; x < out_w; ++x) {
            const double dy = static_cast<double>(y) - dcy;
            const double dx = static_cast<double>(x) - dcx;
            // inverse rotation, then inverse scale
            const double sy = (cs * dy - sn * dx) / t.scale + scy;
            const double sx = (sn * dy + cs * dx) / t.scale + scx;
            const Index ny = static_cast<Index>(std::lround(sy));
            const Index nx = static_cast<Index>(std::lround(sx));
            if (ny < 0 || nx < 0 || ny >= src.alpha.height() || nx >= src.alpha.width() || !src.alpha(ny, nx))
                continue;
            out.alpha(y, x) = 1;
            for (Index c = 0; c < src.patch.channels(); ++c)
                out.patch(c, y, x) = bilinear(planes[static_cast<std::size_t>(c)], sy, sx);
        }
    }
    return crop_to_support(std::move(out));
}

} // namespace maskcycle
