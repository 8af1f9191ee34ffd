#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "maskcycle/imaging/image.hpp"

namespace maskcycle {

struct Cutout {
    ImageBuffer patch;
    BinaryMask alpha;
    PixelRect source_bbox;
};

struct CutoutLibrary {
    std::vector<Cutout> cutouts;
    std::string origin_frame_id;

    bool empty() const { return cutouts.empty(); }
    std::size_t size() const { return cutouts.size(); }
};

struct ComponentLabels {
    Eigen::ArrayXXi labels; // 0 = background, 1..count = component id
    int count = 0;
};

// 8-connected component labeling, components numbered in raster order of
// their first pixel.
ComponentLabels label_components(const BinaryMask& mask);

// One cutout per 8-connected foreground component. Each cutout's alpha holds
// only its own component, cropped to the component bounding box.
CutoutLibrary extract_cutouts(const MaskedSample& annotated);

struct CutoutTransform {
    double scale = 1.0;
    double rotation_deg = 0.0;
    bool flip = false;

    bool is_identity_geometry() const { return scale == 1.0 && rotation_deg == 0.0; }
};

// Horizontal flip, then scale and rotation about the patch centre. Alpha is
// resampled nearest-neighbour (stays binary), the patch bilinearly. The
// result is cropped to its alpha support; nullopt if the support vanishes.
std::optional<Cutout> transform_cutout(const Cutout& cutout, const CutoutTransform& transform);

} // namespace maskcycle
