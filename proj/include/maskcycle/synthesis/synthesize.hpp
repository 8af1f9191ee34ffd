#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "maskcycle/common/rng.hpp"
#include "maskcycle/synthesis/cutout.hpp"
#include "maskcycle/synthesis/manifest.hpp"

namespace maskcycle {

struct SynthesisParams {
    int heads_min = 20;
    int heads_max = 60;
    double scale_min = 0.7;
    double scale_max = 1.3;
    double rotation_deg = 180.0; // rotations drawn from [-rotation_deg, rotation_deg]
    bool allow_flip = true;
    Index output_height = 256;
    Index output_width = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Placement {
    std::size_t cutout_index = 0;
    CutoutTransform transform;
    PixelPoint top_left;
    ImageBuffer patch;
    BinaryMask alpha;
};

struct SynthesisResult {
    MaskedSample sample;
    PixelRect background_crop;
    std::vector<Placement> placements; // paste order; later entries occlude earlier ones
    int skipped = 0;                   // draws whose transformed cutout did not fit
};

SynthesisResult synthesize_sample(const ImageBuffer& background, const CutoutLibrary& library,
                                  const SynthesisParams& params, Rng& rng);

struct SynthesisStats {
    std::size_t samples = 0;
    std::size_t placements = 0;
    std::size_t skipped = 0;
};

// Writes <out_dir>/images/<id>.png, <out_dir>/masks/<id>.png and
// <out_dir>/manifest.jsonl. Sample i uses background i % backgrounds.size()
// and random substream (params.seed, i), so output is independent of worker
// count. The last round(count * val_fraction) samples are tagged "val".
DatasetManifest synthesize_dataset(std::span<const ImageBuffer> backgrounds, const CutoutLibrary& library,
                                   const SynthesisParams& params, Index count, const std::filesystem::path& out_dir,
                                   double val_fraction = 0.0, SynthesisStats* stats = nullptr,
                                   unsigned workers = 1);

} // namespace maskcycle
