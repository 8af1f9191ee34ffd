#include "maskcycle/synthesis/synthesize.hpp"

#include <cmath>
#include <mutex>

#include "maskcycle/common/parallel.hpp"
#include "maskcycle/imaging/io.hpp"
#include "maskcycle/imaging/overlay.hpp"

namespace maskcycle {

void SynthesisParams::validate() const
{
    if (heads_min < 0 || heads_max < heads_min)
        throw ConfigError("heads_per_image range must satisfy 0 <= min <= max");
    if (!(scale_min > 0.0) || scale_max < scale_min)
        throw ConfigError("scale range must satisfy 0 < min <= max");
    if (rotation_deg < 0.0)
        throw ConfigError("rotation range must be non-negative");
    if (output_height < 1 || output_width < 1)
        throw ConfigError("output size must be positive");
}

SynthesisResult synthesize_sample(const ImageBuffer& background, const CutoutLibrary& library,
                                  const SynthesisParams& params, Rng& rng)
{
    params.validate();
    if (background.channels() != 3)
        throw ShapeError("background must be a 3-channel image");
    if (background.height() < params.output_height || background.width() < params.output_width)
        throw PreconditionError("background is smaller than the synthesis output size");
    if (library.empty() && params.heads_min > 0)
        throw PreconditionError("cutout library is empty");

    SynthesisResult result;
    std::uniform_int_distribution<Index> crop_y(0, background.height() - params.output_height);
    std::uniform_int_distribution<Index> crop_x(0, background.width() - params.output_width);
    result.background_crop = {crop_y(rng), crop_x(rng), params.output_height, params.output_width};

    ImageBuffer image = crop(background, result.background_crop);
    BinaryMask mask(params.output_height, params.output_width);

    const int k = std::uniform_int_distribution<int>(params.heads_min, params.heads_max)(rng);
    if (library.empty()) {
        result.sample = {std::move(image), std::move(mask), {}};
        return result;
    }

    std::uniform_int_distribution<std::size_t> pick(0, library.size() - 1);
    std::uniform_real_distribution<double> scale(params.scale_min, params.scale_max);
    std::uniform_real_distribution<double> rotation(-params.rotation_deg, params.rotation_deg);
    std::bernoulli_distribution flip(0.5);

    for (int i = 0; i < k; ++i) {
        Placement placement;
        placement.cutout_index = pick(rng);
        placement.transform.scale = params.scale_min == params.scale_max ? params.scale_min : scale(rng);
        placement.transform.rotation_deg = params.rotation_deg == 0.0 ? 0.0 : rotation(rng);
        placement.transform.flip = params.allow_flip && flip(rng);

        auto transformed = transform_cutout(library.cutouts[placement.cutout_index], placement.transform);
        if (!transformed || transformed->alpha.height() > params.output_height ||
            transformed->alpha.width() > params.output_width) {
            ++result.skipped;
            continue;
        }
        placement.top_left.y =
            std::uniform_int_distribution<Index>(0, params.output_height - transformed->alpha.height())(rng);
        placement.top_left.x =
            std::uniform_int_distribution<Index>(0, params.output_width - transformed->alpha.width())(rng);

        image = overlay(image, transformed->patch, transformed->alpha, placement.top_left);
        paint_support(mask, transformed->alpha, placement.top_left);
        placement.patch = std::move(transformed->patch);
        placement.alpha = std::move(transformed->alpha);
        result.placements.push_back(std::move(placement));
    }
    result.sample = {std::move(image), std::move(mask), {}};
    return result;
}

DatasetManifest synthesize_dataset(std::span<const ImageBuffer> backgrounds, const CutoutLibrary& library,
                                   const SynthesisParams& params, Index count, const std::filesystem::path& out_dir,
                                   double val_fraction, SynthesisStats* stats, unsigned workers)
{
    namespace fs = std::filesystem;
    if (count < 1)
        throw PreconditionError("dataset count must be >= 1");
    if (backgrounds.empty())
        throw PreconditionError("at least one background frame is required");
    params.validate();

    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (!ec)
        fs::create_directories(out_dir / "masks", ec);
    if (ec)
        throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    const auto n = static_cast<std::size_t>(count);
    const auto val_count = static_cast<std::size_t>(std::llround(static_cast<double>(count) * val_fraction));
    std::vector<ManifestEntry> entries(n);
    SynthesisStats totals;
    std::mutex totals_mutex;

    parallel_for(n, workers, [&](std::size_t i) {
        Rng rng = substream(params.seed, i);
        const std::size_t bg = i % backgrounds.size();
        SynthesisResult r = synthesize_sample(backgrounds[bg], library, params, rng);
        const std::string id = zero_padded_id(i);
        const fs::path image_rel = fs::path("images") / (id + ".png");
        const fs::path mask_rel = fs::path("masks") / (id + ".png");
        save_image(r.sample.image, out_dir / image_rel);
        save_mask(r.sample.mask, out_dir / mask_rel);
        entries[i] = {id, image_rel, mask_rel, "background:" + std::to_string(bg), i >= n - val_count ? "val" : "train"};
        std::lock_guard lock(totals_mutex);
        ++totals.samples;
        totals.placements += r.placements.size();
        totals.skipped += static_cast<std::size_t>(r.skipped);
    });

    DatasetManifest manifest(out_dir);
    for (auto& e : entries)
        manifest.add(std::move(e));
    manifest.save(out_dir / "manifest.jsonl");
    if (stats)
        *stats = totals;
    return manifest;
}

} // namespace maskcycle
