#include "maskcycle/toyworld/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "maskcycle/imaging/io.hpp"
#include "maskcycle/synthesis/manifest.hpp"

namespace maskcycle::toyworld {

namespace fs = std::filesystem;

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Smooth value noise: bilinear interpolation of a coarse random grid.
Eigen::ArrayXXd value_noise(Index height, Index width, Index cell, Rng& rng)
{
    const Index gh = height / cell + 2, gw = width / cell + 2;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::ArrayXXd grid(gh, gw);
    for (Index i = 0; i < grid.size(); ++i)
        grid(i) = u(rng);
    Eigen::ArrayXXd out(height, width);
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
            const double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
            const Index y0 = static_cast<Index>(fy), x0 = static_cast<Index>(fx);
            const double ty = fy - y0, tx = fx - x0;
            out(y, x) = (1 - ty) * ((1 - tx) * grid(y0, x0) + tx * grid(y0, x0 + 1)) +
                        ty * ((1 - tx) * grid(y0 + 1, x0) + tx * grid(y0 + 1, x0 + 1));
        }
    return out;
}

} // namespace

MaskedSample real_frame(const FrameParams& p, Rng& rng)
{
    if (p.height < 8 || p.width < 8 || p.heads_min < 0 || p.heads_max < p.heads_min || p.radius_min <= 0 ||
        p.radius_max < p.radius_min)
        throw PreconditionError("invalid toy frame parameters");
    std::normal_distribution<double> grain(0.0, 0.03);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    ImageBuffer image(p.height, p.width, 3);
    const Eigen::ArrayXXd canopy = value_noise(p.height, p.width, std::max<Index>(4, p.width / 8), rng);
    const double phase = u01(rng) * 2 * std::numbers::pi;
    const double period = 5.0 + 3.0 * u01(rng);
    for (Index y = 0; y < p.height; ++y)
        for (Index x = 0; x < p.width; ++x) {
            const double stripe = 0.06 * std::sin(2 * std::numbers::pi * x / period + phase);
            const double shade = 0.08 * canopy(y, x) + stripe;
            image(0, y, x) = clamp01(0.22 + 0.5 * shade + grain(rng));
            image(1, y, x) = clamp01(0.52 + shade + grain(rng));
            image(2, y, x) = clamp01(0.16 + 0.3 * shade + grain(rng));
        }

    BinaryMask mask(p.height, p.width);
    const double scale = static_cast<double>(std::min(p.height, p.width)) / 64.0;
    const int heads = std::uniform_int_distribution<int>(p.heads_min, p.heads_max)(rng);
    for (int h = 0; h < heads; ++h) {
        const double a = scale * (p.radius_min + (p.radius_max - p.radius_min) * u01(rng));
        const double b = a * (0.45 + 0.25 * u01(rng));
        const double theta = u01(rng) * std::numbers::pi;
        const double cy = u01(rng) * static_cast<double>(p.height - 1);
        const double cx = u01(rng) * static_cast<double>(p.width - 1);
        const double tint = 0.08 * (u01(rng) - 0.5);
        const double c = std::cos(theta), s = std::sin(theta);
        const Index y0 = std::max<Index>(0, static_cast<Index>(cy - a - 1));
        const Index y1 = std::min<Index>(p.height - 1, static_cast<Index>(cy + a + 1));
        const Index x0 = std::max<Index>(0, static_cast<Index>(cx - a - 1));
        const Index x1 = std::min<Index>(p.width - 1, static_cast<Index>(cx + a + 1));
        for (Index y = y0; y <= y1; ++y)
            for (Index x = x0; x <= x1; ++x) {
                const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
                const double r2 = u * u + v * v;
                if (r2 > 1.0)
                    continue;
                // kernels: brighter ridge along the major axis
                const double ridge = 0.08 * std::cos(u * 9.0) * (1.0 - r2);
                image(0, y, x) = clamp01(0.86 + tint + ridge + grain(rng));
                image(1, y, x) = clamp01(0.74 + tint + ridge + grain(rng));
                image(2, y, x) = clamp01(0.30 + 0.5 * ridge + grain(rng));
                mask.data()(y, x) = 1;
            }
    }
    return {std::move(image), std::move(mask), "toyworld:real"};
}

ImageBuffer synthetic_background(Index height, Index width, Rng& rng)
{
    if (height < 1 || width < 1)
        throw PreconditionError("invalid background size");
    std::normal_distribution<double> grain(0.0, 0.03);
    const Eigen::ArrayXXd coarse = value_noise(height, width, std::max<Index>(4, width / 5), rng);
    const Eigen::ArrayXXd fine = value_noise(height, width, 3, rng);
    ImageBuffer image(height, width, 3);
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
            const double v = 0.12 * coarse(y, x) + 0.05 * fine(y, x);
            image(0, y, x) = clamp01(0.30 + v + grain(rng));
            image(1, y, x) = clamp01(0.34 + v + grain(rng));
            image(2, y, x) = clamp01(0.52 + 0.8 * v + grain(rng));
        }
    return image;
}

void write_corpus(const CorpusSpec& spec, const fs::path& out_dir)
{
    if (spec.size < 8 || spec.background_size < spec.size || spec.backgrounds < 1 || spec.real_frames < 1 ||
        spec.heldout < 1)
        throw PreconditionError("invalid toy corpus spec");
    for (const char* sub : {"annotated", "heldout/images", "heldout/masks"})
        fs::create_directories(out_dir / sub);

    FrameParams frame;
    frame.height = frame.width = spec.size;

    Rng annotated_rng = substream(spec.seed, 0, fnv1a64("toyworld.annotated"));
    FrameParams dense = frame;
    dense.heads_min = dense.heads_max = 10;
    const MaskedSample annotated = real_frame(dense, annotated_rng);
    save_image(annotated.image, out_dir / "annotated" / "frame.png");
    save_mask(annotated.mask, out_dir / "annotated" / "mask.png");

    std::vector<ImageBuffer> backgrounds;
    for (int i = 0; i < spec.backgrounds; ++i) {
        Rng rng = substream(spec.seed, static_cast<std::uint64_t>(i), fnv1a64("toyworld.background"));
        backgrounds.push_back(synthetic_background(spec.background_size, spec.background_size, rng));
    }
    write_video(backgrounds, out_dir / "backgrounds.mkv");

    std::vector<ImageBuffer> real;
    for (int i = 0; i < spec.real_frames; ++i) {
        Rng rng = substream(spec.seed, static_cast<std::uint64_t>(i), fnv1a64("toyworld.real"));
        real.push_back(real_frame(frame, rng).image);
    }
    write_video(real, out_dir / "real.mkv");

    DatasetManifest heldout(out_dir / "heldout");
    for (int i = 0; i < spec.heldout; ++i) {
        Rng rng = substream(spec.seed, static_cast<std::uint64_t>(i), fnv1a64("toyworld.heldout"));
        const MaskedSample s = real_frame(frame, rng);
        const std::string id = zero_padded_id(static_cast<std::size_t>(i));
        save_image(s.image, out_dir / "heldout" / "images" / (id + ".png"));
        save_mask(s.mask, out_dir / "heldout" / "masks" / (id + ".png"));
        heldout.add({id, fs::path("images") / (id + ".png"), fs::path("masks") / (id + ".png"), "toyworld:heldout",
                     "test"});
    }
    heldout.save(out_dir / "heldout" / "manifest.jsonl");
}

std::string pipeline_config(std::uint64_t seed)
{
    return "seed = " + std::to_string(seed) + R"(

[paths]
annotated_image = annotated/frame.png
annotated_mask = annotated/mask.png
backgrounds = backgrounds.mkv
real_frames = real.mkv
eval_manifest = heldout/manifest.jsonl

[synth]
count = 24
val_fraction = 0.25
height = 64
width = 64
heads_min = 3
heads_max = 8

[gan]
base_width = 8
residual_blocks = 2
downsampling = 2
d_base_width = 8
d_layers = 2
steps = 200
log_every = 50

[seg]
depth = 2
base_width = 8
epochs = 60
learning_rate = 0.002
batch_size = 2

[curate]
sample_count = 8
port = 0
exit_after_export = true

[finetune]
epochs = 3
learning_rate = 0.0005
batch_size = 2
)";
}

} // namespace maskcycle::toyworld
