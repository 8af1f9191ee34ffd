#pragma once

#include <filesystem>
#include <string>

#include "maskcycle/common/rng.hpp"
#include "maskcycle/imaging/image.hpp"

// A procedural stand-in for field imagery, small enough for CPU smoke runs.
// Real-style frames show yellow elliptical heads on a striped green canopy;
// synthetic-side backgrounds are head-free blue/gray scenes, so cut-and-paste
// composites carry a visible domain gap.
namespace maskcycle::toyworld {

struct FrameParams {
    Index height = 64;
    Index width = 64;
    int heads_min = 3;
    int heads_max = 7;
    double radius_min = 2.5; // semi-axes, in pixels at 64x64; scaled with the frame
    double radius_max = 5.0;
};

MaskedSample real_frame(const FrameParams& params, Rng& rng);
ImageBuffer synthetic_background(Index height, Index width, Rng& rng);

struct CorpusSpec {
    Index size = 64;            // frame edge of real and held-out frames
    Index background_size = 80; // edge of background frames
    int backgrounds = 7;
    int real_frames = 16;
    int heldout = 8;
    std::uint64_t seed = 0;
};

// Writes
//   annotated/frame.png, annotated/mask.png   one labeled real-style frame
//   backgrounds.mkv                           head-free background video
//   real.mkv                                  unlabeled real-style video
//   heldout/manifest.jsonl (+ images, masks)  labeled real-style test frames
// The total image count is 1 + backgrounds + real_frames + heldout.
void write_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

// Pipeline config sized for a corpus from write_corpus with default sizes,
// with paths relative to the corpus directory.
std::string pipeline_config(std::uint64_t seed);

} // namespace maskcycle::toyworld
