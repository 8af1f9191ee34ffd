#pragma once

#include <filesystem>
#include <vector>

#include "maskcycle/imaging/image.hpp"

namespace maskcycle {

// PNG/JPEG decode to a 3-channel image in [0,1]. Gray inputs are replicated,
// alpha channels dropped.
ImageBuffer load_image(const std::filesystem::path& path);

// Single-channel image binarized as intensity >= threshold.
BinaryMask load_mask(const std::filesystem::path& path, double threshold = 0.5);

// Writes 8-bit PNG (or JPEG, by extension). Intensities are rounded to the
// nearest of 256 levels, so load_image(save_image(x)) is exact for 8-bit data.
void save_image(const ImageBuffer& image, const std::filesystem::path& path);

// 0 -> 0, 1 -> 255, single-channel PNG.
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);

// Soft values in [0,1] as an 8-bit single-channel PNG.
void save_probability_map(const Eigen::ArrayXXf& prob, const std::filesystem::path& path);

// Frames 0, stride, 2*stride, ... in decode order.
std::vector<ImageBuffer> extract_frames(const std::filesystem::path& video_path, Index stride);

// Lossless (FFV1) or MJPEG video, chosen by extension: .mkv -> FFV1, else MJPG.
void write_video(const std::vector<ImageBuffer>& frames, const std::filesystem::path& path, double fps = 10.0);

} // namespace maskcycle
