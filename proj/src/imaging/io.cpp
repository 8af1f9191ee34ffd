#include "maskcycle/imaging/io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cmath>

namespace maskcycle {
namespace {

namespace fs = std::filesystem;

void require_file(const fs::path& path)
{
    std::error_code ec;
    if (!fs::is_regular_file(path, ec))
        throw IoError("no such file: " + path.string());
}

// Per-element v / max_level, computed as a float division so that 8-bit
// values k map to exactly k / 255.0f.
cv::Mat normalized(const cv::Mat& m)
{
    float max_level = 1.0f;
    switch (m.depth()) {
    case CV_8U: max_level = 255.0f; break;
    case CV_16U: max_level = 65535.0f; break;
    case CV_32F: break;
    default: throw DecodeError("unsupported pixel depth");
    }
    cv::Mat f;
    m.convertTo(f, CV_32F);
    for (int y = 0; y < f.rows; ++y) {
        float* row = f.ptr<float>(y);
        for (int i = 0; i < f.cols * f.channels(); ++i)
            row[i] = row[i] / max_level;
    }
    return f;
}

cv::Mat decode(const fs::path& path)
{
    require_file(path);
    cv::Mat raw;
    try {
        raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw DecodeError("cannot decode " + path.string() + ": " + e.what());
    }
    if (raw.empty())
        throw DecodeError("cannot decode " + path.string());
    return raw;
}

ImageBuffer from_bgr(const cv::Mat& bgr)
{
    const cv::Mat f = normalized(bgr);
    ImageBuffer out(f.rows, f.cols, 3);
    for (int y = 0; y < f.rows; ++y) {
        const auto* row = f.ptr<cv::Vec3f>(y);
        for (int x = 0; x < f.cols; ++x) {
            out(0, y, x) = std::clamp(row[x][2], 0.0f, 1.0f);
            out(1, y, x) = std::clamp(row[x][1], 0.0f, 1.0f);
            out(2, y, x) = std::clamp(row[x][0], 0.0f, 1.0f);
        }
    }
    return out;
}

std::uint8_t to_byte(float v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

cv::Mat to_bgr8(const ImageBuffer& image)
{
    if (image.channels() != 3)
        throw ShapeError("expected a 3-channel image");
    cv::Mat out(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_8UC3);
    for (int y = 0; y < out.rows; ++y) {
        auto* row = out.ptr<cv::Vec3b>(y);
        for (int x = 0; x < out.cols; ++x)
            row[x] = cv::Vec3b(to_byte(image(2, y, x)), to_byte(image(1, y, x)), to_byte(image(0, y, x)));
    }
    return out;
}

void write(const fs::path& path, const cv::Mat& m)
{
    bool ok = false;
    try {
        if (path.has_parent_path())
            fs::create_directories(path.parent_path());
        ok = cv::imwrite(path.string(), m);
    } catch (const std::exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok)
        throw IoError("cannot write " + path.string());
}

} // namespace

ImageBuffer load_image(const fs::path& path)
{
    cv::Mat raw = decode(path);
    cv::Mat bgr;
    switch (raw.channels()) {
    case 1: cv::cvtColor(raw, bgr, cv::COLOR_GRAY2BGR); break;
    case 3: bgr = raw; break;
    case 4: cv::cvtColor(raw, bgr, cv::COLOR_BGRA2BGR); break;
    default: throw DecodeError("unsupported channel count in " + path.string());
    }
    return from_bgr(bgr);
}

BinaryMask load_mask(const fs::path& path, double threshold)
{
    if (!(threshold > 0.0 && threshold < 1.0))
        throw PreconditionError("mask threshold must lie in (0,1)");
    cv::Mat raw = decode(path);
    if (raw.channels() != 1)
        throw FormatError("mask file must be single-channel: " + path.string());
    const cv::Mat f = normalized(raw);
    BinaryMask mask(f.rows, f.cols);
    for (int y = 0; y < f.rows; ++y) {
        const float* row = f.ptr<float>(y);
        for (int x = 0; x < f.cols; ++x)
            mask(y, x) = row[x] >= threshold ? 1 : 0;
    }
    return mask;
}

void save_image(const ImageBuffer& image, const fs::path& path)
{
    write(path, to_bgr8(image));
}

void save_mask(const BinaryMask& mask, const fs::path& path)
{
    cv::Mat out(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_8UC1);
    for (int y = 0; y < out.rows; ++y)
        for (int x = 0; x < out.cols; ++x)
            out.at<std::uint8_t>(y, x) = mask(y, x) ? 255 : 0;
    write(path, out);
}

void save_probability_map(const Eigen::ArrayXXf& prob, const fs::path& path)
{
    cv::Mat out(static_cast<int>(prob.rows()), static_cast<int>(prob.cols()), CV_8UC1);
    for (int y = 0; y < out.rows; ++y)
        for (int x = 0; x < out.cols; ++x)
            out.at<std::uint8_t>(y, x) = to_byte(prob(y, x));
    write(path, out);
}

std::vector<ImageBuffer> extract_frames(const fs::path& video_path, Index stride)
{
    if (stride < 1)
        throw PreconditionError("frame stride must be >= 1");
    require_file(video_path);
    cv::VideoCapture capture(video_path.string(), cv::CAP_FFMPEG);
    if (!capture.isOpened())
        throw DecodeError("cannot decode video " + video_path.string());

    std::vector<ImageBuffer> frames;
    cv::Mat frame;
    for (Index i = 0; capture.read(frame); ++i) {
        if (i % stride == 0)
            frames.push_back(from_bgr(frame));
    }
    if (frames.empty())
        throw DecodeError("video has no decodable frames: " + video_path.string());
    return frames;
}

void write_video(const std::vector<ImageBuffer>& frames, const fs::path& path, double fps)
{
    if (frames.empty())
        throw PreconditionError("cannot write an empty video");
    const bool lossless = path.extension() == ".mkv";
    const int fourcc = lossless ? cv::VideoWriter::fourcc('F', 'F', 'V', '1') : cv::VideoWriter::fourcc('M', 'J', 'P', 'G');
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    cv::VideoWriter writer(path.string(), cv::CAP_FFMPEG, fourcc, fps,
                           cv::Size(static_cast<int>(frames.front().width()), static_cast<int>(frames.front().height())));
    if (!writer.isOpened())
        throw IoError("cannot open video writer for " + path.string());
    for (const auto& f : frames)
        writer << to_bgr8(f);
}

} // namespace maskcycle
