#include "maskcycle/metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "maskcycle/metrics/metrics.hpp"

namespace maskcycle::metrics {

MetricReport summarize(std::vector<SampleScore> samples, std::string model_tag, std::string dataset_tag,
                       double threshold)
{
    if (samples.empty())
        throw DataError("cannot summarize an empty evaluation");
    std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    MetricReport r{std::move(model_tag), std::move(dataset_tag), threshold, std::move(samples), 0, 0};
    for (const auto& s : r.samples) {
        r.mean_dice += s.dice;
        r.mean_iou += s.iou;
    }
    r.mean_dice /= static_cast<double>(r.samples.size());
    r.mean_iou /= static_cast<double>(r.samples.size());
    return r;
}

MetricReport evaluate(segmentation::SegmentationModel& model, const DatasetManifest& manifest, double threshold,
                      std::string model_tag, std::string dataset_tag)
{
    if (manifest.empty())
        throw DataError("cannot evaluate on an empty manifest");
    for (const auto& e : manifest.entries())
        if (e.mask.empty())
            throw DataError("evaluation entry '" + e.id + "' has no ground-truth mask");
    std::vector<SampleScore> scores;
    for (const auto& e : manifest.entries()) {
        const MaskedSample s = manifest.load_sample(e);
        const BinaryMask pred = segmentation::predict(model, s.image, threshold).mask;
        const OverlapCounts c = overlap(pred, s.mask);
        scores.push_back({e.id, dice(c), iou(c)});
    }
    return summarize(std::move(scores), std::move(model_tag), std::move(dataset_tag), threshold);
}

nlohmann::json to_json(const MetricReport& r)
{
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : r.samples)
        samples.push_back({{"id", s.id}, {"dice", s.dice}, {"iou", s.iou}});
    return {
        {"model_tag", r.model_tag},
        {"dataset_tag", r.dataset_tag},
        {"threshold", r.threshold},
        {"samples", std::move(samples)},
        {"mean_dice", r.mean_dice},
        {"mean_iou", r.mean_iou},
        {"conventions",
         {{"empty_vs_empty", 1.0},
          {"empty_vs_nonempty", 0.0},
          {"binarization", "probability >= threshold"},
          {"sample_order", "id"}}},
    };
}

MetricReport report_from_json(const nlohmann::json& j)
{
    const auto problems = validate_report_json(j);
    if (!problems.empty())
        throw FormatError("invalid report: " + problems.front());
    MetricReport r{j.at("model_tag"), j.at("dataset_tag"), j.at("threshold"), {}, j.at("mean_dice"), j.at("mean_iou")};
    for (const auto& s : j.at("samples"))
        r.samples.push_back({s.at("id"), s.at("dice"), s.at("iou")});
    return r;
}

void write_report(const MetricReport& report, const std::filesystem::path& path)
{
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        out << to_json(report).dump(2) << '\n';
        if (!out)
            throw IoError("cannot write report " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError("cannot move report into place: " + ec.message());
}

std::vector<std::string> validate_report_json(const nlohmann::json& j)
{
    std::vector<std::string> problems;
    auto unit = [](const nlohmann::json& v) { return v.is_number() && v.get<double>() >= 0 && v.get<double>() <= 1; };
    if (!j.is_object())
        return {"report is not an object"};
    for (const char* key : {"model_tag", "dataset_tag"})
        if (!j.contains(key) || !j[key].is_string())
            problems.push_back(std::string(key) + " must be a string");
    for (const char* key : {"threshold", "mean_dice", "mean_iou"})
        if (!j.contains(key) || !unit(j[key]))
            problems.push_back(std::string(key) + " must be a number in [0,1]");
    if (!j.contains("samples") || !j["samples"].is_array() || j["samples"].empty()) {
        problems.push_back("samples must be a non-empty array");
        return problems;
    }
    double dice_sum = 0, iou_sum = 0;
    std::string previous;
    for (const auto& s : j["samples"]) {
        if (!s.is_object() || !s.contains("id") || !s["id"].is_string() || !s.contains("dice") || !unit(s["dice"]) ||
            !s.contains("iou") || !unit(s["iou"])) {
            problems.push_back("sample entries need id (string), dice and iou in [0,1]");
            return problems;
        }
        const std::string id = s["id"];
        if (!previous.empty() && id < previous)
            problems.push_back("samples are not sorted by id");
        previous = id;
        dice_sum += s["dice"].get<double>();
        iou_sum += s["iou"].get<double>();
    }
    const double n = static_cast<double>(j["samples"].size());
    if (problems.empty()) {
        if (std::abs(dice_sum / n - j["mean_dice"].get<double>()) > 1e-9)
            problems.push_back("mean_dice is not the mean of sample dice");
        if (std::abs(iou_sum / n - j["mean_iou"].get<double>()) > 1e-9)
            problems.push_back("mean_iou is not the mean of sample iou");
    }
    return problems;
}

} // namespace maskcycle::metrics
