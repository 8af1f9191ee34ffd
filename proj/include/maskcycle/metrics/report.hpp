#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskcycle/segmentation/model.hpp"
#include "maskcycle/synthesis/manifest.hpp"

namespace maskcycle::metrics {

struct SampleScore {
    std::string id;
    double dice = 0;
    double iou = 0;
};

struct MetricReport {
    std::string model_tag;
    std::string dataset_tag;
    double threshold = 0.5;
    std::vector<SampleScore> samples; // sorted by id
    double mean_dice = 0;
    double mean_iou = 0;
};

// Per-sample scores in id order and their arithmetic means.
MetricReport summarize(std::vector<SampleScore> samples, std::string model_tag, std::string dataset_tag,
                       double threshold);

MetricReport evaluate(segmentation::SegmentationModel& model, const DatasetManifest& manifest, double threshold,
                      std::string model_tag, std::string dataset_tag);

// {model_tag, dataset_tag, threshold, samples:[{id,dice,iou}], mean_dice,
// mean_iou, conventions}
nlohmann::json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);
void write_report(const MetricReport& report, const std::filesystem::path& path);

// Checks the report.json schema; returns the problems found (empty if valid).
std::vector<std::string> validate_report_json(const nlohmann::json& j);

} // namespace maskcycle::metrics
