#pragma once

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "maskcycle/imaging/image.hpp"
#include "maskcycle/segmentation/unet.hpp"

namespace maskcycle::segmentation {

class SegmentationModel {
public:
    explicit SegmentationModel(const UNetConfig& config) : net_(std::make_unique<UNet<float>>(config)) {}

    UNet<float>& net() { return *net_; }
    const UNetConfig& config() const { return net_->config(); }
    std::vector<nn::Parameter<float>*> parameters() { return nn::parameters_of(*net_); }

    std::int64_t epochs_trained = 0;

private:
    std::unique_ptr<UNet<float>> net_;
};

SegmentationModel build_model(const UNetConfig& config);

nlohmann::json to_json(const UNetConfig& config);
UNetConfig unet_config_from_json(const nlohmann::json& j);

void save_checkpoint(SegmentationModel& model, const std::filesystem::path& path);
SegmentationModel load_checkpoint(const std::filesystem::path& path);

// Mirror-pads so each side grows by at most factor - 1 and the result is
// divisible by `factor`; the original occupies rows [top, top + H) and columns
// [left, left + W).
struct Padding {
    Index top = 0, bottom = 0, left = 0, right = 0;
};
Padding padding_for(Index height, Index width, Index factor);
ImageBuffer reflect_pad(const ImageBuffer& image, const Padding& pad);
BinaryMask reflect_pad(const BinaryMask& mask, const Padding& pad);

struct Prediction {
    Eigen::ArrayXXf probability; // H x W, in [0,1]
    BinaryMask mask;             // probability >= threshold
};

// Works for any spatial size: pads reflectively to the model's down-sampling
// factor, predicts, and crops back.
Eigen::ArrayXXf predict_probability(SegmentationModel& model, const ImageBuffer& image);
Prediction predict(SegmentationModel& model, const ImageBuffer& image, double threshold = 0.5);
BinaryMask threshold_map(const Eigen::ArrayXXf& probability, double threshold);

} // namespace maskcycle::segmentation
