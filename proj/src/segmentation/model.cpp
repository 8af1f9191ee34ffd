#include "maskcycle/segmentation/model.hpp"

#include <array>

#include "maskcycle/nn/checkpoint.hpp"
#include "maskcycle/nn/convert.hpp"

namespace maskcycle::segmentation {

SegmentationModel build_model(const UNetConfig& config)
{
    return SegmentationModel(config);
}

nlohmann::json to_json(const UNetConfig& c)
{
    return {{"depth", c.depth}, {"base_width", c.base_width}, {"seed", c.seed}};
}

UNetConfig unet_config_from_json(const nlohmann::json& j)
{
    try {
        UNetConfig c{j.at("depth").get<Index>(), j.at("base_width").get<Index>(), j.at("seed").get<std::uint64_t>()};
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed segmentation config: ") + e.what());
    }
}

void save_checkpoint(SegmentationModel& model, const std::filesystem::path& path)
{
    nlohmann::json meta{{"config", to_json(model.config())}, {"epochs_trained", model.epochs_trained}};
    nn::write_checkpoint_file(nn::pack_parameters<float>("segmentation", std::move(meta), model.parameters()), path);
}

SegmentationModel load_checkpoint(const std::filesystem::path& path)
{
    const nn::CheckpointFile file = nn::read_checkpoint_file(path);
    if (file.kind != "segmentation")
        throw ConfigError("checkpoint " + path.string() + " holds a " + file.kind + " model");
    SegmentationModel model(unet_config_from_json(file.meta.at("config")));
    nn::unpack_parameters<float>(file, model.parameters());
    model.epochs_trained = file.meta.at("epochs_trained").get<std::int64_t>();
    return model;
}

Padding padding_for(Index height, Index width, Index factor)
{
    const Index ph = (factor - height % factor) % factor;
    const Index pw = (factor - width % factor) % factor;
    return {ph / 2, ph - ph / 2, pw / 2, pw - pw / 2};
}

namespace {

// Mirror index without edge repetition, periodic for pads wider than the image.
Index mirror(Index i, Index n)
{
    if (n == 1)
        return 0;
    const Index period = 2 * (n - 1);
    i %= period;
    if (i < 0)
        i += period;
    return i < n ? i : period - i;
}

} // namespace

ImageBuffer reflect_pad(const ImageBuffer& image, const Padding& pad)
{
    const Index h = image.height() + pad.top + pad.bottom, w = image.width() + pad.left + pad.right;
    ImageBuffer out(h, w, image.channels());
    for (Index c = 0; c < image.channels(); ++c)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x)
                out(c, y, x) = image(c, mirror(y - pad.top, image.height()), mirror(x - pad.left, image.width()));
    return out;
}

BinaryMask reflect_pad(const BinaryMask& mask, const Padding& pad)
{
    const Index h = mask.height() + pad.top + pad.bottom, w = mask.width() + pad.left + pad.right;
    BinaryMask out(h, w);
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            out(y, x) = mask(mirror(y - pad.top, mask.height()), mirror(x - pad.left, mask.width()));
    return out;
}

Eigen::ArrayXXf predict_probability(SegmentationModel& model, const ImageBuffer& image)
{
    if (image.channels() != 3)
        throw ShapeError("segmentation expects a 3-channel image, got " + std::to_string(image.channels()));
    if (image.empty())
        throw ShapeError("cannot segment an empty image");
    const Padding pad = padding_for(image.height(), image.width(), model.config().downsampling_factor());
    const std::array<ImageBuffer, 1> batch{reflect_pad(image, pad)};
    const nn::Tensor<float> logits = model.net().forward(nn::images_to_tensor<float>(batch, nn::Range::Unit));
    const Eigen::ArrayXXf full = nn::tensor_to_plane(logits, 0).unaryExpr([](float z) { return nn::sigmoid(z); });
    return full.block(pad.top, pad.left, image.height(), image.width());
}

BinaryMask threshold_map(const Eigen::ArrayXXf& probability, double threshold)
{
    BinaryMask mask(probability.rows(), probability.cols());
    mask.data() = (probability.cast<double>() >= threshold).cast<std::uint8_t>();
    return mask;
}

Prediction predict(SegmentationModel& model, const ImageBuffer& image, double threshold)
{
    Prediction p{predict_probability(model, image), {}};
    p.mask = threshold_map(p.probability, threshold);
    return p;
}

} // namespace maskcycle::segmentation
