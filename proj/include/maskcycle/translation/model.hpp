#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "maskcycle/nn/checkpoint.hpp"
#include "maskcycle/translation/losses.hpp"
#include "maskcycle/translation/networks.hpp"

namespace maskcycle::translation {

// The four networks of the mask-conditioned cycle:
//   g_s2r : image (+) mask (4 ch) -> image (3 ch)
//   g_r2s : image (3 ch) -> image (+) soft mask (4 ch)
//   d_s   : patch scores over image (+) mask (4 ch)
//   d_r   : patch scores over image (3 ch)
template <typename Scalar>
class TranslationModel {
public:
    using Net = nn::Sequential<Scalar>;
    using Param = nn::Parameter<Scalar>;

    explicit TranslationModel(TranslationConfig config) : config_(std::move(config))
    {
        config_.validate();
        Rng rng = substream(config_.seed, 0, fnv1a64("translation"));
        g_s2r_ = build_generator<Scalar>(4, 3, config_.generator, GeneratorHead::Image, rng, "g_s2r");
        g_r2s_ = build_generator<Scalar>(3, 4, config_.generator, GeneratorHead::ImageAndMask, rng, "g_r2s");
        d_s_ = build_discriminator<Scalar>(4, config_.discriminator, rng, "d_s");
        d_r_ = build_discriminator<Scalar>(3, config_.discriminator, rng, "d_r");
    }

    Net& g_s2r() { return *g_s2r_; }
    Net& g_r2s() { return *g_r2s_; }
    Net& d_s() { return *d_s_; }
    Net& d_r() { return *d_r_; }

    const TranslationConfig& config() const { return config_; }
    const LossWeights& weights() const { return config_.weights; }
    void set_weights(const LossWeights& w)
    {
        w.validate();
        config_.weights = w;
    }
    MaskLoss mask_loss() const { return config_.mask_loss; }

    std::int64_t step_count = 0;

    std::vector<Param*> generator_parameters()
    {
        auto out = nn::parameters_of(*g_s2r_);
        auto r2s = nn::parameters_of(*g_r2s_);
        out.insert(out.end(), r2s.begin(), r2s.end());
        return out;
    }
    std::vector<Param*> d_s_parameters() { return nn::parameters_of(*d_s_); }
    std::vector<Param*> d_r_parameters() { return nn::parameters_of(*d_r_); }
    std::vector<Param*> all_parameters()
    {
        auto out = generator_parameters();
        for (auto* p : d_s_parameters())
            out.push_back(p);
        for (auto* p : d_r_parameters())
            out.push_back(p);
        return out;
    }

    // Generators need spatial sizes divisible by 2^downsampling.
    void check_spatial(const nn::Shape& s) const
    {
        const Index m = Index(1) << config_.generator.downsampling;
        if (s.height % m != 0 || s.width % m != 0)
            throw ShapeError("spatial size " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                             " is not a multiple of " + std::to_string(m));
        if (discriminator_output_size(std::min(s.height, s.width), config_.discriminator) < 1)
            throw ShapeError("input " + s.str() + " too small for the discriminator");
    }

private:
    TranslationConfig config_;
    std::unique_ptr<Net> g_s2r_, g_r2s_, d_s_, d_r_;
};

// Mask channel as fed to networks: {0,1} -> {-1,1}, matching the image range.
template <typename Scalar>
nn::Tensor<Scalar> encode_mask(const nn::Tensor<Scalar>& mask)
{
    nn::Tensor<Scalar> out(mask.shape());
    out.values() = mask.values().array() * Scalar(2) - Scalar(1);
    return out;
}

template <typename Scalar>
nn::Tensor<Scalar> forward_s2r(TranslationModel<Scalar>& model, const nn::Tensor<Scalar>& image_and_mask)
{
    if (image_and_mask.channels() != 4)
        throw ShapeError("S->R generator expects image (+) mask (4 channels), got " + image_and_mask.shape().str());
    model.check_spatial(image_and_mask.shape());
    return model.g_s2r().forward(image_and_mask);
}

template <typename Scalar>
nn::Tensor<Scalar> forward_s2r(TranslationModel<Scalar>& model, const MaskedBatch<Scalar>& x)
{
    x.validate();
    return forward_s2r(model, nn::concat_channels(x.images, encode_mask(x.masks)));
}

template <typename Scalar>
MaskedBatch<Scalar> split_image_mask(const nn::Tensor<Scalar>& four)
{
    return {nn::slice_channels(four, 0, 3), nn::slice_channels(four, 3, 1)};
}

template <typename Scalar>
MaskedBatch<Scalar> forward_r2s(TranslationModel<Scalar>& model, const nn::Tensor<Scalar>& images)
{
    if (images.channels() != 3)
        throw ShapeError("R->S generator expects a 3-channel image, got " + images.shape().str());
    model.check_spatial(images.shape());
    return split_image_mask(model.g_r2s().forward(images));
}

template <typename Scalar>
void save_checkpoint(TranslationModel<Scalar>& model, const std::filesystem::path& path)
{
    nlohmann::json meta{{"config", to_json(model.config())}, {"step_count", model.step_count}};
    nn::write_checkpoint_file(nn::pack_parameters<Scalar>("translation", std::move(meta), model.all_parameters()),
                              path);
}

template <typename Scalar>
TranslationModel<Scalar> load_checkpoint(const std::filesystem::path& path)
{
    const nn::CheckpointFile file = nn::read_checkpoint_file(path);
    if (file.kind != "translation")
        throw ConfigError("checkpoint " + path.string() + " holds a " + file.kind + " model");
    TranslationModel<Scalar> model(translation_config_from_json(file.meta.at("config")));
    nn::unpack_parameters<Scalar>(file, model.all_parameters());
    model.step_count = file.meta.at("step_count").get<std::int64_t>();
    return model;
}

// As load_checkpoint, but the stored architecture must equal `expected`'s.
template <typename Scalar>
TranslationModel<Scalar> load_checkpoint(const std::filesystem::path& path, const TranslationConfig& expected)
{
    TranslationModel<Scalar> model = load_checkpoint<Scalar>(path);
    if (!model.config().same_architecture(expected))
        throw ConfigError("checkpoint architecture does not match the requested config");
    return model;
}

} // namespace maskcycle::translation
