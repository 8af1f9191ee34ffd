#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "maskcycle/common/error.hpp"
#include "maskcycle/nn/tensor.hpp"

namespace maskcycle::translation {

using nn::Index;

// ResNet-style encoder / residual trunk / decoder.
struct GeneratorConfig {
    Index base_width = 64;
    Index residual_blocks = 9;
    Index downsampling = 2;
    Index outer_kernel = 7;

    bool operator==(const GeneratorConfig&) const = default;
};

// PatchGAN: `layers` stride-2 convolutions followed by two stride-1 ones.
struct DiscriminatorConfig {
    Index base_width = 64;
    Index layers = 3;

    bool operator==(const DiscriminatorConfig&) const = default;
};

struct LossWeights {
    double lambda_cycle_image = 10.0;
    double lambda_cycle_mask = 10.0;
    double lambda_adv = 1.0;

    bool operator==(const LossWeights&) const = default;
    void validate() const
    {
        if (lambda_cycle_image < 0 || lambda_cycle_mask < 0 || lambda_adv < 0)
            throw ConfigError("loss weights must be non-negative");
    }
};

enum class MaskLoss { L1, BinaryCrossEntropy };

struct TrainSchedule {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    long total_steps = 10000;
    double decay_start = 0.5; // fraction of total_steps after which lr decays linearly to 0
    std::size_t pool_size = 50;
    Index batch_size = 1;

    bool operator==(const TrainSchedule&) const = default;
};

struct TranslationConfig {
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    LossWeights weights;
    MaskLoss mask_loss = MaskLoss::L1;
    TrainSchedule schedule;
    std::uint64_t seed = 0;

    void validate() const;
    // Architecture-defining subset; a checkpoint must agree on these to load.
    bool same_architecture(const TranslationConfig& other) const
    {
        return generator == other.generator && discriminator == other.discriminator;
    }
};

MaskLoss parse_mask_loss(const std::string& name);
nlohmann::json to_json(const TranslationConfig& config);
TranslationConfig translation_config_from_json(const nlohmann::json& j);

} // namespace maskcycle::translation
