#include "maskcycle/translation/config.hpp"

#include <string>

namespace maskcycle::translation {

void TranslationConfig::validate() const
{
    if (generator.base_width < 1 || generator.residual_blocks < 0 || generator.downsampling < 0 ||
        generator.downsampling > 6)
        throw ConfigError("invalid generator config");
    if (generator.outer_kernel < 1 || generator.outer_kernel % 2 == 0)
        throw ConfigError("generator outer_kernel must be odd and positive");
    if (discriminator.base_width < 1 || discriminator.layers < 0 || discriminator.layers > 6)
        throw ConfigError("invalid discriminator config");
    weights.validate();
    if (!(schedule.learning_rate >= 0))
        throw ConfigError("learning_rate must be non-negative");
    if (!(schedule.beta1 >= 0 && schedule.beta1 < 1))
        throw ConfigError("beta1 must lie in [0,1)");
    if (schedule.total_steps < 0)
        throw ConfigError("total_steps must be non-negative");
    if (!(schedule.decay_start >= 0 && schedule.decay_start <= 1))
        throw ConfigError("decay_start must lie in [0,1]");
    if (schedule.batch_size < 1)
        throw ConfigError("batch_size must be at least 1");
}

nlohmann::json to_json(const TranslationConfig& c)
{
    return {
        {"generator",
         {{"base_width", c.generator.base_width},
          {"residual_blocks", c.generator.residual_blocks},
          {"downsampling", c.generator.downsampling},
          {"outer_kernel", c.generator.outer_kernel}}},
        {"discriminator", {{"base_width", c.discriminator.base_width}, {"layers", c.discriminator.layers}}},
        {"weights",
         {{"lambda_cycle_image", c.weights.lambda_cycle_image},
          {"lambda_cycle_mask", c.weights.lambda_cycle_mask},
          {"lambda_adv", c.weights.lambda_adv}}},
        {"mask_loss", c.mask_loss == MaskLoss::L1 ? "l1" : "bce"},
        {"schedule",
         {{"learning_rate", c.schedule.learning_rate},
          {"beta1", c.schedule.beta1},
          {"total_steps", c.schedule.total_steps},
          {"decay_start", c.schedule.decay_start},
          {"pool_size", c.schedule.pool_size},
          {"batch_size", c.schedule.batch_size}}},
        {"seed", c.seed},
    };
}

MaskLoss parse_mask_loss(const std::string& name)
{
    if (name == "l1")
        return MaskLoss::L1;
    if (name == "bce")
        return MaskLoss::BinaryCrossEntropy;
    throw ConfigError("unknown mask loss '" + name + "' (expected l1 or bce)");
}

TranslationConfig translation_config_from_json(const nlohmann::json& j)
{
    try {
        TranslationConfig c;
        const auto& g = j.at("generator");
        c.generator = {g.at("base_width").get<Index>(), g.at("residual_blocks").get<Index>(),
                       g.at("downsampling").get<Index>(), g.at("outer_kernel").get<Index>()};
        const auto& d = j.at("discriminator");
        c.discriminator = {d.at("base_width").get<Index>(), d.at("layers").get<Index>()};
        const auto& w = j.at("weights");
        c.weights = {w.at("lambda_cycle_image").get<double>(), w.at("lambda_cycle_mask").get<double>(),
                     w.at("lambda_adv").get<double>()};
        c.mask_loss = parse_mask_loss(j.at("mask_loss").get<std::string>());
        const auto& s = j.at("schedule");
        c.schedule = {s.at("learning_rate").get<double>(), s.at("beta1").get<double>(),
                      s.at("total_steps").get<long>(),     s.at("decay_start").get<double>(),
                      s.at("pool_size").get<std::size_t>(), s.at("batch_size").get<Index>()};
        c.seed = j.at("seed").get<std::uint64_t>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed translation config: ") + e.what());
    }
}

} // namespace maskcycle::translation
