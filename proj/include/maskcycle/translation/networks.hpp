#pragma once

#include <algorithm>
#include <memory>
#include <string>

#include "maskcycle/common/rng.hpp"
#include "maskcycle/nn/layers.hpp"
#include "maskcycle/translation/config.hpp"

namespace maskcycle::translation {

enum class GeneratorHead {
    Image,        // tanh over all output channels
    ImageAndMask, // tanh over the first three, sigmoid over the last
};

template <typename Scalar>
std::unique_ptr<nn::Sequential<Scalar>> build_generator(Index in_channels, Index out_channels,
                                                         const GeneratorConfig& cfg, GeneratorHead head, Rng& rng,
                                                         const std::string& name)
{
    using namespace nn;
    if (cfg.base_width < 1 || cfg.residual_blocks < 0 || cfg.downsampling < 0 || cfg.outer_kernel < 1 ||
        cfg.outer_kernel % 2 == 0)
        throw ConfigError("invalid generator config");
    auto net = std::make_unique<Sequential<Scalar>>();
    int counter = 0;
    auto conv = [&](Sequential<Scalar>& seq, ConvSpec spec) {
        seq.template emplace<Conv2d<Scalar>>(spec, rng, name + "." + std::to_string(counter++));
    };

    const Index outer_pad = cfg.outer_kernel / 2;
    conv(*net, {in_channels, cfg.base_width, cfg.outer_kernel, 1, outer_pad, Padding::Reflect});
    net->template emplace<InstanceNorm<Scalar>>();
    net->template emplace<ReLU<Scalar>>();

    Index width = cfg.base_width;
    for (Index i = 0; i < cfg.downsampling; ++i) {
        conv(*net, {width, width * 2, 3, 2, 1, Padding::Zero});
        net->template emplace<InstanceNorm<Scalar>>();
        net->template emplace<ReLU<Scalar>>();
        width *= 2;
    }
    for (Index i = 0; i < cfg.residual_blocks; ++i) {
        auto& block = net->template emplace<Residual<Scalar>>();
        conv(block.body(), {width, width, 3, 1, 1, Padding::Reflect});
        block.body().template emplace<InstanceNorm<Scalar>>();
        block.body().template emplace<ReLU<Scalar>>();
        conv(block.body(), {width, width, 3, 1, 1, Padding::Reflect});
        block.body().template emplace<InstanceNorm<Scalar>>();
    }
    for (Index i = 0; i < cfg.downsampling; ++i) {
        net->template emplace<Upsample2x<Scalar>>();
        conv(*net, {width, width / 2, 3, 1, 1, Padding::Reflect});
        net->template emplace<InstanceNorm<Scalar>>();
        net->template emplace<ReLU<Scalar>>();
        width /= 2;
    }
    conv(*net, {width, out_channels, cfg.outer_kernel, 1, outer_pad, Padding::Reflect});
    if (head == GeneratorHead::ImageAndMask)
        net->template emplace<TanhSigmoidHead<Scalar>>(out_channels - 1);
    else
        net->template emplace<Tanh<Scalar>>();
    return net;
}

template <typename Scalar>
std::unique_ptr<nn::Sequential<Scalar>> build_discriminator(Index in_channels, const DiscriminatorConfig& cfg,
                                                             Rng& rng, const std::string& name)
{
    using namespace nn;
    if (cfg.base_width < 1 || cfg.layers < 1)
        throw ConfigError("invalid discriminator config");
    auto net = std::make_unique<Sequential<Scalar>>();
    int counter = 0;
    auto conv = [&](ConvSpec spec) {
        net->template emplace<Conv2d<Scalar>>(spec, rng, name + "." + std::to_string(counter++));
    };

    conv({in_channels, cfg.base_width, 4, 2, 1});
    net->template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
    Index width = cfg.base_width;
    for (Index i = 1; i < cfg.layers; ++i) {
        const Index next = cfg.base_width * std::min<Index>(Index(1) << i, 8);
        conv({width, next, 4, 2, 1});
        net->template emplace<InstanceNorm<Scalar>>();
        net->template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
        width = next;
    }
    const Index last = cfg.base_width * std::min<Index>(Index(1) << cfg.layers, 8);
    conv({width, last, 4, 1, 1});
    net->template emplace<InstanceNorm<Scalar>>();
    net->template emplace<LeakyReLU<Scalar>>(Scalar(0.2));
    conv({last, 1, 4, 1, 1});
    return net;
}

// Score-grid edge length for an input edge of `size`.
inline Index discriminator_output_size(Index size, const DiscriminatorConfig& cfg)
{
    for (Index i = 0; i < cfg.layers; ++i)
        size = (size + 2 - 4) / 2 + 1;
    return size - 2;
}

} // namespace maskcycle::translation
