#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "maskcycle/common/error.hpp"
#include "maskcycle/common/rng.hpp"
#include "maskcycle/nn/layers.hpp"

namespace maskcycle::segmentation {

using nn::Index;

struct UNetConfig {
    Index depth = 4; // number of 2x down-sampling steps
    Index base_width = 32;
    std::uint64_t seed = 0;

    bool operator==(const UNetConfig&) const = default;
    void validate() const
    {
        if (depth < 1 || depth > 8)
            throw ConfigError("U-Net depth must lie in [1,8], got " + std::to_string(depth));
        if (base_width < 1)
            throw ConfigError("U-Net base width must be positive");
    }
    Index downsampling_factor() const { return Index(1) << depth; }
};

// Encoder-decoder with concatenated skip connections. Input 3 x H x W with H
// and W divisible by 2^depth; output 1 x H x W logits.
template <typename Scalar>
class UNet final : public nn::Layer<Scalar> {
public:
    using Seq = nn::Sequential<Scalar>;
    using T = nn::Tensor<Scalar>;

    explicit UNet(const UNetConfig& config) : config_(config)
    {
        config_.validate();
        Rng rng = substream(config_.seed, 0, fnv1a64("segmentation"));
        Index in = 3;
        for (Index l = 0; l < config_.depth; ++l) {
            const Index width = config_.base_width << l;
            encoders_.push_back(double_conv(in, width, rng, "enc" + std::to_string(l)));
            pools_.push_back(std::make_unique<nn::MaxPool2x2<Scalar>>());
            in = width;
        }
        bottleneck_ = double_conv(in, config_.base_width << config_.depth, rng, "mid");
        for (Index l = config_.depth - 1; l >= 0; --l) {
            const Index width = config_.base_width << l;
            auto up = std::make_unique<Seq>();
            up->template emplace<nn::Upsample2x<Scalar>>();
            up->template emplace<nn::Conv2d<Scalar>>(conv3(width * 2, width), rng, "up" + std::to_string(l) + ".0");
            up->template emplace<nn::ReLU<Scalar>>();
            ups_.push_back(std::move(up));
            decoders_.push_back(double_conv(width * 2, width, rng, "dec" + std::to_string(l)));
        }
        head_ = std::make_unique<nn::Conv2d<Scalar>>(nn::ConvSpec{config_.base_width, 1, 1, 1, 0, nn::Padding::Zero,
                                                                  nn::Init::He},
                                                     rng, "head");
    }

    const UNetConfig& config() const { return config_; }

    T forward(const T& x) override
    {
        if (x.channels() != 3)
            throw ShapeError("segmentation input must have 3 channels, got " + x.shape().str());
        const Index f = config_.downsampling_factor();
        if (x.height() % f != 0 || x.width() % f != 0)
            throw ShapeError("segmentation input " + x.shape().str() + " not divisible by " + std::to_string(f));
        skip_channels_.clear();
        skips_.clear();
        T h = x;
        for (std::size_t l = 0; l < encoders_.size(); ++l) {
            h = encoders_[l]->forward(h);
            skips_.push_back(h);
            h = pools_[l]->forward(h);
        }
        h = bottleneck_->forward(h);
        for (std::size_t i = 0; i < ups_.size(); ++i) {
            const T up = ups_[i]->forward(h);
            const T& skip = skips_[skips_.size() - 1 - i];
            skip_channels_.push_back(skip.channels());
            h = decoders_[i]->forward(nn::concat_channels(skip, up));
        }
        return head_->forward(h);
    }

    T backward(const T& grad_out) override
    {
        T g = head_->backward(grad_out);
        std::vector<T> skip_grads(skips_.size());
        for (std::size_t i = ups_.size(); i-- > 0;) {
            const T gc = decoders_[i]->backward(g);
            const Index sc = skip_channels_[i];
            skip_grads[skips_.size() - 1 - i] = nn::slice_channels(gc, 0, sc);
            g = ups_[i]->backward(nn::slice_channels(gc, sc, gc.channels() - sc));
        }
        g = bottleneck_->backward(g);
        for (std::size_t l = encoders_.size(); l-- > 0;) {
            g = pools_[l]->backward(g);
            g.values() += skip_grads[l].values();
            g = encoders_[l]->backward(g);
        }
        return g;
    }

    void collect_parameters(std::vector<nn::Parameter<Scalar>*>& out) override
    {
        for (auto& e : encoders_)
            e->collect_parameters(out);
        bottleneck_->collect_parameters(out);
        for (std::size_t i = 0; i < ups_.size(); ++i) {
            ups_[i]->collect_parameters(out);
            decoders_[i]->collect_parameters(out);
        }
        head_->collect_parameters(out);
    }

    std::string kind() const override { return "unet"; }

private:
    static nn::ConvSpec conv3(Index in, Index out)
    {
        return {in, out, 3, 1, 1, nn::Padding::Zero, nn::Init::He};
    }

    static std::unique_ptr<Seq> double_conv(Index in, Index out, Rng& rng, const std::string& name)
    {
        auto s = std::make_unique<Seq>();
        s->template emplace<nn::Conv2d<Scalar>>(conv3(in, out), rng, name + ".0");
        s->template emplace<nn::ReLU<Scalar>>();
        s->template emplace<nn::Conv2d<Scalar>>(conv3(out, out), rng, name + ".1");
        s->template emplace<nn::ReLU<Scalar>>();
        return s;
    }

    UNetConfig config_;
    std::vector<std::unique_ptr<Seq>> encoders_;
    std::vector<std::unique_ptr<nn::MaxPool2x2<Scalar>>> pools_;
    std::unique_ptr<Seq> bottleneck_;
    std::vector<std::unique_ptr<Seq>> ups_;
    std::vector<std::unique_ptr<Seq>> decoders_;
    std::unique_ptr<nn::Conv2d<Scalar>> head_;

    std::vector<T> skips_;
    std::vector<Index> skip_channels_;
};

// Mean per-pixel binary cross-entropy on logits, in the overflow-free form
// max(z,0) - z*t + log(1 + exp(-|z|)). `weight` (optional, same shape) masks
// pixels out of the mean.
template <typename Scalar>
Scalar bce_with_logits(const nn::Tensor<Scalar>& logits, const nn::Tensor<Scalar>& target,
                       nn::Tensor<Scalar>* grad = nullptr, const nn::Tensor<Scalar>* weight = nullptr)
{
    if (!(logits.shape() == target.shape()) || (weight && !(weight->shape() == logits.shape())))
        throw ShapeError("BCE operands differ: " + logits.shape().str() + " vs " + target.shape().str());
    const Scalar n = weight ? weight->values().sum() : static_cast<Scalar>(logits.size());
    if (!(n > Scalar(0)))
        throw PreconditionError("BCE over zero pixels");
    if (grad)
        *grad = nn::Tensor<Scalar>(logits.shape());
    Scalar total = 0;
    for (Index i = 0; i < logits.size(); ++i) {
        const Scalar w = weight ? weight->values()[i] : Scalar(1);
        if (w == Scalar(0))
            continue;
        const Scalar z = logits.values()[i], t = target.values()[i];
        total += w * (std::max(z, Scalar(0)) - z * t + std::log1p(std::exp(-std::abs(z))));
        if (grad)
            grad->values()[i] = w * (nn::sigmoid(z) - t) / n;
    }
    return total / n;
}

// Mean BCE of probabilities clipped to [eps, 1-eps].
template <typename Scalar>
Scalar bce_clipped(const nn::Tensor<Scalar>& probability, const nn::Tensor<Scalar>& target, Scalar eps)
{
    if (!(probability.shape() == target.shape()))
        throw ShapeError("BCE operands differ");
    Scalar total = 0;
    for (Index i = 0; i < probability.size(); ++i) {
        const Scalar p = std::clamp(probability.values()[i], eps, Scalar(1) - eps);
        const Scalar t = target.values()[i];
        total -= t * std::log(p) + (Scalar(1) - t) * std::log(Scalar(1) - p);
    }
    return total / static_cast<Scalar>(probability.size());
}

} // namespace maskcycle::segmentation
