#pragma once

#include <algorithm>
#include <cmath>

#include "maskcycle/nn/tensor.hpp"
#include "maskcycle/translation/config.hpp"

namespace maskcycle::translation {

template <typename Scalar>
struct LossGrad {
    Scalar value = 0;
    nn::Tensor<Scalar> grad; // d value / d prediction
};

// Mean absolute difference; gradient taken with respect to `prediction`.
template <typename Scalar>
LossGrad<Scalar> l1_loss(const nn::Tensor<Scalar>& prediction, const nn::Tensor<Scalar>& target)
{
    if (!(prediction.shape() == target.shape()))
        throw ShapeError("L1 operands differ: " + prediction.shape().str() + " vs " + target.shape().str());
    const auto diff = (prediction.values() - target.values()).array();
    const Scalar n = static_cast<Scalar>(prediction.size());
    LossGrad<Scalar> out{diff.abs().sum() / n, nn::Tensor<Scalar>(prediction.shape())};
    out.grad.values() = diff.sign().matrix() / n;
    return out;
}

// Per-pixel cross-entropy against a {0,1} target, probabilities clipped to
// [eps, 1-eps].
template <typename Scalar>
LossGrad<Scalar> bce_loss(const nn::Tensor<Scalar>& probability, const nn::Tensor<Scalar>& target,
                          Scalar eps = Scalar(1e-6))
{
    if (!(probability.shape() == target.shape()))
        throw ShapeError("BCE operands differ");
    const Scalar n = static_cast<Scalar>(probability.size());
    LossGrad<Scalar> out{0, nn::Tensor<Scalar>(probability.shape())};
    for (Index i = 0; i < probability.size(); ++i) {
        const Scalar p = std::clamp(probability.values()[i], eps, Scalar(1) - eps);
        const Scalar t = target.values()[i];
        out.value -= t * std::log(p) + (Scalar(1) - t) * std::log(Scalar(1) - p);
        out.grad.values()[i] = (p - t) / (p * (Scalar(1) - p)) / n;
    }
    out.value /= n;
    return out;
}

// Least-squares adversarial objective mean((score - t)^2), t = 1 for real.
template <typename Scalar>
LossGrad<Scalar> adversarial_loss_grad(const nn::Tensor<Scalar>& scores, bool target_is_real)
{
    if (!scores.all_finite())
        throw NumericError("non-finite discriminator scores");
    const Scalar t = target_is_real ? Scalar(1) : Scalar(0);
    const auto diff = (scores.values().array() - t);
    const Scalar n = static_cast<Scalar>(scores.size());
    LossGrad<Scalar> out{diff.square().sum() / n, nn::Tensor<Scalar>(scores.shape())};
    out.grad.values() = (Scalar(2) * diff / n).matrix();
    return out;
}

template <typename Scalar>
Scalar adversarial_loss(const nn::Tensor<Scalar>& scores, bool target_is_real)
{
    return adversarial_loss_grad(scores, target_is_real).value;
}

// A batch of (RGB image, single-channel mask). Inside the translation module
// images live in [-1,1] and masks in [0,1].
template <typename Scalar>
struct MaskedBatch {
    nn::Tensor<Scalar> images;
    nn::Tensor<Scalar> masks;

    Index size() const { return images.batch(); }
    void validate() const
    {
        if (images.channels() != 3)
            throw ShapeError("masked batch images must have 3 channels, got " + images.shape().str());
        if (masks.channels() != 1)
            throw ShapeError("masked batch masks must have 1 channel, got " + masks.shape().str());
        if (images.batch() != masks.batch() || images.height() != masks.height() || images.width() != masks.width())
            throw ShapeError("masked batch images " + images.shape().str() + " and masks " + masks.shape().str() +
                             " disagree");
    }
};

template <typename Scalar>
struct CycleLoss {
    Scalar total = 0;
    Scalar image = 0; // unweighted L1 between images
    Scalar mask = 0;  // unweighted mask distance
};

template <typename Scalar>
struct CycleLossGrad {
    CycleLoss<Scalar> loss;
    nn::Tensor<Scalar> image_grad; // d total / d recreated image
    nn::Tensor<Scalar> mask_grad;  // d total / d recreated mask
};

template <typename Scalar>
CycleLossGrad<Scalar> cycle_loss_grad(const MaskedBatch<Scalar>& original, const MaskedBatch<Scalar>& recreated,
                                      const LossWeights& weights, MaskLoss mask_loss = MaskLoss::L1)
{
    original.validate();
    recreated.validate();
    if (!(original.images.shape() == recreated.images.shape()))
        throw ShapeError("cycle loss batches differ: " + original.images.shape().str() + " vs " +
                         recreated.images.shape().str());
    auto img = l1_loss(recreated.images, original.images);
    auto msk = mask_loss == MaskLoss::L1 ? l1_loss(recreated.masks, original.masks)
                                         : bce_loss(recreated.masks, original.masks);
    const Scalar wi = static_cast<Scalar>(weights.lambda_cycle_image);
    const Scalar wm = static_cast<Scalar>(weights.lambda_cycle_mask);
    CycleLossGrad<Scalar> out;
    out.loss = {wi * img.value + wm * msk.value, img.value, msk.value};
    out.image_grad = std::move(img.grad);
    out.image_grad.values() *= wi;
    out.mask_grad = std::move(msk.grad);
    out.mask_grad.values() *= wm;
    return out;
}

template <typename Scalar>
CycleLoss<Scalar> cycle_loss(const MaskedBatch<Scalar>& original, const MaskedBatch<Scalar>& recreated,
                             const LossWeights& weights, MaskLoss mask_loss = MaskLoss::L1)
{
    return cycle_loss_grad(original, recreated, weights, mask_loss).loss;
}

} // namespace maskcycle::translation
