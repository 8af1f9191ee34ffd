#pragma once

#include <cmath>
#include <deque>
#include <sstream>
#include <string>

#include "maskcycle/nn/optim.hpp"
#include "maskcycle/translation/model.hpp"

namespace maskcycle::translation {

struct LossReport {
    std::int64_t step = 0;
    double adv_s2r = 0;       // G_{S->R} fooling D_R
    double adv_r2s = 0;       // G_{R->S} fooling D_S
    double cycle_s_image = 0; // S->R->S image L1
    double cycle_s_mask = 0;  // S->R->S mask distance
    double cycle_r_image = 0; // R->S->R image L1
    double cycle_total = 0;   // weighted sum of the three cycle terms
    double generator_total = 0;
    double d_s = 0;
    double d_r = 0;

    bool all_finite() const
    {
        for (double v : {adv_s2r, adv_r2s, cycle_s_image, cycle_s_mask, cycle_r_image, cycle_total, generator_total,
                         d_s, d_r})
            if (!std::isfinite(v))
                return false;
        return true;
    }

    static std::string csv_header()
    {
        return "step,adv_s2r,adv_r2s,cycle_s_image,cycle_s_mask,cycle_r_image,cycle_total,generator_total,d_s,d_r";
    }
    std::string csv_row() const
    {
        std::ostringstream out;
        out.precision(9);
        out << step << ',' << adv_s2r << ',' << adv_r2s << ',' << cycle_s_image << ',' << cycle_s_mask << ','
            << cycle_r_image << ',' << cycle_total << ',' << generator_total << ',' << d_s << ',' << d_r;
        return out.str();
    }
};

// History of generated samples; discriminators see a mix of current and past
// fakes once the pool is full.
template <typename Scalar>
class ImagePool {
public:
    ImagePool(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(substream(seed, 0, 0x9001)) {}

    nn::Tensor<Scalar> query(const nn::Tensor<Scalar>& batch)
    {
        if (capacity_ == 0)
            return batch;
        nn::Tensor<Scalar> out(batch.shape());
        for (Index n = 0; n < batch.batch(); ++n) {
            nn::Tensor<Scalar> one(1, batch.channels(), batch.height(), batch.width());
            one.sample(0) = batch.sample(n);
            if (stored_.size() < capacity_) {
                stored_.push_back(one);
                out.sample(n) = one.sample(0);
            } else if (std::bernoulli_distribution(0.5)(rng_)) {
                const auto k = std::uniform_int_distribution<std::size_t>(0, capacity_ - 1)(rng_);
                out.sample(n) = stored_[k].sample(0);
                stored_[k] = std::move(one);
            } else {
                out.sample(n) = one.sample(0);
            }
        }
        return out;
    }

    std::size_t size() const { return stored_.size(); }

private:
    std::size_t capacity_;
    Rng rng_;
    std::deque<nn::Tensor<Scalar>> stored_;
};

template <typename Scalar>
struct GeneratorPass {
    LossReport report;
    nn::Tensor<Scalar> fake_r;         // G_{S->R}(x)
    nn::Tensor<Scalar> fake_s_encoded; // G_{R->S}(y) with its mask encoded to [-1,1]
};

// Full generator objective for one batch pair. Accumulates gradients into the
// generator parameters (callers zero them first); discriminator gradients
// produced along the way are cleared before returning.
template <typename Scalar>
GeneratorPass<Scalar> generator_objective(TranslationModel<Scalar>& model, const MaskedBatch<Scalar>& batch_s,
                                          const nn::Tensor<Scalar>& batch_r)
{
    using T = nn::Tensor<Scalar>;
    batch_s.validate();
    if (batch_r.channels() != 3)
        throw ShapeError("real batch must have 3 channels");
    if (batch_s.size() != batch_r.batch())
        throw PreconditionError("synthetic and real batches must have equal size");
    const LossWeights& w = model.weights();
    const Scalar lambda_adv = static_cast<Scalar>(w.lambda_adv);
    GeneratorPass<Scalar> pass;
    LossReport& r = pass.report;

    // S -> R -> S
    const T input_s = nn::concat_channels(batch_s.images, encode_mask(batch_s.masks));
    pass.fake_r = forward_s2r(model, input_s);
    const MaskedBatch<Scalar> rec_s = split_image_mask(model.g_r2s().forward(pass.fake_r));
    auto cyc_s = cycle_loss_grad(batch_s, rec_s, w, model.mask_loss());
    const T grad_fake_r_cycle = model.g_r2s().backward(nn::concat_channels(cyc_s.image_grad, cyc_s.mask_grad));

    auto adv_r = adversarial_loss_grad(model.d_r().forward(pass.fake_r), true);
    adv_r.grad.values() *= lambda_adv;
    T grad_fake_r = model.d_r().backward(adv_r.grad);
    grad_fake_r.values() += grad_fake_r_cycle.values();
    model.g_s2r().backward(grad_fake_r);

    // R -> S -> R; the recreated soft mask rides along as G_{S->R}'s mask input
    const T fake_s = model.g_r2s().forward(batch_r);
    MaskedBatch<Scalar> fake_s_split = split_image_mask(fake_s);
    pass.fake_s_encoded = nn::concat_channels(fake_s_split.images, encode_mask(fake_s_split.masks));
    const T rec_r = model.g_s2r().forward(pass.fake_s_encoded);
    auto cyc_r = l1_loss(rec_r, batch_r);
    cyc_r.grad.values() *= static_cast<Scalar>(w.lambda_cycle_image);
    T grad_fake_s_enc = model.g_s2r().backward(cyc_r.grad);

    auto adv_s = adversarial_loss_grad(model.d_s().forward(pass.fake_s_encoded), true);
    adv_s.grad.values() *= lambda_adv;
    grad_fake_s_enc.values() += model.d_s().backward(adv_s.grad).values();
    // d(2m - 1)/dm = 2 on the mask channel
    for (Index n = 0; n < grad_fake_s_enc.batch(); ++n)
        grad_fake_s_enc.sample(n).row(3) *= Scalar(2);
    model.g_r2s().backward(grad_fake_s_enc);

    nn::zero_grad(model.d_s_parameters());
    nn::zero_grad(model.d_r_parameters());

    r.step = model.step_count;
    r.adv_s2r = static_cast<double>(adv_r.value);
    r.adv_r2s = static_cast<double>(adv_s.value);
    r.cycle_s_image = static_cast<double>(cyc_s.loss.image);
    r.cycle_s_mask = static_cast<double>(cyc_s.loss.mask);
    r.cycle_r_image = static_cast<double>(cyc_r.value);
    r.cycle_total = static_cast<double>(cyc_s.loss.total) + w.lambda_cycle_image * r.cycle_r_image;
    r.generator_total = w.lambda_adv * (r.adv_s2r + r.adv_r2s) + r.cycle_total;
    return pass;
}

// 0.5 * (mse(D(real), 1) + mse(D(fake), 0)); accumulates D gradients.
template <typename Scalar>
Scalar discriminator_objective(nn::Sequential<Scalar>& d, const nn::Tensor<Scalar>& real,
                               const nn::Tensor<Scalar>& fake)
{
    auto on_real = adversarial_loss_grad(d.forward(real), true);
    on_real.grad.values() *= Scalar(0.5);
    d.backward(on_real.grad);
    auto on_fake = adversarial_loss_grad(d.forward(fake), false);
    on_fake.grad.values() *= Scalar(0.5);
    d.backward(on_fake.grad);
    return Scalar(0.5) * (on_real.value + on_fake.value);
}

template <typename Scalar>
Scalar discriminator_loss(nn::Sequential<Scalar>& d, const nn::Tensor<Scalar>& real, const nn::Tensor<Scalar>& fake)
{
    return Scalar(0.5) * (adversarial_loss(d.forward(real), true) + adversarial_loss(d.forward(fake), false));
}

// Owns the optimizers, fake pools and learning-rate schedule for one model.
template <typename Scalar>
class TranslationTrainer {
public:
    explicit TranslationTrainer(TranslationModel<Scalar>& model)
        : model_(model),
          schedule_(model.config().schedule),
          g_opt_(model.generator_parameters(), {schedule_.beta1, 0.999, 1e-8}),
          ds_opt_(model.d_s_parameters(), {schedule_.beta1, 0.999, 1e-8}),
          dr_opt_(model.d_r_parameters(), {schedule_.beta1, 0.999, 1e-8}),
          pool_s_(schedule_.pool_size, model.config().seed + 1),
          pool_r_(schedule_.pool_size, model.config().seed + 2)
    {
    }

    // Constant for the first decay_start * total_steps steps, then linear to 0.
    double learning_rate_at(std::int64_t step) const
    {
        const double total = static_cast<double>(std::max<long>(1, schedule_.total_steps));
        const double start = schedule_.decay_start * total;
        const double s = static_cast<double>(step);
        if (s < start)
            return schedule_.learning_rate;
        const double remaining = std::max(0.0, 1.0 - (s - start + 1.0) / (total - start + 1.0));
        return schedule_.learning_rate * remaining;
    }

    // One generator update followed by one update of each discriminator.
    LossReport train_step(const MaskedBatch<Scalar>& batch_s, const nn::Tensor<Scalar>& batch_r)
    {
        const double lr = learning_rate_at(model_.step_count);

        nn::zero_grad(model_.generator_parameters());
        GeneratorPass<Scalar> pass = generator_objective(model_, batch_s, batch_r);
        LossReport report = pass.report;
        if (!report.all_finite())
            throw NumericError("non-finite generator loss at step " + std::to_string(model_.step_count) + ": " +
                               LossReport::csv_header() + " = " + report.csv_row());
        g_opt_.step(lr);

        const nn::Tensor<Scalar> real_s = nn::concat_channels(batch_s.images, encode_mask(batch_s.masks));
        nn::zero_grad(model_.d_s_parameters());
        report.d_s = static_cast<double>(discriminator_objective(model_.d_s(), real_s, pool_s_.query(pass.fake_s_encoded)));
        nn::zero_grad(model_.d_r_parameters());
        report.d_r = static_cast<double>(discriminator_objective(model_.d_r(), batch_r, pool_r_.query(pass.fake_r)));
        if (!report.all_finite())
            throw NumericError("non-finite discriminator loss at step " + std::to_string(model_.step_count) + ": " +
                               LossReport::csv_header() + " = " + report.csv_row());
        ds_opt_.step(lr);
        dr_opt_.step(lr);

        ++model_.step_count;
        return report;
    }

private:
    TranslationModel<Scalar>& model_;
    TrainSchedule schedule_;
    nn::Adam<Scalar> g_opt_;
    nn::Adam<Scalar> ds_opt_;
    nn::Adam<Scalar> dr_opt_;
    ImagePool<Scalar> pool_s_;
    ImagePool<Scalar> pool_r_;
};

} // namespace maskcycle::translation
