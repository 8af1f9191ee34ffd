#pragma once

#include <cmath>
#include <vector>

#include "maskcycle/nn/layers.hpp"

namespace maskcycle::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed parameter list. The list order defines the moment
// buffers, so the same optimizer must always be stepped with the same list.
template <typename Scalar>
class Adam {
public:
    using Matrix = typename Parameter<Scalar>::Matrix;

    Adam(std::vector<Parameter<Scalar>*> params, AdamConfig config = {})
        : params_(std::move(params)), config_(config)
    {
        for (auto* p : params_) {
            first_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            second_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step(double learning_rate)
    {
        ++steps_;
        const Scalar b1 = static_cast<Scalar>(config_.beta1);
        const Scalar b2 = static_cast<Scalar>(config_.beta2);
        const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(config_.beta1, static_cast<double>(steps_)));
        const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(config_.beta2, static_cast<double>(steps_)));
        const Scalar lr = static_cast<Scalar>(learning_rate);
        const Scalar eps = static_cast<Scalar>(config_.eps);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i];
            first_[i] = b1 * first_[i] + (Scalar(1) - b1) * p.grad;
            second_[i] = b2 * second_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
            const auto m_hat = first_[i].array() / c1;
            const auto v_hat = second_[i].array() / c2;
            p.value.array() -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    long steps() const { return steps_; }
    const std::vector<Parameter<Scalar>*>& parameters() const { return params_; }

private:
    std::vector<Parameter<Scalar>*> params_;
    AdamConfig config_;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    long steps_ = 0;
};

} // namespace maskcycle::nn
