#pragma once

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "maskcycle/nn/tensor.hpp"

namespace maskcycle::nn {

template <typename Scalar>
struct Parameter {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    std::string name;
    Matrix value;
    Matrix grad;

    Parameter(std::string n, Index rows, Index cols)
        : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols))
    {
    }
};

// Layers cache whatever their backward pass needs during forward, so a
// forward/backward pair must not be interleaved with another forward on the
// same layer instance.
template <typename Scalar>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<Scalar> forward(const Tensor<Scalar>& x) = 0;
    virtual Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) = 0;
    virtual void collect_parameters(std::vector<Parameter<Scalar>*>& /*out*/) {}
    virtual std::string kind() const = 0;
};

template <typename Scalar>
std::vector<Parameter<Scalar>*> parameters_of(Layer<Scalar>& layer)
{
    std::vector<Parameter<Scalar>*> out;
    layer.collect_parameters(out);
    return out;
}

template <typename Scalar>
void zero_grad(const std::vector<Parameter<Scalar>*>& params)
{
    for (auto* p : params)
        p->grad.setZero();
}

enum class Padding { Zero, Reflect };

enum class Init {
    Normal002, // N(0, 0.02), the usual GAN initialization
    He,        // N(0, sqrt(2 / fan_in))
};

struct ConvSpec {
    Index in_channels = 1;
    Index out_channels = 1;
    Index kernel = 3;
    Index stride = 1;
    Index padding = 0;
    Padding mode = Padding::Zero;
    Init init = Init::Normal002;
};

namespace detail {

// For one spatial axis: source coordinate read by kernel tap k at output
// position o, or -1 for a zero-padded tap.
inline std::vector<Index> tap_table(Index length, Index kernel, Index stride, Index pad, Padding mode, Index out_len)
{
    std::vector<Index> table(static_cast<std::size_t>(kernel * out_len));
    for (Index k = 0; k < kernel; ++k) {
        for (Index o = 0; o < out_len; ++o) {
            Index i = o * stride - pad + k;
            if (i < 0 || i >= length) {
                if (mode == Padding::Zero) {
                    i = -1;
                } else {
                    if (i < 0)
                        i = -i;
                    if (i >= length)
                        i = 2 * (length - 1) - i;
                }
            }
            table[static_cast<std::size_t>(k * out_len + o)] = i;
        }
    }
    return table;
}

} // namespace detail

template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
public:
    using Matrix = typename Tensor<Scalar>::Matrix;

    Conv2d(const ConvSpec& spec, std::mt19937_64& rng, std::string name = "conv")
        : spec_(spec),
          weight_(name + ".weight", spec.out_channels, spec.in_channels * spec.kernel * spec.kernel),
          bias_(name + ".bias", spec.out_channels, 1)
    {
        if (spec.in_channels < 1 || spec.out_channels < 1 || spec.kernel < 1 || spec.stride < 1 || spec.padding < 0)
            throw ConfigError("invalid convolution spec for " + name);
        const double fan_in = static_cast<double>(spec.in_channels * spec.kernel * spec.kernel);
        const double stddev = spec.init == Init::He ? std::sqrt(2.0 / fan_in) : 0.02;
        std::normal_distribution<double> dist(0.0, stddev);
        for (Index i = 0; i < weight_.value.size(); ++i)
            weight_.value.data()[i] = static_cast<Scalar>(dist(rng));
    }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        if (x.channels() != spec_.in_channels)
            throw ShapeError(weight_.name + " expects " + std::to_string(spec_.in_channels) + " channels, got " +
                             x.shape().str());
        if (spec_.mode == Padding::Reflect && (spec_.padding >= x.height() || spec_.padding >= x.width()))
            throw ShapeError(weight_.name + ": reflect padding larger than input " + x.shape().str());
        in_shape_ = x.shape();
        out_h_ = (x.height() + 2 * spec_.padding - spec_.kernel) / spec_.stride + 1;
        out_w_ = (x.width() + 2 * spec_.padding - spec_.kernel) / spec_.stride + 1;
        if (out_h_ < 1 || out_w_ < 1)
            throw ShapeError(weight_.name + ": input " + x.shape().str() + " too small for kernel");
        rows_ = detail::tap_table(x.height(), spec_.kernel, spec_.stride, spec_.padding, spec_.mode, out_h_);
        cols_tab_ = detail::tap_table(x.width(), spec_.kernel, spec_.stride, spec_.padding, spec_.mode, out_w_);

        Tensor<Scalar> out(x.batch(), spec_.out_channels, out_h_, out_w_);
        columns_.resize(static_cast<std::size_t>(x.batch()));
        for (Index n = 0; n < x.batch(); ++n) {
            Matrix& cols = columns_[static_cast<std::size_t>(n)];
            im2col(x.sample(n), cols);
            out.sample(n).noalias() = weight_.value * cols;
            out.sample(n).colwise() += bias_.value.col(0);
        }
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> grad_in(in_shape_);
        Matrix dcols;
        for (Index n = 0; n < grad_out.batch(); ++n) {
            const auto g = grad_out.sample(n);
            const Matrix& cols = columns_[static_cast<std::size_t>(n)];
            weight_.grad.noalias() += g * cols.transpose();
            bias_.grad.col(0) += g.rowwise().sum().transpose();
            dcols.noalias() = weight_.value.transpose() * g;
            auto gi = grad_in.sample(n);
            col2im(dcols, gi);
        }
        return grad_in;
    }

    void collect_parameters(std::vector<Parameter<Scalar>*>& out) override
    {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    std::string kind() const override { return "conv2d"; }
    const ConvSpec& spec() const { return spec_; }
    Parameter<Scalar>& weight() { return weight_; }
    Parameter<Scalar>& bias() { return bias_; }

private:
    template <typename In>
    void im2col(const In& in, Matrix& cols) const
    {
        const Index k = spec_.kernel;
        const Index width = in_shape_.width;
        cols.resize(spec_.in_channels * k * k, out_h_ * out_w_);
        for (Index c = 0; c < spec_.in_channels; ++c) {
            for (Index ky = 0; ky < k; ++ky) {
                for (Index kx = 0; kx < k; ++kx) {
                    const Index row = (c * k + ky) * k + kx;
                    Scalar* dst = cols.row(row).data();
                    for (Index oy = 0; oy < out_h_; ++oy) {
                        const Index iy = rows_[static_cast<std::size_t>(ky * out_h_ + oy)];
                        for (Index ox = 0; ox < out_w_; ++ox) {
                            const Index ix = cols_tab_[static_cast<std::size_t>(kx * out_w_ + ox)];
                            dst[oy * out_w_ + ox] = (iy < 0 || ix < 0) ? Scalar(0) : in(c, iy * width + ix);
                        }
                    }
                }
            }
        }
    }

    template <typename Out>
    void col2im(const Matrix& cols, Out& out) const
    {
        const Index k = spec_.kernel;
        const Index width = in_shape_.width;
        for (Index c = 0; c < spec_.in_channels; ++c) {
            for (Index ky = 0; ky < k; ++ky) {
                for (Index kx = 0; kx < k; ++kx) {
                    const Index row = (c * k + ky) * k + kx;
                    const Scalar* src = cols.row(row).data();
                    for (Index oy = 0; oy < out_h_; ++oy) {
                        const Index iy = rows_[static_cast<std::size_t>(ky * out_h_ + oy)];
                        if (iy < 0)
                            continue;
                        for (Index ox = 0; ox < out_w_; ++ox) {
                            const Index ix = cols_tab_[static_cast<std::size_t>(kx * out_w_ + ox)];
                            if (ix >= 0)
                                out(c, iy * width + ix) += src[oy * out_w_ + ox];
                        }
                    }
                }
            }
        }
    }

    ConvSpec spec_;
    Parameter<Scalar> weight_;
    Parameter<Scalar> bias_;
    Shape in_shape_;
    Index out_h_ = 0;
    Index out_w_ = 0;
    std::vector<Index> rows_;
    std::vector<Index> cols_tab_;
    std::vector<Matrix> columns_;
};

// Per-sample, per-channel normalization without affine parameters.
template <typename Scalar>
class InstanceNorm final : public Layer<Scalar> {
public:
    explicit InstanceNorm(Scalar eps = Scalar(1e-5)) : eps_(eps) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        normalized_ = Tensor<Scalar>(x.shape());
        inv_std_.resize(x.batch(), x.channels());
        for (Index n = 0; n < x.batch(); ++n) {
            const auto in = x.sample(n);
            auto out = normalized_.sample(n);
            for (Index c = 0; c < x.channels(); ++c) {
                const Scalar mean = in.row(c).mean();
                const Scalar var = (in.row(c).array() - mean).square().mean();
                const Scalar inv = Scalar(1) / std::sqrt(var + eps_);
                inv_std_(n, c) = inv;
                out.row(c) = (in.row(c).array() - mean) * inv;
            }
        }
        return normalized_;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> grad_in(grad_out.shape());
        for (Index n = 0; n < grad_out.batch(); ++n) {
            const auto g = grad_out.sample(n);
            const auto xhat = normalized_.sample(n);
            auto gi = grad_in.sample(n);
            for (Index c = 0; c < grad_out.channels(); ++c) {
                const Scalar mean_g = g.row(c).mean();
                const Scalar mean_gx = (g.row(c).array() * xhat.row(c).array()).mean();
                gi.row(c) = inv_std_(n, c) * (g.row(c).array() - mean_g - xhat.row(c).array() * mean_gx);
            }
        }
        return grad_in;
    }

    std::string kind() const override { return "instance_norm"; }

private:
    Scalar eps_;
    Tensor<Scalar> normalized_;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> inv_std_;
};

template <typename Scalar>
class ReLU final : public Layer<Scalar> {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        input_ = x;
        Tensor<Scalar> out(x.shape());
        out.values() = x.values().cwiseMax(Scalar(0));
        return out;
    }
    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g(grad_out.shape());
        g.values() = (input_.values().array() > Scalar(0)).select(grad_out.values(), Scalar(0));
        return g;
    }
    std::string kind() const override { return "relu"; }

private:
    Tensor<Scalar> input_;
};

template <typename Scalar>
class LeakyReLU final : public Layer<Scalar> {
public:
    explicit LeakyReLU(Scalar slope = Scalar(0.2)) : slope_(slope) {}
    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        input_ = x;
        Tensor<Scalar> out(x.shape());
        out.values() = (x.values().array() > Scalar(0)).select(x.values(), x.values() * slope_);
        return out;
    }
    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g(grad_out.shape());
        g.values() = (input_.values().array() > Scalar(0)).select(grad_out.values(), grad_out.values() * slope_);
        return g;
    }
    std::string kind() const override { return "leaky_relu"; }

private:
    Scalar slope_;
    Tensor<Scalar> input_;
};

template <typename Scalar>
class Tanh final : public Layer<Scalar> {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        output_ = Tensor<Scalar>(x.shape());
        output_.values() = x.values().array().tanh();
        return output_;
    }
    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g(grad_out.shape());
        g.values() = grad_out.values().array() * (Scalar(1) - output_.values().array().square());
        return g;
    }
    std::string kind() const override { return "tanh"; }

private:
    Tensor<Scalar> output_;
};

template <typename Scalar>
Scalar sigmoid(Scalar z)
{
    return z >= Scalar(0) ? Scalar(1) / (Scalar(1) + std::exp(-z)) : std::exp(z) / (Scalar(1) + std::exp(z));
}

template <typename Scalar>
class Sigmoid final : public Layer<Scalar> {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        output_ = Tensor<Scalar>(x.shape());
        output_.values() = x.values().unaryExpr([](Scalar z) { return sigmoid(z); });
        return output_;
    }
    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g(grad_out.shape());
        g.values() = grad_out.values().array() * output_.values().array() * (Scalar(1) - output_.values().array());
        return g;
    }
    std::string kind() const override { return "sigmoid"; }

private:
    Tensor<Scalar> output_;
};

// Output head for generators emitting image + mask: tanh on the first
// `split` channels (image range [-1,1]) and sigmoid on the rest ([0,1]).
template <typename Scalar>
class TanhSigmoidHead final : public Layer<Scalar> {
public:
    explicit TanhSigmoidHead(Index split) : split_(split) {}

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        if (x.channels() <= split_)
            throw ShapeError("head split exceeds channel count");
        output_ = Tensor<Scalar>(x.shape());
        for (Index n = 0; n < x.batch(); ++n) {
            const auto in = x.sample(n);
            auto out = output_.sample(n);
            out.topRows(split_) = in.topRows(split_).array().tanh();
            out.bottomRows(x.channels() - split_) =
                in.bottomRows(x.channels() - split_).unaryExpr([](Scalar z) { return sigmoid(z); });
        }
        return output_;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g(grad_out.shape());
        const Index rest = grad_out.channels() - split_;
        for (Index n = 0; n < grad_out.batch(); ++n) {
            const auto y = output_.sample(n);
            const auto go = grad_out.sample(n);
            auto gi = g.sample(n);
            gi.topRows(split_) = go.topRows(split_).array() * (Scalar(1) - y.topRows(split_).array().square());
            gi.bottomRows(rest) =
                go.bottomRows(rest).array() * y.bottomRows(rest).array() * (Scalar(1) - y.bottomRows(rest).array());
        }
        return g;
    }

    std::string kind() const override { return "tanh_sigmoid_head"; }

private:
    Index split_;
    Tensor<Scalar> output_;
};

// Nearest-neighbour 2x upsampling.
template <typename Scalar>
class Upsample2x final : public Layer<Scalar> {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        in_shape_ = x.shape();
        Tensor<Scalar> out(x.batch(), x.channels(), 2 * x.height(), 2 * x.width());
        for (Index n = 0; n < x.batch(); ++n)
            for (Index c = 0; c < x.channels(); ++c)
                for (Index y = 0; y < out.height(); ++y)
                    for (Index xx = 0; xx < out.width(); ++xx)
                        out.at(n, c, y, xx) = x.at(n, c, y / 2, xx / 2);
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g(in_shape_);
        for (Index n = 0; n < grad_out.batch(); ++n)
            for (Index c = 0; c < grad_out.channels(); ++c)
                for (Index y = 0; y < grad_out.height(); ++y)
                    for (Index xx = 0; xx < grad_out.width(); ++xx)
                        g.at(n, c, y / 2, xx / 2) += grad_out.at(n, c, y, xx);
        return g;
    }

    std::string kind() const override { return "upsample2x"; }

private:
    Shape in_shape_;
};

template <typename Scalar>
class MaxPool2x2 final : public Layer<Scalar> {
public:
    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        if (x.height() % 2 != 0 || x.width() % 2 != 0)
            throw ShapeError("max pooling needs even spatial size, got " + x.shape().str());
        in_shape_ = x.shape();
        Tensor<Scalar> out(x.batch(), x.channels(), x.height() / 2, x.width() / 2);
        argmax_.assign(static_cast<std::size_t>(out.size()), 0);
        std::size_t k = 0;
        for (Index n = 0; n < x.batch(); ++n)
            for (Index c = 0; c < x.channels(); ++c)
                for (Index y = 0; y < out.height(); ++y)
                    for (Index xx = 0; xx < out.width(); ++xx, ++k) {
                        Index best = 0;
                        Scalar best_v = x.at(n, c, 2 * y, 2 * xx);
                        for (Index t = 1; t < 4; ++t) {
                            const Scalar v = x.at(n, c, 2 * y + t / 2, 2 * xx + t % 2);
                            if (v > best_v) {
                                best_v = v;
                                best = t;
                            }
                        }
                        out.at(n, c, y, xx) = best_v;
                        argmax_[k] = best;
                    }
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g(in_shape_);
        std::size_t k = 0;
        for (Index n = 0; n < grad_out.batch(); ++n)
            for (Index c = 0; c < grad_out.channels(); ++c)
                for (Index y = 0; y < grad_out.height(); ++y)
                    for (Index xx = 0; xx < grad_out.width(); ++xx, ++k) {
                        const Index t = argmax_[k];
                        g.at(n, c, 2 * y + t / 2, 2 * xx + t % 2) += grad_out.at(n, c, y, xx);
                    }
        return g;
    }

    std::string kind() const override { return "maxpool2x2"; }

private:
    Shape in_shape_;
    std::vector<Index> argmax_;
};

template <typename Scalar>
class Sequential final : public Layer<Scalar> {
public:
    Sequential() = default;

    template <typename L, typename... Args>
    L& emplace(Args&&... args)
    {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    void push(std::unique_ptr<Layer<Scalar>> layer) { layers_.push_back(std::move(layer)); }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        Tensor<Scalar> h = x;
        for (auto& layer : layers_)
            h = layer->forward(h);
        return h;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g = grad_out;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
            g = (*it)->backward(g);
        return g;
    }

    void collect_parameters(std::vector<Parameter<Scalar>*>& out) override
    {
        for (auto& layer : layers_)
            layer->collect_parameters(out);
    }

    std::string kind() const override { return "sequential"; }
    std::size_t size() const { return layers_.size(); }

private:
    std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

// out = x + body(x)
template <typename Scalar>
class Residual final : public Layer<Scalar> {
public:
    Sequential<Scalar>& body() { return body_; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override
    {
        Tensor<Scalar> out = body_.forward(x);
        if (!(out.shape() == x.shape()))
            throw ShapeError("residual body changed shape");
        out.values() += x.values();
        return out;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& grad_out) override
    {
        Tensor<Scalar> g = body_.backward(grad_out);
        g.values() += grad_out.values();
        return g;
    }

    void collect_parameters(std::vector<Parameter<Scalar>*>& out) override { body_.collect_parameters(out); }
    std::string kind() const override { return "residual"; }

private:
    Sequential<Scalar> body_;
};

} // namespace maskcycle::nn
