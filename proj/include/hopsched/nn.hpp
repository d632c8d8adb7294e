#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "hopsched/errors.hpp"
#include "hopsched/rng.hpp"

namespace hopsched::nn {

/// A layer is a pure function of (parameters, input); activations and
/// gradients live in caller-owned buffers so forward passes stay const and
/// shareable across threads.
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::size_t param_count() const = 0;
    virtual std::size_t input_size() const = 0;
    virtual std::size_t output_size() const = 0;
    virtual void forward(const double* params, const std::vector<double>& in,
                         std::vector<double>& out) const = 0;
    /// Accumulates parameter gradients into pgrad and writes input
    /// gradients to din. `out` must hold the values forward produced.
    virtual void backward(const double* params, const std::vector<double>& in,
                          const std::vector<double>& out, const std::vector<double>& dout,
                          std::vector<double>& din, double* pgrad) const = 0;
    /// Xavier-uniform bound used at init; 0 for parameterless layers.
    virtual double init_bound() const { return 0.0; }
    /// Trailing entries of the parameter block that are biases (left at 0).
    virtual std::size_t bias_count() const { return 0; }
};

class Linear final : public Layer {
public:
    Linear(std::size_t in, std::size_t out) : in_(in), out_(out) {}

    std::size_t param_count() const override { return in_ * out_ + out_; }
    std::size_t input_size() const override { return in_; }
    std::size_t output_size() const override { return out_; }
    std::size_t bias_count() const override { return out_; }
    double init_bound() const override {
        return std::sqrt(6.0 / static_cast<double>(in_ + out_));
    }

    void forward(const double* params, const std::vector<double>& in,
                 std::vector<double>& out) const override {
        const double* w = params;
        const double* b = params + in_ * out_;
        for (std::size_t o = 0; o < out_; ++o) {
            double acc = b[o];
            const double* row = w + o * in_;
            for (std::size_t i = 0; i < in_; ++i) acc += row[i] * in[i];
            out[o] = acc;
        }
    }

    void backward(const double* params, const std::vector<double>& in, const std::vector<double>&,
                  const std::vector<double>& dout, std::vector<double>& din,
                  double* pgrad) const override {
        const double* w = params;
        double* dw = pgrad;
        double* db = pgrad + in_ * out_;
        for (std::size_t i = 0; i < in_; ++i) din[i] = 0.0;
        for (std::size_t o = 0; o < out_; ++o) {
            const double g = dout[o];
            const double* row = w + o * in_;
            double* drow = dw + o * in_;
            for (std::size_t i = 0; i < in_; ++i) {
                din[i] += g * row[i];
                drow[i] += g * in[i];
            }
            db[o] += g;
        }
    }

private:
    std::size_t in_, out_;
};

class Tanh final : public Layer {
public:
    explicit Tanh(std::size_t size) : size_(size) {}

    std::size_t param_count() const override { return 0; }
    std::size_t input_size() const override { return size_; }
    std::size_t output_size() const override { return size_; }

    void forward(const double*, const std::vector<double>& in,
                 std::vector<double>& out) const override {
        for (std::size_t i = 0; i < size_; ++i) out[i] = std::tanh(in[i]);
    }

    void backward(const double*, const std::vector<double>&, const std::vector<double>& out,
                  const std::vector<double>& dout, std::vector<double>& din,
                  double*) const override {
        for (std::size_t i = 0; i < size_; ++i) din[i] = dout[i] * (1.0 - out[i] * out[i]);
    }

private:
    std::size_t size_;
};

/// 1-D convolution, valid padding. Buffers are channel-major:
/// value(channel c, position x) = buf[c * length + x].
class Conv1d final : public Layer {
public:
    Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
           std::size_t stride, std::size_t in_length)
        : ic_(in_channels), oc_(out_channels), k_(kernel), s_(stride), il_(in_length) {
        if (kernel > in_length) throw std::domain_error("conv kernel exceeds input length");
        if (stride == 0) throw std::domain_error("conv stride must be positive");
        ol_ = (il_ - k_) / s_ + 1;
    }

    std::size_t out_length() const { return ol_; }
    std::size_t in_length() const { return il_; }
    std::size_t out_channels() const { return oc_; }

    std::size_t param_count() const override { return oc_ * ic_ * k_ + oc_; }
    std::size_t input_size() const override { return ic_ * il_; }
    std::size_t output_size() const override { return oc_ * ol_; }
    std::size_t bias_count() const override { return oc_; }
    double init_bound() const override {
        return std::sqrt(6.0 / static_cast<double>(ic_ * k_ + oc_ * k_));
    }

    void forward(const double* params, const std::vector<double>& in,
                 std::vector<double>& out) const override {
        const double* w = params;  // [oc][ic][k]
        const double* b = params + oc_ * ic_ * k_;
        for (std::size_t oc = 0; oc < oc_; ++oc) {
            for (std::size_t xo = 0; xo < ol_; ++xo) {
                double acc = b[oc];
                const std::size_t xi0 = xo * s_;
                for (std::size_t ic = 0; ic < ic_; ++ic) {
                    const double* wrow = w + (oc * ic_ + ic) * k_;
                    const double* irow = in.data() + ic * il_ + xi0;
                    for (std::size_t k = 0; k < k_; ++k) acc += wrow[k] * irow[k];
                }
                out[oc * ol_ + xo] = acc;
            }
        }
    }

    void backward(const double* params, const std::vector<double>& in, const std::vector<double>&,
                  const std::vector<double>& dout, std::vector<double>& din,
                  double* pgrad) const override {
        const double* w = params;
        double* dw = pgrad;
        double* db = pgrad + oc_ * ic_ * k_;
        for (std::size_t i = 0; i < ic_ * il_; ++i) din[i] = 0.0;
        for (std::size_t oc = 0; oc < oc_; ++oc) {
            for (std::size_t xo = 0; xo < ol_; ++xo) {
                const double g = dout[oc * ol_ + xo];
                const std::size_t xi0 = xo * s_;
                for (std::size_t ic = 0; ic < ic_; ++ic) {
                    const double* wrow = w + (oc * ic_ + ic) * k_;
                    double* dwrow = dw + (oc * ic_ + ic) * k_;
                    const double* irow = in.data() + ic * il_ + xi0;
                    double* dirow = din.data() + ic * il_ + xi0;
                    for (std::size_t k = 0; k < k_; ++k) {
                        dirow[k] += g * wrow[k];
                        dwrow[k] += g * irow[k];
                    }
                }
                db[oc] += g;
            }
        }
    }

private:
    std::size_t ic_, oc_, k_, s_, il_, ol_;
};

/// Marks the channel-major to flat transition; data is already contiguous
/// so this is the identity. Kept as a layer so network descriptions mirror
/// their published form.
class Flatten final : public Layer {
public:
    explicit Flatten(std::size_t size) : size_(size) {}
    std::size_t param_count() const override { return 0; }
    std::size_t input_size() const override { return size_; }
    std::size_t output_size() const override { return size_; }
    void forward(const double*, const std::vector<double>& in,
                 std::vector<double>& out) const override {
        out = in;
    }
    void backward(const double*, const std::vector<double>&, const std::vector<double>&,
                  const std::vector<double>& dout, std::vector<double>& din,
                  double*) const override {
        din = dout;
    }

private:
    std::size_t size_;
};

/// Scratch buffers for one forward/backward pass.
struct Workspace {
    std::vector<std::vector<double>> acts;   // acts[0] = input, acts[i+1] = layer i output
    std::vector<std::vector<double>> grads;  // same shapes as acts
};

/// A feed-forward stack over a flat parameter vector.
class Net {
public:
    void add(std::unique_ptr<Layer> layer) {
        if (!layers_.empty() && layers_.back()->output_size() != layer->input_size())
            throw ContractViolation("layer sizes do not chain");
        offsets_.push_back(total_params_);
        total_params_ += layer->param_count();
        layers_.push_back(std::move(layer));
    }

    std::size_t layer_count() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }
    std::size_t param_count() const { return total_params_; }
    std::size_t input_size() const { return layers_.front()->input_size(); }
    std::size_t output_size() const { return layers_.back()->output_size(); }

    std::vector<double> make_params(Rng& rng, bool zero_final) const {
        std::vector<double> params(total_params_, 0.0);
        std::size_t last_parameterized = layers_.size();
        for (std::size_t i = layers_.size(); i-- > 0;)
            if (layers_[i]->param_count() > 0) {
                last_parameterized = i;
                break;
            }
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const std::size_t n = layers_[i]->param_count();
            if (n == 0) continue;
            if (zero_final && i == last_parameterized) continue;  // stays zero
            const double bound = layers_[i]->init_bound();
            // weights get the Xavier draw, biases start at zero
            const std::size_t weights = n - layers_[i]->bias_count();
            for (std::size_t p = 0; p < weights; ++p)
                params[offsets_[i] + p] = rng.uniform(-bound, bound);
        }
        return params;
    }

    void prepare(Workspace& ws) const {
        ws.acts.resize(layers_.size() + 1);
        ws.grads.resize(layers_.size() + 1);
        ws.acts[0].resize(input_size());
        ws.grads[0].resize(input_size());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            ws.acts[i + 1].resize(layers_[i]->output_size());
            ws.grads[i + 1].resize(layers_[i]->output_size());
        }
    }

    /// ws.acts[0] must already hold the input.
    const std::vector<double>& forward(const std::vector<double>& params, Workspace& ws) const {
        check_params(params);
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->forward(params.data() + offsets_[i], ws.acts[i], ws.acts[i + 1]);
        return ws.acts.back();
    }

    /// dout = gradient at the output; accumulates into pgrad (same length
    /// as params). Requires a preceding forward on the same workspace.
    void backward(const std::vector<double>& params, Workspace& ws,
                  const std::vector<double>& dout, std::vector<double>& pgrad) const {
        check_params(params);
        if (pgrad.size() != total_params_)
            throw ContractViolation("gradient buffer size mismatch");
        ws.grads.back() = dout;
        for (std::size_t i = layers_.size(); i-- > 0;)
            layers_[i]->backward(params.data() + offsets_[i], ws.acts[i], ws.acts[i + 1],
                                 ws.grads[i + 1], ws.grads[i], pgrad.data() + offsets_[i]);
    }

private:
    void check_params(const std::vector<double>& params) const {
        if (params.size() != total_params_)
            throw ContractViolation("parameter vector size mismatch");
    }

    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<std::size_t> offsets_;
    std::size_t total_params_ = 0;
};

/// Adaptive moment estimation with bias correction.
class AdamOptimizer {
public:
    AdamOptimizer(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw ContractViolation("optimizer buffer size mismatch");
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    std::vector<double> m_, v_;
    int t_ = 0;
};

}  // namespace hopsched::nn
