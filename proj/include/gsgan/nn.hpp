#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gsgan/tape.hpp"

namespace gsgan {

enum class InitKind { glorot_uniform, normal_002, zeros };

template <typename S>
Tensor<S> init_weight(Shape shape, std::size_t fan_in, std::size_t fan_out, InitKind kind,
                      CounterRng& rng) {
    Tensor<S> t(std::move(shape));
    switch (kind) {
        case InitKind::glorot_uniform: {
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            for (S& v : t.raw()) v = static_cast<S>(rng.uniform(-limit, limit));
            break;
        }
        case InitKind::normal_002:
            for (S& v : t.raw()) v = static_cast<S>(rng.normal() * 0.02);
            break;
        case InitKind::zeros:
            break;
    }
    return t;
}

// Named non-trainable tensor (running statistics, power-iteration vectors).
template <typename S>
struct NamedState {
    std::string name;
    Tensor<S>* tensor;
};

// Per-forward context threaded through every layer.
struct Ctx {
    bool train = true;      // batch statistics + running-stat updates
    bool update_sn = true;  // run the SN power-iteration update this forward
};

// ---------------------------------------------------------------------------
// Spectral normalization: divides a weight by its largest singular value,
// estimated with one power-iteration step per forward on the 2-d view
// [rows, cols] of the weight.
// ---------------------------------------------------------------------------
template <typename S>
class SpectralNorm {
public:
    SpectralNorm() = default;

    void init(const std::string& name, std::size_t rows, std::size_t cols, CounterRng& rng) {
        name_ = name;
        u_ = Tensor<S>({rows});
        v_ = Tensor<S>({cols});
        for (S& x : u_.raw()) x = static_cast<S>(rng.normal());
        for (S& x : v_.raw()) x = static_cast<S>(rng.normal());
        normalize(u_);
        normalize(v_);
    }

    // One power-iteration update of (u, v) against the raw weight, then the
    // on-tape division by sigma = u^T W v (floored at 1e-12).
    Var apply(Tape<S>& t, Parameter<S>& w, Shape view2d, const Ctx& ctx) {
        const std::size_t rows = view2d[0], cols = view2d[1];
        if (ctx.update_sn) power_iterate(w.value, rows, cols);
        Var wv = t.param(w);
        Var w2 = t.reshape(wv, {rows, cols});
        Var uc = t.constant(u_.reshaped({1, rows}));
        Var vc = t.constant(v_.reshaped({cols, 1}));
        Var sigma = t.clamp_min(t.matmul(t.matmul(uc, w2), vc), S(1e-12));
        Var wbar = t.div_by_scalar(w2, sigma);
        return t.reshape(wbar, w.value.shape());
    }

    // Current estimate without touching the tape (for reporting/tests).
    S sigma_estimate(const Tensor<S>& w, std::size_t rows, std::size_t cols) const {
        S s = S(0);
        for (std::size_t i = 0; i < rows; ++i) {
            S wv = S(0);
            for (std::size_t j = 0; j < cols; ++j) wv += w[i * cols + j] * v_[j];
            s += u_[i] * wv;
        }
        return s;
    }

    void power_iterate(const Tensor<S>& w, std::size_t rows, std::size_t cols) {
        // v <- normalize(W^T u); u <- normalize(W v)
        for (std::size_t j = 0; j < cols; ++j) {
            S acc = S(0);
            for (std::size_t i = 0; i < rows; ++i) acc += w[i * cols + j] * u_[i];
            v_[j] = acc;
        }
        normalize(v_);
        for (std::size_t i = 0; i < rows; ++i) {
            S acc = S(0);
            for (std::size_t j = 0; j < cols; ++j) acc += w[i * cols + j] * v_[j];
            u_[i] = acc;
        }
        normalize(u_);
    }

    void states(std::vector<NamedState<S>>& out) {
        out.push_back({name_ + ".sn_u", &u_});
        out.push_back({name_ + ".sn_v", &v_});
    }

    const Tensor<S>& u() const { return u_; }
    const Tensor<S>& v() const { return v_; }

private:
    static void normalize(Tensor<S>& x) {
        S n = S(0);
        for (S v : x.raw()) n += v * v;
        n = std::sqrt(n) + S(1e-12);
        for (S& v : x.raw()) v /= n;
    }

    std::string name_;
    Tensor<S> u_, v_;
};

// ---------------------------------------------------------------------------
// Dense: y = x W + b, optionally spectrally normalized.
// ---------------------------------------------------------------------------
template <typename S>
class Dense {
public:
    Dense() = default;

    Dense(const std::string& name, std::size_t din, std::size_t dout, InitKind kind,
          CounterRng& rng, bool sn = false)
        : w_(name + ".weight", init_weight<S>({din, dout}, din, dout, kind, rng)),
          b_(name + ".bias", Tensor<S>::zeros({dout})),
          sn_enabled_(sn) {
        if (sn) sn_.init(name, din, dout, rng);
    }

    Var forward(Tape<S>& t, Var x, const Ctx& ctx) {
        Var w = sn_enabled_ ? sn_.apply(t, w_, {w_.value.dim(0), w_.value.dim(1)}, ctx)
                            : t.param(w_);
        return t.add_bias_rows(t.matmul(x, w), t.param(b_));
    }

    void params(std::vector<Parameter<S>*>& out) {
        out.push_back(&w_);
        out.push_back(&b_);
    }
    void states(std::vector<NamedState<S>>& out) {
        if (sn_enabled_) sn_.states(out);
    }

    Parameter<S>& weight() { return w_; }
    Parameter<S>& bias() { return b_; }
    SpectralNorm<S>& sn() { return sn_; }
    bool sn_enabled() const { return sn_enabled_; }

private:
    Parameter<S> w_, b_;
    bool sn_enabled_ = false;
    SpectralNorm<S> sn_;
};

// ---------------------------------------------------------------------------
// Conv2d, stride 1, 1x1 or 3x3, optionally spectrally normalized on the
// [co, ci*kh*kw] view of the kernel.
// ---------------------------------------------------------------------------
template <typename S>
class Conv2d {
public:
    Conv2d() = default;

    Conv2d(const std::string& name, std::size_t ci, std::size_t co, std::size_t k, InitKind kind,
           CounterRng& rng, bool sn = false, Pad pad = Pad::same)
        : kernel_(name + ".kernel", init_weight<S>({co, ci, k, k}, ci * k * k, co * k * k, kind, rng)),
          bias_(name + ".bias", Tensor<S>::zeros({co})),
          pad_(pad),
          sn_enabled_(sn) {
        if (sn) sn_.init(name, co, ci * k * k, rng);
    }

    Var forward(Tape<S>& t, Var x, const Ctx& ctx) {
        const auto& ks = kernel_.value.shape();
        Var k = sn_enabled_ ? sn_.apply(t, kernel_, {ks[0], ks[1] * ks[2] * ks[3]}, ctx)
                            : t.param(kernel_);
        return t.conv2d(x, k, t.param(bias_), pad_);
    }

    void params(std::vector<Parameter<S>*>& out) {
        out.push_back(&kernel_);
        out.push_back(&bias_);
    }
    void states(std::vector<NamedState<S>>& out) {
        if (sn_enabled_) sn_.states(out);
    }

    Parameter<S>& kernel() { return kernel_; }
    Parameter<S>& bias() { return bias_; }
    SpectralNorm<S>& sn() { return sn_; }
    bool sn_enabled() const { return sn_enabled_; }

private:
    Parameter<S> kernel_, bias_;
    Pad pad_ = Pad::same;
    bool sn_enabled_ = false;
    SpectralNorm<S> sn_;
};

// ---------------------------------------------------------------------------
// Batch normalization. Standardizes per channel; the affine part is optional
// (the shortcut-path BN is pure standardization). Running statistics follow
// new = (1 - momentum) * old + momentum * batch, with the unbiased batch
// variance entering the running estimate.
// ---------------------------------------------------------------------------
template <typename S>
class BatchNorm {
public:
    BatchNorm() = default;

    BatchNorm(const std::string& name, std::size_t channels, bool affine)
        : name_(name),
          affine_(affine),
          running_mean_(Tensor<S>::zeros({channels})),
          running_var_(Tensor<S>::ones({channels})) {
        if (affine_) {
            gamma_ = Parameter<S>(name + ".gamma", Tensor<S>::ones({channels}));
            beta_ = Parameter<S>(name + ".beta", Tensor<S>::zeros({channels}));
        }
    }

    Var forward(Tape<S>& t, Var x, const Ctx& ctx) {
        Var y = standardize(t, x, ctx);
        if (affine_) y = t.channel_scale_bias(y, t.param(gamma_), t.param(beta_));
        return y;
    }

    // Standardization only (used by the conditional variant and the shortcut).
    Var standardize(Tape<S>& t, Var x, const Ctx& ctx) {
        if (ctx.train) {
            std::vector<S> m, v;
            Var y = t.batch_norm_train(x, eps_, &m, &v);
            const Tensor<S>& xv = t.val(x);
            const double n = static_cast<double>(xv.dim(0) * xv.dim(2) * xv.dim(3));
            const S unbias = static_cast<S>(n / (n - 1.0));
            for (std::size_t c = 0; c < m.size(); ++c) {
                running_mean_[c] = (S(1) - momentum_) * running_mean_[c] + momentum_ * m[c];
                running_var_[c] = (S(1) - momentum_) * running_var_[c] + momentum_ * v[c] * unbias;
            }
            return y;
        }
        return t.batch_norm_eval(x, running_mean_.raw(), running_var_.raw(), eps_);
    }

    void params(std::vector<Parameter<S>*>& out) {
        if (affine_) {
            out.push_back(&gamma_);
            out.push_back(&beta_);
        }
    }
    void states(std::vector<NamedState<S>>& out) {
        out.push_back({name_ + ".running_mean", &running_mean_});
        out.push_back({name_ + ".running_var", &running_var_});
    }

    S eps() const { return eps_; }
    Tensor<S>& running_mean() { return running_mean_; }
    Tensor<S>& running_var() { return running_var_; }
    Parameter<S>& gamma() { return gamma_; }
    Parameter<S>& beta() { return beta_; }

private:
    std::string name_;
    bool affine_ = false;
    S eps_ = S(1e-5);
    S momentum_ = S(0.1);
    Parameter<S> gamma_, beta_;
    Tensor<S> running_mean_, running_var_;
};

// ---------------------------------------------------------------------------
// Conditional batch normalization: standardize, then apply per-sample
// (gamma, beta) predicted from the conditioning vector by one zero-initialized
// dense map. Gamma is parameterized as 1 + dgamma, so a fresh layer is exactly
// plain BN with gamma=1, beta=0.
// ---------------------------------------------------------------------------
template <typename S>
class CondBatchNorm {
public:
    CondBatchNorm() = default;

    CondBatchNorm(const std::string& name, std::size_t channels, std::size_t cond_dim,
                  CounterRng& rng)
        : channels_(channels),
          core_(name, channels, false),
          source_(name + ".source", cond_dim, 2 * channels, InitKind::zeros, rng) {}

    Var forward(Tape<S>& t, Var x, Var cond, const Ctx& ctx) {
        Var y = core_.standardize(t, x, ctx);
        Var gb = source_.forward(t, cond, ctx);  // [b, 2c]
        Var dgamma = t.slice_cols(gb, 0, channels_);
        Var beta = t.slice_cols(gb, channels_, 2 * channels_);
        Var gamma = t.affine(dgamma, S(1), S(1));
        return t.channel_affine(y, gamma, beta);
    }

    void params(std::vector<Parameter<S>*>& out) { source_.params(out); }
    void states(std::vector<NamedState<S>>& out) { core_.states(out); }

    Dense<S>& source() { return source_; }
    BatchNorm<S>& core() { return core_; }

private:
    std::size_t channels_ = 0;
    BatchNorm<S> core_;
    Dense<S> source_;
};

// ---------------------------------------------------------------------------
// Class-label embedding table.
// ---------------------------------------------------------------------------
template <typename S>
class Embedding {
public:
    Embedding() = default;

    Embedding(const std::string& name, std::size_t num_classes, std::size_t dim, InitKind kind,
              CounterRng& rng, bool sn = false)
        : table_(name + ".table", init_weight<S>({num_classes, dim}, num_classes, dim, kind, rng)),
          sn_enabled_(sn) {
        if (sn) sn_.init(name, num_classes, dim, rng);
    }

    Var forward(Tape<S>& t, const std::vector<int>& ids, const Ctx& ctx) {
        if (sn_enabled_) {
            Var tbl = sn_.apply(t, table_, {table_.value.dim(0), table_.value.dim(1)}, ctx);
            return t.embedding(tbl, ids);
        }
        return t.embedding(t.param(table_), ids);
    }

    void params(std::vector<Parameter<S>*>& out) { out.push_back(&table_); }
    void states(std::vector<NamedState<S>>& out) {
        if (sn_enabled_) sn_.states(out);
    }

    Parameter<S>& table() { return table_; }

private:
    Parameter<S> table_;
    bool sn_enabled_ = false;
    SpectralNorm<S> sn_;
};

}  // namespace gsgan
