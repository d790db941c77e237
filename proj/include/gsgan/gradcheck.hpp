#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gsgan/losses.hpp"
#include "gsgan/model.hpp"

namespace gsgan {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct FdOptions {
    double step = 1e-4;
    double tol = 1e-4;
    std::size_t max_coords_per_param = 0;  // 0 = every coordinate
    std::uint64_t sample_seed = 17;
};

// Hook that mutates the analytic gradients before comparison; used to verify
// that the checker actually detects a broken backward rule.
using GradCorruptor = std::function<void(std::vector<Parameter<double>*>&)>;

// Central finite differences against the analytic gradients left in `params`
// by one call of `loss_fn`. `loss_fn` must be a pure function of the parameter
// values (run models with update_sn=false and train-mode batch statistics).
template <typename LossFn>
double fd_max_rel_error(LossFn&& loss_fn, const std::vector<Parameter<double>*>& params,
                        const FdOptions& opt = {}, const GradCorruptor& corrupt = nullptr) {
    std::vector<Parameter<double>*> ps(params);
    loss_fn();  // fills analytic grads
    std::vector<Tensor<double>> analytic;
    analytic.reserve(ps.size());
    if (corrupt) corrupt(ps);
    for (auto* p : ps) analytic.push_back(p->grad);

    CounterRng pick(opt.sample_seed);
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        Parameter<double>& p = *ps[pi];
        const std::size_t n = p.value.numel();
        std::vector<std::size_t> coords;
        if (opt.max_coords_per_param == 0 || n <= opt.max_coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < opt.max_coords_per_param; ++i)
                coords.push_back(static_cast<std::size_t>(pick.below(n)));
        }
        for (std::size_t ci : coords) {
            const double a = analytic[pi][ci];
            auto probe = [&](double h) {
                const double saved = p.value[ci];
                p.value[ci] = saved + h;
                const double lp = loss_fn();
                p.value[ci] = saved - h;
                const double lm = loss_fn();
                p.value[ci] = saved;
                const double numeric = (lp - lm) / (2.0 * h);
                return std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            };
            double rel = probe(opt.step);
            // Distinguish truncation (shrinks ~h^2) from a wrong backward
            // rule (step-independent) before reporting a failure.
            if (rel >= 0.5 * opt.tol) rel = std::min(rel, probe(opt.step / 8.0));
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

namespace gradcheck_detail {

using T = Tensor<double>;
using P = Parameter<double>;

// Fixed random projection turns any output tensor into a scalar loss with
// non-uniform output gradients.
inline Var project(Tape<double>& t, Var out, CounterRng& rng) {
    T w = T::randn(t.val(out).shape(), rng);
    return t.sum_all(t.mul(out, t.constant(std::move(w))));
}

// Keep values away from the ReLU/clamp kinks so central differences stay
// second order.
inline T randn_away_from(double kink, double margin, Shape shape, CounterRng& rng) {
    T x = T::randn(std::move(shape), rng);
    for (double& v : x.raw()) {
        const double d = v - kink;
        v = kink + (d >= 0 ? margin + std::abs(d) : -margin - std::abs(d));
    }
    return x;
}

template <typename BuildLoss>
GradCheckResult check_one(const std::string& name, BuildLoss&& fn,
                          const std::vector<P*>& params, const FdOptions& opt) {
    GradCheckResult r;
    r.name = name;
    r.max_rel_err = fd_max_rel_error(fn, params, opt);
    r.pass = r.max_rel_err < opt.tol;
    return r;
}

}  // namespace gradcheck_detail

// ---- per-module suites; every check runs at 64-bit ------------------------

std::vector<GradCheckResult> grad_check_tensor(const FdOptions& opt = {});
std::vector<GradCheckResult> grad_check_nn(const FdOptions& opt = {});
std::vector<GradCheckResult> grad_check_blocks(const FdOptions& opt = {});
std::vector<GradCheckResult> grad_check_model(const FdOptions& opt = {});

inline std::vector<GradCheckResult> grad_check_all(const FdOptions& opt = {}) {
    std::vector<GradCheckResult> out;
    for (auto&& part : {grad_check_tensor(opt), grad_check_nn(opt), grad_check_blocks(opt),
                        grad_check_model(opt)})
        out.insert(out.end(), part.begin(), part.end());
    return out;
}

std::vector<GradCheckResult> grad_check_module(const std::string& which,
                                               const FdOptions& opt = {});

}  // namespace gsgan
