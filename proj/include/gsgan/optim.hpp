#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "gsgan/tape.hpp"

namespace gsgan {

// Learning-rate schedule: constant, then a linear ramp to zero over the last
// `decay_last` iterations.
inline double lr_at(std::size_t iter, std::size_t total, std::size_t decay_last, double base_lr) {
    if (decay_last > total) decay_last = total;
    const std::size_t decay_start = total - decay_last;
    if (iter <= decay_start || decay_last == 0) return iter >= total ? 0.0 : base_lr;
    return base_lr * static_cast<double>(total - iter) / static_cast<double>(decay_last);
}

// Adam with bias correction; defaults beta1 = 0, beta2 = 0.9. Moment tensors
// are keyed by parameter name so they can be checkpointed.
template <typename S>
class Adam {
public:
    struct Moments {
        Tensor<S> m, v;
    };

    Adam() = default;
    Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Parameter<S>*>& params, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (Parameter<S>* p : params) {
            if (!p->trainable) continue;
            Moments& mo = moments(*p);
            const std::size_t n = p->value.numel();
            for (std::size_t i = 0; i < n; ++i) {
                const double g = static_cast<double>(p->grad[i]);
                const double m = beta1_ * static_cast<double>(mo.m[i]) + (1.0 - beta1_) * g;
                const double v = beta2_ * static_cast<double>(mo.v[i]) + (1.0 - beta2_) * g * g;
                mo.m[i] = static_cast<S>(m);
                mo.v[i] = static_cast<S>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                p->value[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    Moments& moments(const Parameter<S>& p) {
        auto it = state_.find(p.name);
        if (it == state_.end()) {
            it = state_
                     .emplace(p.name, Moments{Tensor<S>::zeros(p.value.shape()),
                                              Tensor<S>::zeros(p.value.shape())})
                     .first;
        }
        return it->second;
    }

    std::uint64_t step_count() const { return t_; }
    void set_step_count(std::uint64_t t) { t_ = t; }
    std::map<std::string, Moments>& state() { return state_; }

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

private:
    double beta1_ = 0.0;
    double beta2_ = 0.9;
    double eps_ = 1e-8;
    std::uint64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace gsgan
