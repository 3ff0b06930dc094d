#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "trear/tensor.hpp"

namespace trear {

/// Per-parameter first/second moment buffers plus the shared step counter.
/// Buffers are keyed by parameter name and created lazily on first update.
class AdamState {
public:
    AdamState(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ParameterError("adam: betas must be in [0, 1)");
        if (eps <= 0.0)
            throw ParameterError("adam: eps must be positive");
    }

    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }
    long step_count() const { return t_; }

    struct Moments {
        std::vector<double> m, v;
    };

    Moments& moments(const Variable& p) {
        auto it = buf_.find(p.name);
        if (it == buf_.end()) {
            Moments mo;
            mo.m.assign(p.value.size(), 0.0);
            mo.v.assign(p.value.size(), 0.0);
            it = buf_.emplace(p.name, std::move(mo)).first;
        }
        return it->second;
    }

    void advance() { ++t_; }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::unordered_map<std::string, Moments> buf_;
};

/// One Adam update over every parameter in the store, reading Variable::grad
/// and writing Variable::value in place. Uses bias-corrected moments; the eps
/// sits outside the square root. A parameter whose gradient is all zeros and
/// whose moments are still zero is left bit-identical.
inline void adam_step(ParamStore& params, AdamState& state, double lr) {
    if (!(lr > 0.0))
        throw ParameterError("adam_step: lr must be positive, got " + std::to_string(lr));
    state.advance();
    double t = static_cast<double>(state.step_count());
    double c1 = 1.0 - std::pow(state.beta1(), t);
    double c2 = 1.0 - std::pow(state.beta2(), t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Variable& p = params.at(i);
        auto& mo = state.moments(p);
        if (mo.m.size() != p.value.size())
            throw ContractError("adam_step: stale moments for " + p.name);
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            double g = p.grad[j];
            mo.m[j] = state.beta1() * mo.m[j] + (1.0 - state.beta1()) * g;
            mo.v[j] = state.beta2() * mo.v[j] + (1.0 - state.beta2()) * g * g;
            double mhat = mo.m[j] / c1;
            double vhat = mo.v[j] / c2;
            p.value[j] -= lr * mhat / (std::sqrt(vhat) + state.eps());
        }
    }
}

}  // namespace trear
