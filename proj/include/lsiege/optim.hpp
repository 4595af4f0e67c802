#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tensor.hpp"

namespace lsiege {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments
};

/// One bias-corrected ADAM update; descends the provided gradient.
/// Moments are lazily initialized to zeros on the first call.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                      AdamState& state, const AdamConfig& cfg = {}) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (auto* p : params) {
            state.m.push_back(Tensor::zeros(p->shape));
            state.v.push_back(Tensor::zeros(p->shape));
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state holds a different parameter count");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        if (!p.same_shape(g) || !p.same_shape(state.m[k]))
            throw std::invalid_argument("adam_step: shape mismatch " + shape_str(p.shape) +
                                        " vs " + shape_str(g.shape));
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double gi = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state,
                      const AdamConfig& cfg = {}) {
    std::vector<Tensor*> ps{&param};
    std::vector<const Tensor*> gs{&grad};
    adam_step(ps, gs, state, cfg);
}

/// Elementwise projection into [lo, hi]; idempotent.
inline Tensor project_box(const Tensor& x, double lo, double hi) {
    if (lo >= hi) throw std::invalid_argument("project_box: lower bound must be below upper bound");
    Tensor out = x;
    for (auto& v : out.data) v = std::min(std::max(v, lo), hi);
    return out;
}

}  // namespace lsiege
