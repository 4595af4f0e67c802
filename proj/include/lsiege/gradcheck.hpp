#pragma once

#include <functional>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace lsiege {

/// Builds a scalar loss from differentiable leaves; called repeatedly with
/// perturbed inputs, so it must be deterministic (fix any noise as constants).
using GraphBuilder = std::function<Var(const std::vector<Var>&)>;

struct GradCheckOptions {
    double step = 1e-5;
    std::size_t max_coords = 0;  // 0 = check every coordinate
    std::uint64_t seed = 0;      // coordinate subsampling stream
};

/// Max over checked coordinates of |autodiff - central difference| relative
/// error, with the denominator floored at 1e-8.
inline double grad_check(const GraphBuilder& f, const std::vector<Tensor>& points,
                         GradCheckOptions opt = {}) {
    std::vector<Var> leaves;
    leaves.reserve(points.size());
    for (const auto& p : points) leaves.push_back(leaf(p));
    Var loss = f(leaves);
    backward(loss);

    std::vector<std::pair<std::size_t, std::size_t>> coords;  // (input, flat index)
    for (std::size_t k = 0; k < points.size(); ++k)
        for (std::size_t i = 0; i < points[k].numel(); ++i) coords.emplace_back(k, i);
    if (opt.max_coords > 0 && coords.size() > opt.max_coords) {
        Rng rng(derive_seed(opt.seed, 0x6772616463686bULL));
        rng.shuffle(coords);
        coords.resize(opt.max_coords);
    }

    auto eval_at = [&](const std::vector<Tensor>& pts) {
        std::vector<Var> cs;
        cs.reserve(pts.size());
        for (const auto& p : pts) cs.push_back(constant(p));
        return f(cs)->value.scalar_value();
    };

    double max_rel = 0.0;
    std::vector<Tensor> work = points;
    for (auto [k, i] : coords) {
        const double orig = work[k].data[i];
        work[k].data[i] = orig + opt.step;
        const double fp = eval_at(work);
        work[k].data[i] = orig - opt.step;
        const double fm = eval_at(work);
        work[k].data[i] = orig;
        const double fd = (fp - fm) / (2.0 * opt.step);
        const double ad = leaves[k]->grad.data[i];
        const double rel = std::abs(ad - fd) / std::max(std::abs(fd), 1e-8);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace lsiege
