#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "attack.hpp"
#include "data.hpp"
#include "models.hpp"
#include "stats.hpp"

namespace lsiege {

enum class GridKind { Autoencoder, Classifier };

/// Log-uniform regularization grid, endpoints inclusive:
/// autoencoder 2^-20..2^20, classifier 2^-10..2^20.
inline std::vector<double> c_grid(GridKind kind, std::size_t count = 100) {
    if (count < 2) throw std::invalid_argument("c_grid: need at least two values");
    const double lo_exp = kind == GridKind::Autoencoder ? -20.0 : -10.0;
    const double hi_exp = 20.0;
    std::vector<double> cs(count);
    for (std::size_t i = 0; i < count; ++i)
        cs[i] = std::exp2(lo_exp + (hi_exp - lo_exp) * static_cast<double>(i) /
                                       static_cast<double>(count - 1));
    return cs;
}

/// ||d|| / ||x_target - x_orig||: 0 means no attack, 1 means a distortion as
/// large as stepping directly to the target.
inline double normalize_distortion(const Tensor& d, const Tensor& x_orig, const Tensor& x_target) {
    const double denom = l2_dist(x_target, x_orig);
    if (denom <= 0.0)
        throw std::invalid_argument("normalize_distortion: original and target are identical");
    return l2_norm(d) / denom;
}

/// Affine rescale of the reconstruction-to-target distance between the best
/// expected attack (the target's own reconstruction) and the worst (the
/// original's reconstruction).
inline double normalize_adv_target(double dist_adv, double dist_best, double dist_worst) {
    if (dist_worst <= dist_best)
        throw std::domain_error("normalize_adv_target: degenerate denominator (target does not "
                                "reconstruct better than the original)");
    return (dist_adv - dist_best) / (dist_worst - dist_best);
}

inline double normalize_adv_target(const Tensor& recon_adv, const Tensor& x_target,
                                   const Tensor& recon_target, const Tensor& recon_orig) {
    return normalize_adv_target(l2_dist(recon_adv, x_target), l2_dist(recon_target, x_target),
                                l2_dist(recon_orig, x_target));
}

/// ln(p / (1-p)) for p strictly inside (0,1).
inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("logit: p must lie strictly inside (0,1), got " +
                                std::to_string(p));
    return std::log(p / (1.0 - p));
}

// ---------------------------------------------------------------------------
// autoencoder sweep
// ---------------------------------------------------------------------------

struct SweepRecord {
    int experiment = 0;
    double c = 0.0;
    double raw_distortion = 0.0;
    double norm_distortion = 0.0;
    double raw_adv_target = 0.0;
    double norm_adv_target = 0.0;  // NaN when the pair's normalization is degenerate
    bool converged = true;
    bool degenerate = false;
};

struct SweepExemplar {
    int experiment = 0;
    double c = 0.0;
    Tensor original, distortion, adversarial, recon_adversarial, recon_target, target;
};

struct SweepTable {
    std::vector<SweepRecord> records;  // ordered by (experiment, C ascending)
    std::vector<SweepExemplar> exemplars;
    std::size_t width = 0, height = 0, channels = 1;
    std::vector<std::pair<std::string, std::string>> metadata;
};

struct SweepConfig {
    std::vector<double> c_values;  // ascending
    AttackConfig attack;           // c is overwritten per cell
    std::uint64_t seed = 1;
    std::size_t recon_samples = 100;
    std::ptrdiff_t exemplar_index = -1;  // -1 = middle of the grid
    unsigned threads = 0;                // 0 = hardware concurrency
};

namespace detail {

/// Deterministic work pool over sweep cells: results land in a preallocated
/// slot per cell, so scheduling order cannot affect the output.
template <typename CellFn>
void run_cells(std::size_t n_cells, unsigned threads, CellFn&& cell) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_cells));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n_cells; ++i) cell(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n_cells) return;
                try {
                    cell(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct PairContext {
    Tensor x_orig, x_target;
    double direct_distance = 0.0;  // ||x_target - x_orig||
    double dist_best = 0.0;        // target reconstruction to target
    double dist_worst = 0.0;       // original reconstruction to target
    bool degenerate = false;
};

}  // namespace detail

/// Core sweep over (pair, C) cells. `attack_fn(x_o, x_t, cfg)` runs one
/// attack; `recon_dist(x, reference, rng)` is the (averaged) reconstruction
/// distance; `recon_image(x)` renders a deterministic reconstruction for the
/// exemplar grid.
template <typename AttackFn, typename ReconDist, typename ReconImage>
SweepTable run_sweep_core(const Dataset& ds, const std::vector<ExperimentPair>& pairs,
                          const SweepConfig& cfg, AttackFn&& attack_fn, ReconDist&& recon_dist,
                          ReconImage&& recon_image) {
    if (cfg.c_values.empty()) throw std::invalid_argument("sweep: empty C grid");
    const std::size_t n_c = cfg.c_values.size();
    const std::size_t n_pairs = pairs.size();

    std::vector<detail::PairContext> ctx(n_pairs);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        ctx[p].x_orig = ds.image(pairs[p].original);
        ctx[p].x_target = ds.image(pairs[p].target);
        ctx[p].direct_distance = l2_dist(ctx[p].x_target, ctx[p].x_orig);
        if (ctx[p].direct_distance <= 0.0)
            throw std::invalid_argument("sweep: pair " + std::to_string(pairs[p].id) +
                                        " has identical original and target images");
        Rng rng_best(derive_seed(cfg.seed, 0xbe57ULL, static_cast<std::uint64_t>(pairs[p].id)));
        Rng rng_worst(derive_seed(cfg.seed, 0x0157ULL, static_cast<std::uint64_t>(pairs[p].id)));
        ctx[p].dist_best = recon_dist(ctx[p].x_target, ctx[p].x_target, rng_best);
        ctx[p].dist_worst = recon_dist(ctx[p].x_orig, ctx[p].x_target, rng_worst);
        ctx[p].degenerate = ctx[p].dist_worst <= ctx[p].dist_best;
    }

    const std::size_t exemplar_c =
        cfg.exemplar_index >= 0 ? static_cast<std::size_t>(cfg.exemplar_index) : n_c / 2;

    struct Cell {
        SweepRecord record;
        std::optional<AttackResult> exemplar_attack;
    };
    std::vector<Cell> cells(n_pairs * n_c);

    detail::run_cells(n_pairs * n_c, cfg.threads, [&](std::size_t cell_idx) {
        const std::size_t p = cell_idx / n_c;
        const std::size_t ci = cell_idx % n_c;
        AttackConfig acfg = cfg.attack;
        acfg.c = cfg.c_values[ci];
        acfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(pairs[p].id), ci);
        AttackResult res = attack_fn(ctx[p].x_orig, ctx[p].x_target, acfg);

        Rng rng_adv(derive_seed(cfg.seed, static_cast<std::uint64_t>(pairs[p].id), ci, 0xadULL));
        const double adv_dist = recon_dist(res.adversarial, ctx[p].x_target, rng_adv);

        SweepRecord rec;
        rec.experiment = pairs[p].id;
        rec.c = acfg.c;
        rec.raw_distortion = res.raw_distortion;
        rec.norm_distortion = normalize_distortion(res.distortion, ctx[p].x_orig, ctx[p].x_target);
        rec.raw_adv_target = adv_dist;
        rec.degenerate = ctx[p].degenerate;
        rec.norm_adv_target =
            ctx[p].degenerate
                ? std::numeric_limits<double>::quiet_NaN()
                : normalize_adv_target(adv_dist, ctx[p].dist_best, ctx[p].dist_worst);
        rec.converged = res.converged;
        cells[cell_idx].record = rec;
        if (ci == exemplar_c) cells[cell_idx].exemplar_attack = std::move(res);
    });

    SweepTable table;
    table.width = ds.meta.width;
    table.height = ds.meta.height;
    table.channels = ds.meta.channels;
    table.records.reserve(cells.size());
    for (std::size_t p = 0; p < n_pairs; ++p) {
        for (std::size_t ci = 0; ci < n_c; ++ci) table.records.push_back(cells[p * n_c + ci].record);
        auto& ex_attack = cells[p * n_c + exemplar_c].exemplar_attack;
        if (ex_attack) {
            SweepExemplar ex;
            ex.experiment = pairs[p].id;
            ex.c = cfg.c_values[exemplar_c];
            ex.original = ctx[p].x_orig;
            ex.target = ctx[p].x_target;
            ex.distortion = ex_attack->distortion;
            ex.adversarial = ex_attack->adversarial;
            ex.recon_adversarial = recon_image(ex_attack->adversarial);
            ex.recon_target = recon_image(ctx[p].x_target);
            table.exemplars.push_back(std::move(ex));
        }
    }
    return table;
}

/// Variational sweep: KL attack per cell, reconstruction distances averaged
/// over cfg.recon_samples posterior draws.
inline SweepTable run_autoencoder_sweep(const VaeModel& model, const Dataset& ds,
                                        const std::vector<ExperimentPair>& pairs,
                                        SweepConfig cfg) {
    cfg.attack.delta = DeltaKind::Kl;
    auto attack_fn = [&](const Tensor& xo, const Tensor& xt, const AttackConfig& acfg) {
        return latent_attack(model, xo, xt, acfg);
    };
    auto recon_dist = [&](const Tensor& x, const Tensor& ref, Rng& rng) {
        return reconstruct_average(model, x, cfg.recon_samples, rng, ref).mean_distance;
    };
    auto recon_image = [&](const Tensor& x) { return decode(model, encode(model, x).mean); };
    SweepTable t = run_sweep_core(ds, pairs, cfg, attack_fn, recon_dist, recon_image);
    t.metadata.emplace_back("model", "vae");
    t.metadata.emplace_back("delta", "kl");
    t.metadata.emplace_back("recon_samples", std::to_string(cfg.recon_samples));
    return t;
}

/// Deterministic-autoencoder sweep: bottleneck l2 attack, deterministic
/// reconstruction distances.
inline SweepTable run_autoencoder_sweep(const AeModel& model, const Dataset& ds,
                                        const std::vector<ExperimentPair>& pairs,
                                        SweepConfig cfg) {
    cfg.attack.delta = DeltaKind::LatentL2;
    auto attack_fn = [&](const Tensor& xo, const Tensor& xt, const AttackConfig& acfg) {
        return latent_attack(model, xo, xt, acfg);
    };
    auto recon_dist = [&](const Tensor& x, const Tensor& ref, Rng&) {
        return l2_dist(ae_decode(model, ae_encode(model, x)), ref);
    };
    auto recon_image = [&](const Tensor& x) { return ae_decode(model, ae_encode(model, x)); };
    SweepTable t = run_sweep_core(ds, pairs, cfg, attack_fn, recon_dist, recon_image);
    t.metadata.emplace_back("model", "ae");
    t.metadata.emplace_back("delta", "l2");
    return t;
}

// ---------------------------------------------------------------------------
// classifier sweep
// ---------------------------------------------------------------------------

struct ClassifierPair {
    std::size_t image = 0;
    int label = 0;
    int adversarial_class = 0;
    int id = 0;
};

/// Draws (image, adversarial class) pairs among correctly classified images.
inline std::vector<ClassifierPair> sample_classifier_pairs(const ClassifierModel& model,
                                                           const Dataset& ds, std::size_t n,
                                                           std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x636c66ULL));
    std::vector<ClassifierPair> pairs;
    std::set<std::size_t> used;
    std::size_t attempts = 0;
    const std::size_t max_attempts = 200 * std::max<std::size_t>(n, 1) + 1000;
    while (pairs.size() < n) {
        if (++attempts > max_attempts)
            throw std::runtime_error(
                "sample_classifier_pairs: could not find enough correctly classified images");
        const std::size_t idx = rng.below(ds.count());
        if (used.count(idx)) continue;
        Classification c = classify(model, ds.image(idx));
        if (argmax_class(c.probabilities) != ds.labels[idx]) continue;
        int adv = static_cast<int>(rng.below(model.classes()));
        while (adv == ds.labels[idx]) adv = static_cast<int>(rng.below(model.classes()));
        used.insert(idx);
        pairs.push_back({idx, ds.labels[idx], adv, static_cast<int>(pairs.size())});
    }
    return pairs;
}

struct ClassifierSweepRecord {
    int experiment = 0;
    double c = 0.0;
    double raw_distortion = 0.0;
    double centered_distortion = 0.0;  // raw minus the pair's crossing distortion
    double p_adv = 0.0, p_orig = 0.0;
    double logit_adv = 0.0, logit_orig = 0.0;
    bool converged = true;
};

struct ClassifierPairSummary {
    int experiment = 0;
    bool crossed = false;
    double crossing_distortion = 0.0;
    std::string flag = "ok";  // ok | never_succeeds | always_succeeds
};

struct ClassifierSweepTable {
    std::vector<ClassifierSweepRecord> records;  // ordered by (experiment, C ascending)
    std::vector<ClassifierPairSummary> summaries;
    std::vector<std::pair<std::string, std::string>> metadata;
};

/// Locates the failure/success transition by linear interpolation of
/// p_adv - p_orig in raw-distortion coordinates; records in ascending
/// distortion order.
inline ClassifierPairSummary locate_crossing(std::vector<const ClassifierSweepRecord*> recs) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](auto* a, auto* b) { return a->raw_distortion < b->raw_distortion; });
    ClassifierPairSummary s;
    s.experiment = recs.empty() ? 0 : recs.front()->experiment;
    auto margin = [](const ClassifierSweepRecord* r) { return r->p_adv - r->p_orig; };
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
        const double f0 = margin(recs[i]), f1 = margin(recs[i + 1]);
        if ((f0 <= 0.0 && f1 > 0.0) || (f0 < 0.0 && f1 >= 0.0)) {
            const double x0 = recs[i]->raw_distortion, x1 = recs[i + 1]->raw_distortion;
            s.crossed = true;
            s.crossing_distortion = f1 == f0 ? x0 : x0 + (0.0 - f0) * (x1 - x0) / (f1 - f0);
            return s;
        }
    }
    bool any_success = false, all_success = true;
    for (auto* r : recs) {
        if (margin(r) > 0.0) any_success = true;
        else all_success = false;
    }
    s.crossed = false;
    if (all_success)
        s.flag = "always_succeeds";
    else if (!any_success)
        s.flag = "never_succeeds";
    else
        s.flag = "no_upward_crossing";
    return s;
}

inline ClassifierSweepTable run_classifier_sweep(const ClassifierModel& model, const Dataset& ds,
                                                 const std::vector<ClassifierPair>& pairs,
                                                 const SweepConfig& cfg) {
    if (cfg.c_values.empty()) throw std::invalid_argument("sweep: empty C grid");
    const std::size_t n_c = cfg.c_values.size();
    std::vector<ClassifierSweepRecord> cells(pairs.size() * n_c);

    detail::run_cells(cells.size(), cfg.threads, [&](std::size_t cell_idx) {
        const std::size_t p = cell_idx / n_c;
        const std::size_t ci = cell_idx % n_c;
        AttackConfig acfg = cfg.attack;
        acfg.c = cfg.c_values[ci];
        acfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(pairs[p].id), ci, 0xcfULL);
        AttackResult res =
            classifier_attack(model, ds.image(pairs[p].image), pairs[p].adversarial_class, acfg);
        ClassifierSweepRecord rec;
        rec.experiment = pairs[p].id;
        rec.c = acfg.c;
        rec.raw_distortion = res.raw_distortion;
        rec.p_adv = res.p_adv;
        rec.p_orig = res.p_orig;
        rec.logit_adv = res.logit_adv;
        rec.logit_orig = res.logit_orig;
        rec.converged = res.converged;
        cells[cell_idx] = rec;
    });

    ClassifierSweepTable table;
    table.records = std::move(cells);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        std::vector<const ClassifierSweepRecord*> recs;
        for (std::size_t ci = 0; ci < n_c; ++ci) recs.push_back(&table.records[p * n_c + ci]);
        ClassifierPairSummary s = locate_crossing(recs);
        for (std::size_t ci = 0; ci < n_c; ++ci) {
            auto& r = table.records[p * n_c + ci];
            r.centered_distortion = s.crossed ? r.raw_distortion - s.crossing_distortion
                                              : r.raw_distortion;
        }
        table.summaries.push_back(s);
    }
    table.metadata.emplace_back("model", "clf");
    return table;
}

/// Linearity of the logit and probability curves against centered distortion
/// inside a +-window of grid points around the crossing.
struct WindowFit {
    double logit_r2 = 0.0;
    double prob_r2 = 0.0;
    std::size_t points = 0;
};

inline WindowFit classifier_window_fit(const std::vector<const ClassifierSweepRecord*>& pair_records,
                                       std::size_t half_width = 20) {
    std::vector<const ClassifierSweepRecord*> recs = pair_records;
    std::stable_sort(recs.begin(), recs.end(),
                     [](auto* a, auto* b) { return a->raw_distortion < b->raw_distortion; });
    // index nearest the crossing (centered distortion closest to zero)
    std::size_t center = 0;
    for (std::size_t i = 1; i < recs.size(); ++i)
        if (std::abs(recs[i]->centered_distortion) < std::abs(recs[center]->centered_distortion))
            center = i;
    const std::size_t lo = center >= half_width ? center - half_width : 0;
    const std::size_t hi = std::min(recs.size(), center + half_width + 1);
    std::vector<double> xs, logits, probs;
    for (std::size_t i = lo; i < hi; ++i) {
        xs.push_back(recs[i]->centered_distortion);
        logits.push_back(recs[i]->logit_adv);
        probs.push_back(recs[i]->p_adv);
    }
    WindowFit fit;
    fit.points = xs.size();
    if (xs.size() >= 2) {
        fit.logit_r2 = linear_fit(xs, logits).r2;
        fit.prob_r2 = linear_fit(xs, probs).r2;
    }
    return fit;
}

}  // namespace lsiege
