#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "models.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace lsiege {

enum class DeltaKind { Kl, LatentL2, OutputL2 };

inline std::string delta_name(DeltaKind d) {
    switch (d) {
        case DeltaKind::Kl: return "kl";
        case DeltaKind::LatentL2: return "l2";
        case DeltaKind::OutputL2: return "output";
    }
    throw std::invalid_argument("delta_name: bad enum");
}

inline DeltaKind delta_from_name(const std::string& s) {
    if (s == "kl") return DeltaKind::Kl;
    if (s == "l2") return DeltaKind::LatentL2;
    if (s == "output") return DeltaKind::OutputL2;
    throw std::invalid_argument("delta_from_name: unknown delta kind '" + s + "'");
}

struct AttackConfig {
    double c = 1.0;          // balance between reaching the target and limiting distortion
    double lower = 0.0;      // input-space box
    double upper = 1.0;
    int iterations = 500;
    double learning_rate = 1e-2;
    DeltaKind delta = DeltaKind::Kl;
    std::uint64_t seed = 0;
    bool kl_reverse = false;  // divergence direction: target-first when true

    void validate() const {
        if (c <= 0.0) throw std::invalid_argument("AttackConfig: C must be positive");
        if (lower >= upper) throw std::invalid_argument("AttackConfig: lower bound must be below upper");
        if (iterations <= 0) throw std::invalid_argument("AttackConfig: iterations must be positive");
        if (learning_rate <= 0.0) throw std::invalid_argument("AttackConfig: learning rate must be positive");
    }
};

struct AttackResult {
    Tensor distortion;    // d, image-shaped
    Tensor adversarial;   // x + d, inside [lower, upper]
    LatentGaussian latent_adv;    // VAE runs
    LatentGaussian latent_target;
    Tensor point_adv;             // AE runs (bottleneck vectors)
    Tensor point_target;
    std::vector<double> objective_trace;  // value per iteration plus the final point
    double raw_distortion = 0.0;
    bool converged = true;  // final objective <= initial; flagged, never silently dropped

    // classifier runs
    int original_class = -1;
    int adversarial_class = -1;
    double p_adv = 0.0, p_orig = 0.0;
    double logit_adv = 0.0, logit_orig = 0.0;
};

namespace detail {

inline void require_in_box(const Tensor& x, double lo, double hi, const char* who) {
    for (double v : x.data)
        if (v < lo || v > hi)
            throw std::invalid_argument(std::string(who) + ": input pixels must lie in [" +
                                        std::to_string(lo) + "," + std::to_string(hi) + "]");
}

/// KL(t || a) with t frozen, summed over rows; exactly zero at a == t.
inline Var kl_from_frozen_graph(const LatentGaussian& t, const LatentGaussianVar& a) {
    Var dlv = sub(a.logvar, constant(t.logvar));
    Var ratio = exp_(neg(dlv));  // var_t / var_a
    Var quad = mul(square(sub(a.mean, constant(t.mean))), exp_(neg(a.logvar)));
    Var body = add_scalar(add(add(ratio, dlv), quad), -1.0);
    if (body->value.rank() == 2) return scale(sum_axis(body, 1), 0.5);
    return scale(sum_all(body), 0.5);
}

/// Shared optimization loop of the box-constrained attack: ADAM descent on
/// objective(x+d) + C*||d||^2 from d = 0, projecting x+d after every step.
template <typename ObjectiveFn>
AttackResult run_attack_loop(const Tensor& x_orig, const AttackConfig& cfg,
                             ObjectiveFn&& objective) {
    cfg.validate();
    require_in_box(x_orig, cfg.lower, cfg.upper, "attack");
    const std::size_t p = x_orig.numel();
    Tensor x_row({1, p}, x_orig.data);

    Tensor d = Tensor::zeros({1, p});
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;
    AdamState adam;

    AttackResult result;
    result.objective_trace.reserve(cfg.iterations + 1);

    auto build = [&](const Var& dv) {
        Var x_adv = add(constant(x_row), dv);
        Var obj = add(objective(x_adv), scale(sum_all(square(dv)), cfg.c));
        return obj;
    };

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        Var dv = leaf(d);
        Var obj = build(dv);
        const double value = obj->value.scalar_value();
        if (!std::isfinite(value))
            throw std::runtime_error("attack: non-finite objective at iteration " +
                                     std::to_string(iter) + " (trace length " +
                                     std::to_string(result.objective_trace.size()) + ")");
        result.objective_trace.push_back(value);
        backward(obj);
        adam_step(d, dv->grad, adam, adam_cfg);
        // keep x + d feasible; exact by construction
        for (std::size_t i = 0; i < p; ++i) {
            const double xi = x_row.data[i] + d.data[i];
            d.data[i] = std::min(std::max(xi, cfg.lower), cfg.upper) - x_row.data[i];
        }
    }
    {
        Var dv = constant(d);
        Var x_adv = add(constant(x_row), dv);
        Var obj = add(objective(x_adv), scale(sum_all(square(dv)), cfg.c));
        result.objective_trace.push_back(obj->value.scalar_value());
    }

    result.distortion = Tensor({p}, d.data);
    result.adversarial = Tensor({p});
    for (std::size_t i = 0; i < p; ++i) result.adversarial.data[i] = x_row.data[i] + d.data[i];
    result.raw_distortion = l2_norm(result.distortion);
    result.converged = result.objective_trace.back() <= result.objective_trace.front();
    return result;
}

inline Tensor squeeze_row(const Tensor& t) {
    if (t.rank() == 2 && t.shape[0] == 1) return Tensor({t.shape[1]}, t.data);
    return t;
}

}  // namespace detail

/// Latent-space attack on a variational autoencoder: drives the adversarial
/// encoder distribution toward the frozen target distribution under a
/// squared-distortion penalty. Delta kind must be KL.
inline AttackResult latent_attack(const VaeModel& model, const Tensor& x_orig,
                                  const Tensor& x_target, const AttackConfig& cfg) {
    if (cfg.delta != DeltaKind::Kl)
        throw std::invalid_argument("latent_attack: variational model requires the KL delta, got '" +
                                    delta_name(cfg.delta) + "'");
    if (x_orig.numel() != model.input_dim() || x_target.numel() != model.input_dim())
        throw std::invalid_argument("latent_attack: image width does not match model input");

    const LatentGaussian z_t = encode(model, x_target);
    LatentGaussian z_t_row{Tensor({1, z_t.dims()}, z_t.mean.data),
                           Tensor({1, z_t.dims()}, z_t.logvar.data)};
    VaeVars vars = bind(model, false);  // frozen parameters shared across iterations

    auto objective = [&](const Var& x_adv) {
        LatentGaussianVar z_a = encode_graph(vars, x_adv);
        Var kl = cfg.kl_reverse ? detail::kl_from_frozen_graph(z_t_row, z_a)
                                : kl_between_graph(z_a, z_t_row);
        return sum_all(kl);
    };

    AttackResult result = detail::run_attack_loop(x_orig, cfg, objective);
    LatentGaussian z_a = encode(model, result.adversarial);
    result.latent_adv = z_a;
    result.latent_target = z_t;
    return result;
}

/// Latent-space attack on a deterministic autoencoder: squared distance
/// between bottleneck vectors. Delta kind must be the latent l2.
inline AttackResult latent_attack(const AeModel& model, const Tensor& x_orig,
                                  const Tensor& x_target, const AttackConfig& cfg) {
    if (cfg.delta != DeltaKind::LatentL2)
        throw std::invalid_argument(
            "latent_attack: deterministic model requires the l2 delta, got '" +
            delta_name(cfg.delta) + "'");
    if (x_orig.numel() != model.input_dim() || x_target.numel() != model.input_dim())
        throw std::invalid_argument("latent_attack: image width does not match model input");

    Tensor z_t = ae_encode(model, x_target);
    Tensor z_t_row({1, z_t.numel()}, z_t.data);
    AeVars vars = bind(model, false);

    auto objective = [&](const Var& x_adv) {
        Var z_a = ae_encode_graph(vars, x_adv);
        return sum_all(square(sub(z_a, constant(z_t_row))));
    };

    AttackResult result = detail::run_attack_loop(x_orig, cfg, objective);
    result.point_adv = ae_encode(model, result.adversarial);
    result.point_target = z_t;
    return result;
}

/// Output-space control: pushes the reconstruction itself toward the target.
/// Kept to reproduce the documented failure mode of attacking the output.
inline AttackResult output_attack(const VaeModel& model, const Tensor& x_orig,
                                  const Tensor& x_target, const AttackConfig& cfg) {
    if (x_orig.numel() != model.input_dim() || x_target.numel() != model.input_dim())
        throw std::invalid_argument("output_attack: image width does not match model input");
    Tensor target_row({1, x_target.numel()}, x_target.data);
    VaeVars vars = bind(model, false);

    auto objective = [&](const Var& x_adv) {
        LatentGaussianVar z_a = encode_graph(vars, x_adv);
        Var raw = decode_graph(vars, z_a.mean);  // deterministic pass through the mean
        Var recon = model.likelihood == Likelihood::Bernoulli ? sigmoid(raw) : raw;
        return sum_all(square(sub(recon, constant(target_row))));
    };

    AttackResult result = detail::run_attack_loop(x_orig, cfg, objective);
    result.latent_adv = encode(model, result.adversarial);
    result.latent_target = encode(model, x_target);
    return result;
}

inline AttackResult output_attack(const AeModel& model, const Tensor& x_orig,
                                  const Tensor& x_target, const AttackConfig& cfg) {
    if (x_orig.numel() != model.input_dim() || x_target.numel() != model.input_dim())
        throw std::invalid_argument("output_attack: image width does not match model input");
    Tensor target_row({1, x_target.numel()}, x_target.data);
    AeVars vars = bind(model, false);

    auto objective = [&](const Var& x_adv) {
        Var recon = ae_decode_graph(vars, ae_encode_graph(vars, x_adv));
        return sum_all(square(sub(recon, constant(target_row))));
    };

    AttackResult result = detail::run_attack_loop(x_orig, cfg, objective);
    result.point_adv = ae_encode(model, result.adversarial);
    result.point_target = ae_encode(model, x_target);
    return result;
}

/// Targeted classifier attack: cross-entropy toward the adversarial class
/// under the same squared-distortion penalty and box projection.
inline AttackResult classifier_attack(const ClassifierModel& model, const Tensor& x_orig,
                                      int adversarial_class, const AttackConfig& cfg) {
    if (x_orig.numel() != model.input_dim())
        throw std::invalid_argument("classifier_attack: image width does not match model input");
    if (adversarial_class < 0 || static_cast<std::size_t>(adversarial_class) >= model.classes())
        throw std::invalid_argument("classifier_attack: class out of range");

    Classification clean = classify(model, x_orig);
    const int original_class = argmax_class(clean.probabilities);
    if (original_class == adversarial_class)
        throw std::invalid_argument(
            "classifier_attack: adversarial class equals the predicted original class");

    const std::size_t k = model.classes();
    Tensor onehot({1, k});
    onehot.data[static_cast<std::size_t>(adversarial_class)] = 1.0;
    ClassifierVars vars = bind(model, false);

    auto objective = [&](const Var& x_adv) {
        Var logp = log_softmax(classifier_logits_graph(vars, x_adv));
        return neg(sum_all(mul(logp, constant(onehot))));
    };

    AttackResult result = detail::run_attack_loop(x_orig, cfg, objective);
    result.original_class = original_class;
    result.adversarial_class = adversarial_class;

    Classification final = classify(model, result.adversarial);
    auto record = [&](int cls, double& p_out, double& logit_out) {
        double p = final.probabilities.data[static_cast<std::size_t>(cls)];
        p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);  // keep the logit finite
        p_out = p;
        logit_out = std::log(p / (1.0 - p));
    };
    record(adversarial_class, result.p_adv, result.logit_adv);
    record(original_class, result.p_orig, result.logit_orig);
    return result;
}

struct ReconstructionStats {
    std::vector<Tensor> samples;     // kept only when requested
    std::vector<double> distances;   // per-sample l2 distance to the reference
    double mean_distance = 0.0;
};

/// Draws n posterior samples of x, decodes each, and reports per-sample l2
/// distances to the reference alongside their mean.
inline ReconstructionStats reconstruct_average(const VaeModel& model, const Tensor& x,
                                               std::size_t n, Rng& rng, const Tensor& reference,
                                               bool keep_samples = false) {
    if (n < 1) throw std::invalid_argument("reconstruct_average: n must be >= 1");
    if (reference.numel() != model.input_dim())
        throw std::invalid_argument("reconstruct_average: reference width mismatch");
    const LatentGaussian lg = encode(model, x);
    const std::size_t j = lg.dims();

    // one batched decode of all posterior samples
    Tensor z({n, j});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < j; ++d)
            z.at(i, d) = lg.mean.data[d] + std::exp(0.5 * lg.logvar.data[d]) * rng.normal();
    Tensor recon = decode(model, z);  // [n, P]

    ReconstructionStats stats;
    stats.distances.resize(n);
    const std::size_t p = reference.numel();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t d = 0; d < p; ++d) {
            const double diff = recon.at(i, d) - reference.data[d];
            s += diff * diff;
        }
        stats.distances[i] = std::sqrt(s);
        stats.mean_distance += stats.distances[i];
        if (keep_samples) {
            Tensor sample({p});
            std::copy(recon.data.begin() + i * p, recon.data.begin() + (i + 1) * p,
                      sample.data.begin());
            stats.samples.push_back(std::move(sample));
        }
    }
    stats.mean_distance /= static_cast<double>(n);
    return stats;
}

}  // namespace lsiege
