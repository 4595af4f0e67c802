#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "data.hpp"
#include "models.hpp"
#include "optim.hpp"

namespace lsiege {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 100;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    std::size_t latent = 20;
    std::vector<std::size_t> hidden = {400};
    Likelihood likelihood = Likelihood::Bernoulli;
    std::size_t val_count = 500;
    std::string dataset_id;
    std::string log_path;  // per-epoch "epoch,train_loss,val_loss" lines when set

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be non-negative");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
        if (latent < 1) throw std::invalid_argument("TrainConfig: latent dimension must be >= 1");
    }
};

struct EpochMetrics {
    int epoch;
    double train_loss;
    double val_loss;
};

struct TrainResult {
    ModelBundle bundle;
    std::vector<EpochMetrics> metrics;
};

namespace detail {

inline Tensor gather_rows(const Tensor& images, const std::vector<std::size_t>& idx,
                          std::size_t start, std::size_t count) {
    const std::size_t p = images.shape[1];
    Tensor out({count, p});
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t r = idx[start + i];
        std::copy(images.data.begin() + r * p, images.data.begin() + (r + 1) * p,
                  out.data.begin() + i * p);
    }
    return out;
}

inline void append_log(const std::string& path, const EpochMetrics& m) {
    if (path.empty()) return;
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("training log: cannot write " + path);
    char line[128];
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g\n", m.epoch, m.train_loss, m.val_loss);
    out << line;
}

inline void require_binary(const Tensor& batch) {
    for (double v : batch.data)
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument(
                "elbo: Bernoulli likelihood requires binary pixels; got value " +
                std::to_string(v));
}

}  // namespace detail

/// Per-row log p(x|raw decoder output), summed over pixels -> [n].
inline Var log_likelihood_rows_graph(const Var& raw, const Tensor& x, Likelihood lik) {
    Var xc = constant(x);
    if (lik == Likelihood::Bernoulli) {
        // x*logits - softplus(logits), the stable logit form of the Bernoulli log-mass
        Var ll = sub(mul(xc, raw), softplus(raw));
        return sum_axis(ll, 1);
    }
    // unit-variance Gaussian density
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    Var ll = add_scalar(scale(square(sub(raw, xc)), -0.5), -kHalfLog2Pi);
    return sum_axis(ll, 1);
}

/// Mean single-sample ELBO over the batch; maximize this.
inline Var elbo_graph(const VaeVars& v, const Tensor& batch, const Tensor& eps, Likelihood lik) {
    LatentGaussianVar lg = encode_graph(v, constant(batch));
    Var z = reparameterize_graph(lg, eps);
    Var raw = decode_graph(v, z);
    Var ll = log_likelihood_rows_graph(raw, batch, lik);
    Var kl = kl_standard_normal_graph(lg);
    return mean_all(sub(ll, kl));
}

/// Negated batch-mean ELBO (the descent objective). One eps row per element.
inline double elbo_loss(const VaeModel& m, const Tensor& batch, const Tensor& eps) {
    require_rank("elbo_loss", batch, 2);
    if (batch.shape[1] != m.input_dim())
        throw std::invalid_argument("elbo_loss: batch width does not match model input");
    if (eps.shape != Shape{batch.shape[0], m.latent_dim})
        throw std::invalid_argument("elbo_loss: eps shape " + shape_str(eps.shape) +
                                    " does not match one draw per element");
    if (m.likelihood == Likelihood::Bernoulli) detail::require_binary(batch);
    VaeVars v = bind(m, false);
    return -elbo_graph(v, batch, eps, m.likelihood)->value.scalar_value();
}

/// Batch-mean squared reconstruction distance.
inline Var ae_loss_graph(const AeVars& v, const Tensor& batch) {
    Var recon = ae_decode_graph(v, ae_encode_graph(v, constant(batch)));
    return mean_all(sum_axis(square(sub(recon, constant(batch))), 1));
}

inline double ae_loss(const AeModel& m, const Tensor& batch) {
    require_rank("ae_loss", batch, 2);
    if (batch.shape[1] != m.input_dim())
        throw std::invalid_argument("ae_loss: batch width does not match model input");
    AeVars v = bind(m, false);
    return ae_loss_graph(v, batch)->value.scalar_value();
}

/// Batch-mean softmax cross-entropy against integer labels.
inline Var cross_entropy_graph(const ClassifierVars& v, const Tensor& batch,
                               const std::vector<int>& labels) {
    Var logits = classifier_logits_graph(v, constant(batch));
    const std::size_t n = batch.shape[0], k = logits->value.shape[1];
    Tensor onehot({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
            throw std::invalid_argument("cross_entropy: label out of range");
        onehot.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return neg(mean_all(sum_axis(mul(log_softmax(logits), constant(onehot)), 1)));
}

namespace detail {

template <typename Model, typename StepFn, typename ValFn>
TrainResult run_training(Model model, const TrainConfig& cfg, const Dataset& ds, StepFn step_loss,
                         ValFn val_loss, const std::string& kind) {
    cfg.validate();
    if (ds.count() <= cfg.val_count)
        throw std::invalid_argument("training: dataset smaller than the held-out validation set");
    const std::size_t n_train = ds.count() - cfg.val_count;

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.learning_rate;
    AdamState adam;

    std::vector<std::size_t> order(n_train);
    for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

    TrainResult result;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0x7368756646ULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        Rng eps_rng(derive_seed(cfg.seed, 0x65707355ULL, static_cast<std::uint64_t>(epoch)));

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t count = std::min<std::size_t>(cfg.batch_size, n_train - start);
            Tensor batch = gather_rows(ds.images, order, start, count);
            const double loss = step_loss(model, batch, order, start, count, eps_rng, adam, adam_cfg);
            if (!std::isfinite(loss))
                throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batches));
            loss_sum += loss;
            ++batches;
        }
        EpochMetrics m{epoch, loss_sum / static_cast<double>(batches), val_loss(model)};
        result.metrics.push_back(m);
        append_log(cfg.log_path, m);
    }

    ModelBundle bundle;
    bundle.model = std::move(model);
    bundle.meta.seed = cfg.seed;
    bundle.meta.epochs = static_cast<std::uint32_t>(cfg.epochs);
    bundle.meta.final_loss = result.metrics.empty() ? 0.0 : result.metrics.back().val_loss;
    bundle.meta.dataset = cfg.dataset_id.empty() ? ds.meta.name : cfg.dataset_id;
    bundle.meta.notes = kind;
    result.bundle = std::move(bundle);
    return result;
}

}  // namespace detail

/// ELBO ascent with single-sample Monte Carlo estimates. The last `val_count`
/// images are held out; validation uses one fixed eps draw per image so epochs
/// stay comparable.
inline TrainResult train_vae(const TrainConfig& cfg, const Dataset& ds,
                             std::optional<VaeModel> init = std::nullopt) {
    cfg.validate();
    if (cfg.likelihood == Likelihood::Bernoulli && !ds.meta.binarized)
        throw std::invalid_argument("train_vae: Bernoulli likelihood requires a binarized dataset");
    Rng init_rng(derive_seed(cfg.seed, 0x696e6974ULL));
    VaeModel model = init ? std::move(*init)
                          : make_vae(ds.pixels(), cfg.hidden, cfg.latent, cfg.likelihood, init_rng);
    if (model.input_dim() != ds.pixels())
        throw std::invalid_argument("train_vae: model input does not match dataset");

    const std::size_t val_n = cfg.val_count;
    Dataset val = val_n > 0 ? ds.slice(ds.count() - val_n, val_n) : Dataset{};
    Rng val_eps_rng(derive_seed(cfg.seed, 0x76616c65ULL));
    Tensor val_eps = val_n > 0 ? val_eps_rng.normal_tensor({val_n, cfg.latent}) : Tensor{};

    auto step = [&](VaeModel& m, const Tensor& batch, const std::vector<std::size_t>&, std::size_t,
                    std::size_t count, Rng& eps_rng, AdamState& adam, const AdamConfig& adam_cfg) {
        Tensor eps = eps_rng.normal_tensor({count, m.latent_dim});
        VaeVars vars = bind(m, true);
        Var loss = neg(elbo_graph(vars, batch, eps, m.likelihood));
        backward(loss);
        auto params = parameters(m);
        auto leaves = bound_vars(vars);
        std::vector<const Tensor*> grads;
        grads.reserve(leaves.size());
        for (const auto& v : leaves) grads.push_back(&v->grad);
        adam_step(params, grads, adam, adam_cfg);
        return loss->value.scalar_value();
    };
    auto validate = [&](VaeModel& m) {
        if (val_n == 0) return 0.0;
        VaeVars vars = bind(m, false);
        return -elbo_graph(vars, val.images, val_eps, m.likelihood)->value.scalar_value();
    };
    return detail::run_training(std::move(model), cfg, ds, step, validate, "vae");
}

inline TrainResult train_ae(const TrainConfig& cfg, const Dataset& ds,
                            std::optional<AeModel> init = std::nullopt) {
    cfg.validate();
    Rng init_rng(derive_seed(cfg.seed, 0x696e6974ULL));
    AeModel model = init ? std::move(*init) : make_ae(ds.pixels(), cfg.hidden, cfg.latent, init_rng);
    if (model.input_dim() != ds.pixels())
        throw std::invalid_argument("train_ae: model input does not match dataset");

    const std::size_t val_n = cfg.val_count;
    Dataset val = val_n > 0 ? ds.slice(ds.count() - val_n, val_n) : Dataset{};

    auto step = [&](AeModel& m, const Tensor& batch, const std::vector<std::size_t>&, std::size_t,
                    std::size_t, Rng&, AdamState& adam, const AdamConfig& adam_cfg) {
        AeVars vars = bind(m, true);
        Var loss = ae_loss_graph(vars, batch);
        backward(loss);
        auto params = parameters(m);
        auto leaves = bound_vars(vars);
        std::vector<const Tensor*> grads;
        grads.reserve(leaves.size());
        for (const auto& v : leaves) grads.push_back(&v->grad);
        adam_step(params, grads, adam, adam_cfg);
        return loss->value.scalar_value();
    };
    auto validate = [&](AeModel& m) {
        if (val_n == 0) return 0.0;
        AeVars vars = bind(m, false);
        return ae_loss_graph(vars, val.images)->value.scalar_value();
    };
    return detail::run_training(std::move(model), cfg, ds, step, validate, "ae");
}

inline TrainResult train_classifier(const TrainConfig& cfg, const Dataset& ds,
                                    std::optional<ClassifierModel> init = std::nullopt) {
    cfg.validate();
    Rng init_rng(derive_seed(cfg.seed, 0x696e6974ULL));
    ClassifierModel model =
        init ? std::move(*init) : make_classifier(ds.pixels(), cfg.hidden, init_rng);
    if (model.input_dim() != ds.pixels())
        throw std::invalid_argument("train_classifier: model input does not match dataset");

    const std::size_t val_n = cfg.val_count;
    Dataset val = val_n > 0 ? ds.slice(ds.count() - val_n, val_n) : Dataset{};

    auto step = [&](ClassifierModel& m, const Tensor& batch, const std::vector<std::size_t>& order,
                    std::size_t start, std::size_t count, Rng&, AdamState& adam,
                    const AdamConfig& adam_cfg) {
        std::vector<int> labels(count);
        for (std::size_t i = 0; i < count; ++i) labels[i] = ds.labels[order[start + i]];
        ClassifierVars vars = bind(m, true);
        Var loss = cross_entropy_graph(vars, batch, labels);
        backward(loss);
        auto params = parameters(m);
        auto leaves = bound_vars(vars);
        std::vector<const Tensor*> grads;
        grads.reserve(leaves.size());
        for (const auto& v : leaves) grads.push_back(&v->grad);
        adam_step(params, grads, adam, adam_cfg);
        return loss->value.scalar_value();
    };
    auto validate = [&](ClassifierModel& m) {
        if (val_n == 0) return 0.0;
        ClassifierVars vars = bind(m, false);
        return cross_entropy_graph(vars, val.images, val.labels)->value.scalar_value();
    };
    return detail::run_training(std::move(model), cfg, ds, step, validate, "clf");
}

/// Fraction of images whose argmax class matches the label.
inline double classifier_accuracy(const ClassifierModel& m, const Dataset& ds) {
    if (ds.count() == 0) return 0.0;
    Classification c = classify(m, ds.images);
    const std::size_t k = m.classes();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ds.count(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (c.probabilities.at(i, j) > c.probabilities.at(i, best)) best = j;
        if (static_cast<int>(best) == ds.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ds.count());
}

}  // namespace lsiege
