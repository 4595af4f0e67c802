#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace lsiege {

enum class Activation { Identity, Tanh, Relu, Sigmoid };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
    }
    throw std::invalid_argument("activation_name: bad enum");
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw std::invalid_argument("activation_from_name: unknown activation '" + s + "'");
}

enum class Likelihood { Bernoulli, Gaussian };

inline std::string likelihood_name(Likelihood l) {
    return l == Likelihood::Bernoulli ? "bernoulli" : "gaussian";
}

inline Likelihood likelihood_from_name(const std::string& s) {
    if (s == "bernoulli") return Likelihood::Bernoulli;
    if (s == "gaussian") return Likelihood::Gaussian;
    throw std::invalid_argument("likelihood_from_name: unknown likelihood '" + s + "'");
}

/// Fully-connected layer, weights [in,out], bias [out].
struct Dense {
    Tensor w;
    Tensor b;
    Activation act = Activation::Identity;

    std::size_t in() const { return w.shape[0]; }
    std::size_t out() const { return w.shape[1]; }
};

inline Dense glorot_dense(std::size_t in, std::size_t out, Activation act, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Dense d;
    d.w = rng.uniform_tensor({in, out}, -limit, limit);
    d.b = Tensor::zeros({out});
    d.act = act;
    return d;
}

/// Bound layer: graph leaves for one forward/backward pass.
struct DenseVars {
    Var w;
    Var b;
    Activation act;
};

inline DenseVars bind(const Dense& d, bool trainable) {
    return {trainable ? leaf(d.w) : constant(d.w), trainable ? leaf(d.b) : constant(d.b), d.act};
}

inline Var dense_apply(const DenseVars& l, const Var& x) {
    Var z = add_bias(matmul(x, l.w), l.b);
    switch (l.act) {
        case Activation::Identity: return z;
        case Activation::Tanh: return tanh_(z);
        case Activation::Relu: return relu(z);
        case Activation::Sigmoid: return sigmoid(z);
    }
    throw std::invalid_argument("dense_apply: bad activation");
}

// ---------------------------------------------------------------------------
// latent Gaussian algebra
// ---------------------------------------------------------------------------

/// Diagonal Gaussian over the latent space: mean and log-variance rows.
/// Batched: both tensors [n, J] (or [J] for a single input).
struct LatentGaussian {
    Tensor mean;
    Tensor logvar;

    std::size_t dims() const { return mean.shape.back(); }

    void validate() const {
        require_same_shape("LatentGaussian", mean, logvar);
        for (double lv : logvar.data)
            if (!std::isfinite(lv) || !std::isfinite(std::exp(lv)))
                throw std::domain_error("LatentGaussian: non-finite variance");
    }
};

struct LatentGaussianVar {
    Var mean;
    Var logvar;
};

/// z = mean + exp(logvar/2) * eps, differentiable w.r.t. mean and logvar.
inline Var reparameterize_graph(const LatentGaussianVar& lg, const Tensor& eps) {
    require_same_shape("reparameterize", lg.mean->value, eps);
    return add(lg.mean, mul(exp_(scale(lg.logvar, 0.5)), constant(eps)));
}

inline Tensor reparameterize(const LatentGaussian& lg, const Tensor& eps) {
    lg.validate();
    LatentGaussianVar v{constant(lg.mean), constant(lg.logvar)};
    return reparameterize_graph(v, eps)->value;
}

/// Row-wise KL(q || N(0,I)) = 1/2 sum_j (mu^2 + sigma^2 - 1 - log sigma^2).
/// Input [n,J] -> [n]; scalar for rank-1 input.
inline Var kl_standard_normal_graph(const LatentGaussianVar& lg) {
    Var mu = lg.mean, lv = lg.logvar;
    Var body = add_scalar(sub(add(square(mu), exp_(lv)), lv), -1.0);
    if (body->value.rank() == 2) return scale(sum_axis(body, 1), 0.5);
    return scale(sum_all(body), 0.5);
}

inline double kl_standard_normal(const LatentGaussian& lg) {
    lg.validate();
    LatentGaussianVar v{constant(lg.mean), constant(lg.logvar)};
    Var kl = kl_standard_normal_graph(v);
    double total = 0.0;
    for (double x : kl->value.data) total += x;
    return total;
}

/// Row-wise KL(a || t) for diagonal Gaussians, t frozen:
/// sum_j [ (logvar_t - logvar_a)/2 + (sigma_a^2 + (mu_a - mu_t)^2) / (2 sigma_t^2) - 1/2 ].
inline Var kl_between_graph(const LatentGaussianVar& a, const LatentGaussian& t) {
    require_same_shape("kl_between", a.mean->value, t.mean);
    // per dim: (ratio - dlv + (mu_a-mu_t)^2/var_t - 1)/2 with ratio = var_a/var_t,
    // dlv = logvar_a - logvar_t; exactly zero when a == t componentwise
    Tensor inv_var_t = t.logvar;
    for (auto& v : inv_var_t.data) v = std::exp(-v);
    Var dlv = sub(a.logvar, constant(t.logvar));
    Var ratio = exp_(dlv);
    Var quad = mul(square(sub(a.mean, constant(t.mean))), constant(inv_var_t));
    Var body = add_scalar(add(sub(ratio, dlv), quad), -1.0);
    if (body->value.rank() == 2) return scale(sum_axis(body, 1), 0.5);
    return scale(sum_all(body), 0.5);
}

inline double kl_between(const LatentGaussian& a, const LatentGaussian& t) {
    a.validate();
    t.validate();
    if (a.dims() != t.dims())
        throw std::invalid_argument("kl_between: dimension mismatch " + shape_str(a.mean.shape) +
                                    " vs " + shape_str(t.mean.shape));
    LatentGaussianVar av{constant(a.mean), constant(a.logvar)};
    Var kl = kl_between_graph(av, t);
    double total = 0.0;
    for (double x : kl->value.data) total += x;
    return total;
}

// ---------------------------------------------------------------------------
// models
// ---------------------------------------------------------------------------

/// Variational autoencoder: MLP trunk, mean/log-variance heads, MLP decoder.
/// The log-variance head is clamped to +-logvar_clip to keep the attack
/// optimization away from collapsed or exploded variances.
struct VaeModel {
    std::vector<Dense> encoder;
    Dense mean_head;
    Dense logvar_head;
    std::vector<Dense> decoder;
    Dense decoder_out;  // emits logits (Bernoulli) or means (Gaussian)
    Likelihood likelihood = Likelihood::Bernoulli;
    std::size_t latent_dim = 0;
    double logvar_clip = 10.0;

    std::size_t input_dim() const { return encoder.empty() ? mean_head.in() : encoder[0].in(); }
};

struct VaeVars {
    std::vector<DenseVars> encoder;
    DenseVars mean_head;
    DenseVars logvar_head;
    std::vector<DenseVars> decoder;
    DenseVars decoder_out;
    double logvar_clip;
};

inline VaeVars bind(const VaeModel& m, bool trainable) {
    VaeVars v;
    for (const auto& l : m.encoder) v.encoder.push_back(bind(l, trainable));
    v.mean_head = bind(m.mean_head, trainable);
    v.logvar_head = bind(m.logvar_head, trainable);
    for (const auto& l : m.decoder) v.decoder.push_back(bind(l, trainable));
    v.decoder_out = bind(m.decoder_out, trainable);
    v.logvar_clip = m.logvar_clip;
    return v;
}

inline LatentGaussianVar encode_graph(const VaeVars& v, Var x) {
    for (const auto& l : v.encoder) x = dense_apply(l, x);
    Var mu = dense_apply(v.mean_head, x);
    Var lv = clamp(dense_apply(v.logvar_head, x), -v.logvar_clip, v.logvar_clip);
    return {mu, lv};
}

inline Var decode_graph(const VaeVars& v, Var z) {
    for (const auto& l : v.decoder) z = dense_apply(l, z);
    return dense_apply(v.decoder_out, z);
}

namespace detail {
inline Tensor as_row_matrix(const Tensor& x) {
    if (x.rank() == 1) return Tensor({1, x.shape[0]}, x.data);
    return x;
}
inline Tensor as_input_shape(Tensor t, const Tensor& like) {
    if (like.rank() == 1 && t.rank() == 2 && t.shape[0] == 1) return Tensor({t.shape[1]}, t.data);
    return t;
}
}  // namespace detail

/// Deterministic map x -> (mean, logvar); accepts [P] or [n,P].
inline LatentGaussian encode(const VaeModel& m, const Tensor& x) {
    if (x.shape.back() != m.input_dim())
        throw std::invalid_argument("encode: input width " + shape_str(x.shape) +
                                    " does not match model input " +
                                    std::to_string(m.input_dim()));
    VaeVars v = bind(m, false);
    auto lg = encode_graph(v, constant(detail::as_row_matrix(x)));
    return {detail::as_input_shape(lg.mean->value, x), detail::as_input_shape(lg.logvar->value, x)};
}

/// Decoder output: per-pixel Bernoulli probabilities, or Gaussian means.
inline Tensor decode(const VaeModel& m, const Tensor& z) {
    if (z.shape.back() != m.latent_dim)
        throw std::invalid_argument("decode: latent width " + shape_str(z.shape) +
                                    " does not match latent dimension " +
                                    std::to_string(m.latent_dim));
    VaeVars v = bind(m, false);
    Var raw = decode_graph(v, constant(detail::as_row_matrix(z)));
    Tensor out = m.likelihood == Likelihood::Bernoulli ? sigmoid(raw)->value : raw->value;
    return detail::as_input_shape(out, z);
}

/// Deterministic autoencoder: point bottleneck, sigmoid reconstruction.
struct AeModel {
    std::vector<Dense> encoder;
    Dense bottleneck;  // identity activation
    std::vector<Dense> decoder;
    Dense decoder_out;  // sigmoid activation
    std::size_t latent_dim = 0;

    std::size_t input_dim() const { return encoder.empty() ? bottleneck.in() : encoder[0].in(); }
};

struct AeVars {
    std::vector<DenseVars> encoder;
    DenseVars bottleneck;
    std::vector<DenseVars> decoder;
    DenseVars decoder_out;
};

inline AeVars bind(const AeModel& m, bool trainable) {
    AeVars v;
    for (const auto& l : m.encoder) v.encoder.push_back(bind(l, trainable));
    v.bottleneck = bind(m.bottleneck, trainable);
    for (const auto& l : m.decoder) v.decoder.push_back(bind(l, trainable));
    v.decoder_out = bind(m.decoder_out, trainable);
    return v;
}

inline Var ae_encode_graph(const AeVars& v, Var x) {
    for (const auto& l : v.encoder) x = dense_apply(l, x);
    return dense_apply(v.bottleneck, x);
}

inline Var ae_decode_graph(const AeVars& v, Var z) {
    for (const auto& l : v.decoder) z = dense_apply(l, z);
    return dense_apply(v.decoder_out, z);
}

inline Tensor ae_encode(const AeModel& m, const Tensor& x) {
    if (x.shape.back() != m.input_dim())
        throw std::invalid_argument("ae_encode: input width " + shape_str(x.shape) +
                                    " does not match model input " +
                                    std::to_string(m.input_dim()));
    AeVars v = bind(m, false);
    return detail::as_input_shape(ae_encode_graph(v, constant(detail::as_row_matrix(x)))->value, x);
}

inline Tensor ae_decode(const AeModel& m, const Tensor& z) {
    if (z.shape.back() != m.latent_dim)
        throw std::invalid_argument("ae_decode: latent width " + shape_str(z.shape) +
                                    " does not match bottleneck " + std::to_string(m.latent_dim));
    AeVars v = bind(m, false);
    return detail::as_input_shape(ae_decode_graph(v, constant(detail::as_row_matrix(z)))->value, z);
}

/// Softmax classifier over 10 classes.
struct ClassifierModel {
    std::vector<Dense> layers;
    Dense out;  // identity activation, width 10

    std::size_t input_dim() const { return layers.empty() ? out.in() : layers[0].in(); }
    std::size_t classes() const { return out.out(); }
};

struct ClassifierVars {
    std::vector<DenseVars> layers;
    DenseVars out;
};

inline ClassifierVars bind(const ClassifierModel& m, bool trainable) {
    ClassifierVars v;
    for (const auto& l : m.layers) v.layers.push_back(bind(l, trainable));
    v.out = bind(m.out, trainable);
    return v;
}

inline Var classifier_logits_graph(const ClassifierVars& v, Var x) {
    for (const auto& l : v.layers) x = dense_apply(l, x);
    return dense_apply(v.out, x);
}

struct Classification {
    Tensor logits;
    Tensor probabilities;  // stable softmax of the logits
    Tensor log_probabilities;
};

inline Classification classify(const ClassifierModel& m, const Tensor& x) {
    if (x.shape.back() != m.input_dim())
        throw std::invalid_argument("classify: input width " + shape_str(x.shape) +
                                    " does not match model input " +
                                    std::to_string(m.input_dim()));
    ClassifierVars v = bind(m, false);
    Var logits = classifier_logits_graph(v, constant(detail::as_row_matrix(x)));
    Var logp = log_softmax(logits);
    Tensor probs = logp->value;
    for (auto& p : probs.data) p = std::exp(p);
    return {detail::as_input_shape(logits->value, x), detail::as_input_shape(probs, x),
            detail::as_input_shape(logp->value, x)};
}

inline int argmax_class(const Tensor& probs) {
    int best = 0;
    for (std::size_t i = 1; i < probs.numel(); ++i)
        if (probs.data[i] > probs.data[best]) best = static_cast<int>(i);
    return best;
}

// ---------------------------------------------------------------------------
// factory functions (default desk-scale architectures)
// ---------------------------------------------------------------------------

inline VaeModel make_vae(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                         std::size_t latent, Likelihood lik, Rng& rng,
                         Activation act = Activation::Tanh) {
    VaeModel m;
    m.likelihood = lik;
    m.latent_dim = latent;
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        m.encoder.push_back(glorot_dense(prev, h, act, rng));
        prev = h;
    }
    m.mean_head = glorot_dense(prev, latent, Activation::Identity, rng);
    m.logvar_head = glorot_dense(prev, latent, Activation::Identity, rng);
    prev = latent;
    for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
        m.decoder.push_back(glorot_dense(prev, *it, act, rng));
        prev = *it;
    }
    m.decoder_out = glorot_dense(prev, input_dim, Activation::Identity, rng);
    return m;
}

inline AeModel make_ae(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                       std::size_t latent, Rng& rng, Activation act = Activation::Tanh) {
    AeModel m;
    m.latent_dim = latent;
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        m.encoder.push_back(glorot_dense(prev, h, act, rng));
        prev = h;
    }
    m.bottleneck = glorot_dense(prev, latent, Activation::Identity, rng);
    prev = latent;
    for (auto it = hidden.rbegin(); it != hidden.rend(); ++it) {
        m.decoder.push_back(glorot_dense(prev, *it, act, rng));
        prev = *it;
    }
    m.decoder_out = glorot_dense(prev, input_dim, Activation::Sigmoid, rng);
    return m;
}

inline ClassifierModel make_classifier(std::size_t input_dim,
                                       const std::vector<std::size_t>& hidden, Rng& rng,
                                       std::size_t classes = 10,
                                       Activation act = Activation::Relu) {
    ClassifierModel m;
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        m.layers.push_back(glorot_dense(prev, h, act, rng));
        prev = h;
    }
    m.out = glorot_dense(prev, classes, Activation::Identity, rng);
    return m;
}

// parameter lists in checkpoint order

inline std::vector<Tensor*> parameters(VaeModel& m) {
    std::vector<Tensor*> ps;
    for (auto& l : m.encoder) {
        ps.push_back(&l.w);
        ps.push_back(&l.b);
    }
    ps.push_back(&m.mean_head.w);
    ps.push_back(&m.mean_head.b);
    ps.push_back(&m.logvar_head.w);
    ps.push_back(&m.logvar_head.b);
    for (auto& l : m.decoder) {
        ps.push_back(&l.w);
        ps.push_back(&l.b);
    }
    ps.push_back(&m.decoder_out.w);
    ps.push_back(&m.decoder_out.b);
    return ps;
}

inline std::vector<Tensor*> parameters(AeModel& m) {
    std::vector<Tensor*> ps;
    for (auto& l : m.encoder) {
        ps.push_back(&l.w);
        ps.push_back(&l.b);
    }
    ps.push_back(&m.bottleneck.w);
    ps.push_back(&m.bottleneck.b);
    for (auto& l : m.decoder) {
        ps.push_back(&l.w);
        ps.push_back(&l.b);
    }
    ps.push_back(&m.decoder_out.w);
    ps.push_back(&m.decoder_out.b);
    return ps;
}

inline std::vector<Tensor*> parameters(ClassifierModel& m) {
    std::vector<Tensor*> ps;
    for (auto& l : m.layers) {
        ps.push_back(&l.w);
        ps.push_back(&l.b);
    }
    ps.push_back(&m.out.w);
    ps.push_back(&m.out.b);
    return ps;
}

inline std::vector<Var> bound_vars(const VaeVars& v) {
    std::vector<Var> vars;
    for (const auto& l : v.encoder) {
        vars.push_back(l.w);
        vars.push_back(l.b);
    }
    vars.push_back(v.mean_head.w);
    vars.push_back(v.mean_head.b);
    vars.push_back(v.logvar_head.w);
    vars.push_back(v.logvar_head.b);
    for (const auto& l : v.decoder) {
        vars.push_back(l.w);
        vars.push_back(l.b);
    }
    vars.push_back(v.decoder_out.w);
    vars.push_back(v.decoder_out.b);
    return vars;
}

inline std::vector<Var> bound_vars(const AeVars& v) {
    std::vector<Var> vars;
    for (const auto& l : v.encoder) {
        vars.push_back(l.w);
        vars.push_back(l.b);
    }
    vars.push_back(v.bottleneck.w);
    vars.push_back(v.bottleneck.b);
    for (const auto& l : v.decoder) {
        vars.push_back(l.w);
        vars.push_back(l.b);
    }
    vars.push_back(v.decoder_out.w);
    vars.push_back(v.decoder_out.b);
    return vars;
}

inline std::vector<Var> bound_vars(const ClassifierVars& v) {
    std::vector<Var> vars;
    for (const auto& l : v.layers) {
        vars.push_back(l.w);
        vars.push_back(l.b);
    }
    vars.push_back(v.out.w);
    vars.push_back(v.out.b);
    return vars;
}

}  // namespace lsiege
