#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "lsiege/attack.hpp"
#include "lsiege/checkpoint.hpp"
#include "lsiege/harness.hpp"
#include "lsiege/stats.hpp"
#include "testutil.hpp"

using namespace lsiege;

namespace {

AttackConfig tiny_attack(double c) {
    AttackConfig cfg;
    cfg.c = c;
    cfg.iterations = 300;
    cfg.learning_rate = 1e-2;
    return cfg;
}

std::string param_fingerprint(const VaeModel& m) {
    VaeModel copy = m;
    std::ostringstream os;
    for (auto* p : parameters(copy))
        os.write(reinterpret_cast<const char*>(p->data.data()),
                 static_cast<std::streamsize>(p->numel() * sizeof(double)));
    return os.str();
}

}  // namespace

TEST_CASE("latent attack stays inside the pixel box exactly") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    AttackConfig cfg = tiny_attack(0.1);
    cfg.delta = DeltaKind::Kl;
    AttackResult r = latent_attack(vae, ds.image(0), ds.image(1), cfg);
    for (double v : r.adversarial.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(r.objective_trace.size() == 301);
    for (double v : r.objective_trace) CHECK(std::isfinite(v));
    CHECK(r.objective_trace.back() <= r.objective_trace.front());
    CHECK(r.converged);
}

TEST_CASE("the attacked model is bit-identical before and after") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    const std::string before = param_fingerprint(vae);
    AttackConfig cfg = tiny_attack(1.0);
    latent_attack(vae, ds.image(2), ds.image(3), cfg);
    CHECK(param_fingerprint(vae) == before);
}

TEST_CASE("attacking a target equal to the original keeps the distortion at zero") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    AttackConfig cfg = tiny_attack(1.0);
    AttackResult r = latent_attack(vae, ds.image(4), ds.image(4), cfg);
    CHECK(r.raw_distortion == Catch::Approx(0.0).margin(1e-9));
    CHECK(kl_between(r.latent_adv, r.latent_target) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("a huge C pins the distortion near zero") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    Tensor xo = ds.image(5), xt = ds.image(6);
    AttackConfig cfg = tiny_attack(std::exp2(20.0));
    AttackResult r = latent_attack(vae, xo, xt, cfg);
    CHECK(r.raw_distortion / l2_dist(xt, xo) < 0.05);
    // reconstruction essentially the original's
    const LatentGaussian z_orig = encode(vae, xo);
    CHECK(kl_between(r.latent_adv, z_orig) < 0.01);
}

TEST_CASE("a tiny C drives the latent representation onto the target's") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    Tensor xo = ds.image(7), xt = ds.image(8);
    AttackConfig cfg = tiny_attack(std::exp2(-20.0));
    AttackResult r = latent_attack(vae, xo, xt, cfg);
    const double kl_start = kl_between(encode(vae, xo), r.latent_target);
    const double kl_end = kl_between(r.latent_adv, r.latent_target);
    CHECK(kl_end < 0.05 * kl_start);
}

TEST_CASE("the distortion/C trade-off is monotone") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    Tensor xo = ds.image(9), xt = ds.image(10);
    std::vector<double> cs, dists;
    for (int i = 0; i < 10; ++i) {
        const double c = std::exp2(-20.0 + 40.0 * i / 9.0);
        AttackConfig cfg = tiny_attack(c);
        cfg.seed = 42;
        AttackResult r = latent_attack(vae, xo, xt, cfg);
        cs.push_back(c);
        dists.push_back(r.raw_distortion);
    }
    CHECK(spearman(cs, dists) <= -0.9);
}

TEST_CASE("delta kinds are tied to model kinds") {
    const auto& vae = testutil::tiny_vae();
    const auto& ae = testutil::tiny_ae();
    const auto& ds = testutil::tiny_digits();
    AttackConfig cfg = tiny_attack(1.0);
    cfg.delta = DeltaKind::LatentL2;
    CHECK_THROWS_AS(latent_attack(vae, ds.image(0), ds.image(1), cfg), std::invalid_argument);
    cfg.delta = DeltaKind::Kl;
    CHECK_THROWS_AS(latent_attack(ae, ds.image(0), ds.image(1), cfg), std::invalid_argument);
}

TEST_CASE("ae latent attack drives the bottleneck onto the target's") {
    const auto& ae = testutil::tiny_ae();
    const auto& ds = testutil::tiny_digits();
    Tensor xo = ds.image(11), xt = ds.image(12);
    AttackConfig cfg = tiny_attack(std::exp2(-20.0));
    cfg.delta = DeltaKind::LatentL2;
    AttackResult r = latent_attack(ae, xo, xt, cfg);
    const double start = l2_dist(ae_encode(ae, xo), r.point_target);
    const double end = l2_dist(r.point_adv, r.point_target);
    CHECK(end < 0.25 * start);
    for (double v : r.adversarial.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("output attack runs to completion and respects a huge C") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    AttackConfig cfg = tiny_attack(1.0);
    AttackResult r = output_attack(vae, ds.image(0), ds.image(1), cfg);
    CHECK(r.objective_trace.size() == 301);
    for (double v : r.objective_trace) CHECK(std::isfinite(v));

    AttackConfig big = tiny_attack(std::exp2(20.0));
    AttackResult r2 = output_attack(vae, ds.image(0), ds.image(1), big);
    CHECK(r2.raw_distortion < 0.05 * l2_dist(ds.image(1), ds.image(0)));
}

TEST_CASE("classifier attack obeys extreme C regimes and records consistent logits") {
    const auto& clf = testutil::tiny_classifier();
    const auto& ds = testutil::tiny_digits_gray();
    auto pairs = sample_classifier_pairs(clf, ds, 10, 5);

    int successes_small_c = 0;
    for (const auto& pr : pairs) {
        Tensor x = ds.image(pr.image);
        AttackConfig big = tiny_attack(std::exp2(20.0));
        AttackResult rb = classifier_attack(clf, x, pr.adversarial_class, big);
        CHECK(rb.raw_distortion < 1e-3);
        Classification c = classify(clf, rb.adversarial);
        CHECK(argmax_class(c.probabilities) == pr.label);

        AttackConfig small = tiny_attack(std::exp2(-10.0));
        AttackResult rs = classifier_attack(clf, x, pr.adversarial_class, small);
        Classification cs = classify(clf, rs.adversarial);
        if (argmax_class(cs.probabilities) == pr.adversarial_class) ++successes_small_c;

        CHECK(std::abs(std::log(rs.p_adv / (1.0 - rs.p_adv)) - rs.logit_adv) < 1e-9);
        CHECK(std::abs(std::log(rs.p_orig / (1.0 - rs.p_orig)) - rs.logit_orig) < 1e-9);
        CHECK(rs.p_adv > 0.0);
        CHECK(rs.p_adv < 1.0);
    }
    CHECK(successes_small_c >= 9);
}

TEST_CASE("classifier attack rejects the original class as target") {
    const auto& clf = testutil::tiny_classifier();
    const auto& ds = testutil::tiny_digits_gray();
    Classification c = classify(clf, ds.image(0));
    CHECK_THROWS_AS(classifier_attack(clf, ds.image(0), argmax_class(c.probabilities),
                                      tiny_attack(1.0)),
                    std::invalid_argument);
}

TEST_CASE("reconstruct_average reports per-sample distances and their mean") {
    const auto& vae = testutil::tiny_vae();
    const auto& ds = testutil::tiny_digits();
    Tensor x = ds.image(0), ref = ds.image(1);

    Rng rng(3);
    ReconstructionStats one = reconstruct_average(vae, x, 1, rng, ref, true);
    REQUIRE(one.samples.size() == 1);
    CHECK(one.mean_distance == Catch::Approx(one.distances[0]));
    CHECK(one.mean_distance == Catch::Approx(l2_dist(one.samples[0], ref)));

    // averaging shrinks the spread
    std::vector<double> singles, means;
    for (int rep = 0; rep < 20; ++rep) {
        Rng r1(derive_seed(10, rep, 0)), r2(derive_seed(10, rep, 1));
        singles.push_back(reconstruct_average(vae, x, 1, r1, ref).mean_distance);
        means.push_back(reconstruct_average(vae, x, 100, r2, ref).mean_distance);
    }
    auto variance = [](const std::vector<double>& v) {
        double m = 0, s = 0;
        for (double x_ : v) m += x_;
        m /= v.size();
        for (double x_ : v) s += (x_ - m) * (x_ - m);
        return s / v.size();
    };
    CHECK(variance(means) < variance(singles));

    // 100-sample mean is already close to a high-count estimate
    Rng r100(11), r10k(13);
    const double m100 = reconstruct_average(vae, x, 100, r100, ref).mean_distance;
    const double m10k = reconstruct_average(vae, x, 10000, r10k, ref).mean_distance;
    CHECK(std::abs(m100 - m10k) / m10k < 0.05);
}

TEST_CASE("attack configs are validated") {
    AttackConfig cfg;
    cfg.c = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.iterations = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.lower = 1.0;
    cfg.upper = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
