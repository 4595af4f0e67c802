#include <catch2/catch_amalgamated.hpp>

#include "lsiege/gradcheck.hpp"
#include "lsiege/models.hpp"
#include "lsiege/rng.hpp"

using namespace lsiege;

namespace {

void zero(Dense& d) {
    for (auto& v : d.w.data) v = 0.0;
    for (auto& v : d.b.data) v = 0.0;
}

/// Monte Carlo estimate of KL(a || t) from samples of a.
double mc_kl(const LatentGaussian& a, const LatentGaussian& t, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t j = a.dims();
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        double lq = 0.0, lp = 0.0;
        for (std::size_t d = 0; d < j; ++d) {
            const double sa = std::exp(0.5 * a.logvar.data[d]);
            const double z = a.mean.data[d] + sa * rng.normal();
            const double za = (z - a.mean.data[d]) / sa;
            lq += -0.5 * za * za - 0.5 * a.logvar.data[d];
            const double st = std::exp(0.5 * t.logvar.data[d]);
            const double zt = (z - t.mean.data[d]) / st;
            lp += -0.5 * zt * zt - 0.5 * t.logvar.data[d];
        }
        acc += lq - lp;
    }
    return acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("encode is deterministic and validates input width") {
    Rng rng(1);
    VaeModel m = make_vae(12, {8}, 3, Likelihood::Bernoulli, rng);
    Tensor x = rng.uniform_tensor({12}, 0.0, 1.0);
    LatentGaussian a = encode(m, x);
    LatentGaussian b = encode(m, x);
    CHECK(a.mean.data == b.mean.data);
    CHECK(a.logvar.data == b.logvar.data);
    CHECK(a.dims() == 3);
    CHECK_THROWS_AS(encode(m, Tensor({11})), std::invalid_argument);
}

TEST_CASE("zero-initialized heads emit the standard normal") {
    Rng rng(2);
    VaeModel m = make_vae(10, {6}, 4, Likelihood::Bernoulli, rng);
    zero(m.mean_head);
    zero(m.logvar_head);
    Tensor x = rng.uniform_tensor({10}, 0.0, 1.0);
    LatentGaussian lg = encode(m, x);
    for (double v : lg.mean.data) CHECK(v == 0.0);
    for (double v : lg.logvar.data) CHECK(v == 0.0);
}

TEST_CASE("reparameterize matches its closed forms") {
    LatentGaussian lg{Tensor::row({1.0, -2.0, 0.5}), Tensor::row({0.0, 0.0, 0.0})};
    Tensor eps0 = Tensor::zeros({3});
    Tensor z0 = reparameterize(lg, eps0);
    CHECK(z0.data == lg.mean.data);

    Tensor e1 = Tensor::row({1.0, 0.0, 0.0});
    Tensor z1 = reparameterize(lg, e1);
    CHECK(z1.data[0] == Catch::Approx(2.0));
    CHECK(z1.data[1] == Catch::Approx(-2.0));
    CHECK(z1.data[2] == Catch::Approx(0.5));

    CHECK_THROWS_AS(reparameterize(lg, Tensor({2})), std::invalid_argument);
}

TEST_CASE("reparameterize sampling moments match the distribution") {
    const double mu = 0.7, var = 2.25;
    LatentGaussian lg{Tensor::row({mu}), Tensor::row({std::log(var)})};
    Rng rng(31);
    const std::size_t n = 1000000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor eps = Tensor::row({rng.normal()});
        const double z = reparameterize(lg, eps).data[0];
        sum += z;
        sq += z * z;
    }
    const double mean = sum / n;
    const double variance = sq / n - mean * mean;
    CHECK(std::abs(mean - mu) / mu < 0.01);
    CHECK(std::abs(variance - var) / var < 0.01);
}

TEST_CASE("reparameterize gradients match finite differences under fixed eps") {
    Rng rng(37);
    Tensor eps = rng.normal_tensor({4});
    auto f = [&](const std::vector<Var>& v) {
        LatentGaussianVar lg{v[0], v[1]};
        return sum_all(square(reparameterize_graph(lg, eps)));
    };
    CHECK(grad_check(f, {rng.normal_tensor({4}), rng.normal_tensor({4})}) < 1e-4);
}

TEST_CASE("kl to the standard normal hits its closed-form anchors") {
    LatentGaussian std_gauss{Tensor::row({0.0}), Tensor::row({0.0})};
    CHECK(kl_standard_normal(std_gauss) == 0.0);

    LatentGaussian shifted{Tensor::row({1.0}), Tensor::row({0.0})};
    CHECK(kl_standard_normal(shifted) == Catch::Approx(0.5).epsilon(1e-12));

    LatentGaussian wide{Tensor::row({0.0}), Tensor::row({std::log(4.0)})};
    CHECK(kl_standard_normal(wide) == Catch::Approx(0.80685).margin(2e-5));
    const double mc = mc_kl(wide, std_gauss, 1000000, 7);
    CHECK(std::abs(mc - kl_standard_normal(wide)) / kl_standard_normal(wide) < 0.01);
}

TEST_CASE("kl between gaussians hits its closed-form anchors") {
    LatentGaussian a{Tensor::row({0.0}), Tensor::row({0.0})};
    CHECK(kl_between(a, a) == 0.0);

    LatentGaussian t{Tensor::row({1.0}), Tensor::row({0.0})};
    CHECK(kl_between(a, t) == Catch::Approx(0.5).epsilon(1e-12));

    LatentGaussian wide{Tensor::row({0.0}), Tensor::row({std::log(2.0)})};
    LatentGaussian narrow{Tensor::row({0.0}), Tensor::row({0.0})};
    CHECK(kl_between(wide, narrow) == Catch::Approx(0.15343).margin(2e-5));
    const double mc = mc_kl(wide, narrow, 1000000, 11);
    CHECK(std::abs(mc - kl_between(wide, narrow)) / kl_between(wide, narrow) < 0.01);

    LatentGaussian bad{Tensor::row({0.0, 0.0}), Tensor::row({0.0, 0.0})};
    CHECK_THROWS_AS(kl_between(a, bad), std::invalid_argument);
}

TEST_CASE("kl is non-negative and zero only at equality") {
    Rng rng(41);
    for (int rep = 0; rep < 1000; ++rep) {
        LatentGaussian a{rng.normal_tensor({3}), rng.uniform_tensor({3}, -2.0, 2.0)};
        LatentGaussian t{rng.normal_tensor({3}), rng.uniform_tensor({3}, -2.0, 2.0)};
        CHECK(kl_between(a, t) >= 0.0);
    }
    LatentGaussian a{rng.normal_tensor({5}), rng.uniform_tensor({5}, -1.0, 1.0)};
    CHECK(kl_between(a, a) == 0.0);
}

TEST_CASE("kl to standard normal agrees with the general form") {
    Rng rng(43);
    for (int rep = 0; rep < 50; ++rep) {
        LatentGaussian a{rng.normal_tensor({4}), rng.uniform_tensor({4}, -2.0, 2.0)};
        LatentGaussian std_gauss{Tensor::zeros({4}), Tensor::zeros({4})};
        CHECK(std::abs(kl_standard_normal(a) - kl_between(a, std_gauss)) < 1e-10);
    }
}

TEST_CASE("kl gradients flow through the adversarial side") {
    Rng rng(47);
    LatentGaussian t{rng.normal_tensor({3}), rng.uniform_tensor({3}, -1.0, 1.0)};
    auto f = [&](const std::vector<Var>& v) {
        LatentGaussianVar a{v[0], v[1]};
        return sum_all(kl_between_graph(a, t));
    };
    CHECK(grad_check(f, {rng.normal_tensor({3}), rng.uniform_tensor({3}, -1.0, 1.0)}) < 1e-4);
}

TEST_CASE("decode emits probabilities for the bernoulli likelihood") {
    Rng rng(53);
    VaeModel m = make_vae(10, {6}, 3, Likelihood::Bernoulli, rng);
    zero(m.decoder_out);
    Tensor z = rng.normal_tensor({3});
    Tensor probs = decode(m, z);
    for (double p : probs.data) CHECK(p == 0.5);

    VaeModel g = make_vae(10, {6}, 3, Likelihood::Gaussian, rng);
    Tensor means = decode(g, z);
    CHECK(means.numel() == 10);
    CHECK_THROWS_AS(decode(m, Tensor({4})), std::invalid_argument);
}

TEST_CASE("ae encode/decode are deterministic point maps") {
    Rng rng(59);
    AeModel m = make_ae(10, {6}, 2, rng);
    Tensor x = rng.uniform_tensor({10}, 0.0, 1.0);
    Tensor z1 = ae_encode(m, x), z2 = ae_encode(m, x);
    CHECK(z1.data == z2.data);
    Tensor r = ae_decode(m, z1);
    for (double v : r.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    zero(m.decoder_out);
    Tensor half = ae_decode(m, z1);
    for (double v : half.data) CHECK(v == 0.5);
    CHECK_THROWS_AS(ae_encode(m, Tensor({9})), std::invalid_argument);
    CHECK_THROWS_AS(ae_decode(m, Tensor({3})), std::invalid_argument);
}

TEST_CASE("classifier probabilities are a proper distribution") {
    Rng rng(61);
    ClassifierModel m = make_classifier(12, {8}, rng);
    Tensor x = rng.uniform_tensor({12}, 0.0, 1.0);
    Classification c = classify(m, x);
    double total = 0.0;
    for (double p : c.probabilities.data) total += p;
    CHECK(std::abs(total - 1.0) < 1e-9);

    ClassifierModel uniform = make_classifier(12, {8}, rng);
    zero(uniform.layers[0]);
    zero(uniform.out);
    Classification u = classify(uniform, x);
    for (double p : u.probabilities.data) CHECK(p == Catch::Approx(0.1).epsilon(1e-12));
    CHECK_THROWS_AS(classify(m, Tensor({11})), std::invalid_argument);
}

TEST_CASE("logvar head clamp keeps variances bounded") {
    Rng rng(67);
    VaeModel m = make_vae(8, {4}, 2, Likelihood::Bernoulli, rng);
    for (auto& v : m.logvar_head.b.data) v = 100.0;  // force saturation
    Tensor x = rng.uniform_tensor({8}, 0.0, 1.0);
    LatentGaussian lg = encode(m, x);
    for (double lv : lg.logvar.data) CHECK(lv <= m.logvar_clip);
    lg.validate();  // variances finite
}
