#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "lsiege/checkpoint.hpp"
#include "lsiege/gradcheck.hpp"
#include "lsiege/train.hpp"
#include "testutil.hpp"

using namespace lsiege;

namespace {

void zero(Dense& d) {
    for (auto& v : d.w.data) v = 0.0;
    for (auto& v : d.b.data) v = 0.0;
}

/// Uniform-decoder, standard-normal-encoder model: the analytic ELBO baseline.
VaeModel uniform_vae(std::size_t pixels, std::size_t latent) {
    Rng rng(1);
    VaeModel m = make_vae(pixels, {16}, latent, Likelihood::Bernoulli, rng);
    zero(m.mean_head);
    zero(m.logvar_head);
    zero(m.decoder_out);
    return m;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("uniform decoder with standard-normal encoder gives the -P ln2 baseline") {
    const std::size_t P = 36, J = 3;
    VaeModel m = uniform_vae(P, J);
    Rng rng(3);
    Tensor batch({4, P});
    for (auto& v : batch.data) v = rng.below(2) ? 1.0 : 0.0;
    Tensor eps = rng.normal_tensor({4, J});
    const double loss = elbo_loss(m, batch, eps);  // negated ELBO
    CHECK(loss == Catch::Approx(P * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("elbo rejects non-binary data under the bernoulli likelihood") {
    VaeModel m = uniform_vae(9, 2);
    Tensor batch({1, 9}, std::vector<double>(9, 0.25));
    Tensor eps = Tensor::zeros({1, 2});
    CHECK_THROWS_WITH(elbo_loss(m, batch, eps),
                      Catch::Matchers::ContainsSubstring("binary"));
}

TEST_CASE("elbo is non-positive for bernoulli models") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        VaeModel m = make_vae(16, {8}, 3, Likelihood::Bernoulli, rng);
        Tensor batch({3, 16});
        for (auto& v : batch.data) v = rng.below(2) ? 1.0 : 0.0;
        Tensor eps = rng.normal_tensor({3, 3});
        CHECK(elbo_loss(m, batch, eps) >= 0.0);  // loss = -elbo
    }
}

TEST_CASE("single-sample elbo estimates are self-consistent in the mean") {
    Rng rng(9);
    VaeModel m = make_vae(25, {12}, 3, Likelihood::Bernoulli, rng);
    Tensor image({25});
    for (auto& v : image.data) v = rng.below(2) ? 1.0 : 0.0;
    const std::size_t rows = 1000, reps = 100;  // 1e5 single-sample estimates per run
    Tensor batch({rows, 25});
    for (std::size_t i = 0; i < rows; ++i)
        std::copy(image.data.begin(), image.data.end(), batch.data.begin() + i * 25);

    auto run = [&](std::uint64_t seed) {
        Rng eps_rng(seed);
        double acc = 0.0;
        for (std::size_t r = 0; r < reps; ++r)
            acc += elbo_loss(m, batch, eps_rng.normal_tensor({rows, 3}));
        return acc / static_cast<double>(reps);
    };
    const double a = run(100), b = run(200);
    CHECK(std::abs(a - b) / std::abs(a) < 0.005);
}

TEST_CASE("elbo gradients match finite differences under fixed eps") {
    Rng rng(11);
    const std::size_t P = 10, J = 2;
    VaeModel m = make_vae(P, {6}, J, Likelihood::Bernoulli, rng);
    Tensor batch({2, P});
    for (auto& v : batch.data) v = rng.below(2) ? 1.0 : 0.0;
    Tensor eps = rng.normal_tensor({2, J});

    auto params = parameters(m);
    std::vector<Tensor> points;
    for (auto* p : params) points.push_back(*p);
    auto f = [&](const std::vector<Var>& vars) {
        VaeVars v;
        std::size_t k = 0;
        auto grab = [&](Activation act) {
            DenseVars d{vars[k], vars[k + 1], act};
            k += 2;
            return d;
        };
        for (const auto& l : m.encoder) v.encoder.push_back(grab(l.act));
        v.mean_head = grab(m.mean_head.act);
        v.logvar_head = grab(m.logvar_head.act);
        for (const auto& l : m.decoder) v.decoder.push_back(grab(l.act));
        v.decoder_out = grab(m.decoder_out.act);
        v.logvar_clip = m.logvar_clip;
        return neg(elbo_graph(v, batch, eps, m.likelihood));
    };
    GradCheckOptions opt;
    opt.max_coords = 150;
    opt.seed = 4;
    CHECK(grad_check(f, points, opt) < 1e-4);
}

TEST_CASE("zero additional epochs leave parameters untouched") {
    Rng rng(13);
    VaeModel init = make_vae(196, {48}, 4, Likelihood::Bernoulli, rng);
    std::vector<Tensor> before;
    for (auto* p : parameters(init)) before.push_back(*p);

    auto cfg = testutil::tiny_config();
    cfg.epochs = 0;
    TrainResult r = train_vae(cfg, testutil::tiny_digits(), init);
    auto after = parameters(r.bundle.vae());
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i]->data == before[i].data);
}

TEST_CASE("vae training improves validation elbo beyond the uniform baseline") {
    auto cfg = testutil::tiny_config();
    cfg.likelihood = Likelihood::Bernoulli;
    TrainResult r = train_vae(cfg, testutil::tiny_digits());
    REQUIRE(!r.metrics.empty());
    const double baseline_loss = 196.0 * std::log(2.0);  // -ELBO of the uniform decoder
    CHECK(r.metrics.back().val_loss < baseline_loss);
    CHECK(r.metrics.back().val_loss < r.metrics.front().val_loss);
}

TEST_CASE("fixed seeds reproduce bit-identical checkpoints") {
    testutil::TempDir tmp;
    auto cfg = testutil::tiny_config();
    cfg.epochs = 2;
    TrainResult a = train_vae(cfg, testutil::tiny_digits());
    TrainResult b = train_vae(cfg, testutil::tiny_digits());
    const auto pa = tmp.path / "a.ckpt", pb = tmp.path / "b.ckpt";
    save_checkpoint(a.bundle, pa.string());
    save_checkpoint(b.bundle, pb.string());
    CHECK(file_bytes(pa) == file_bytes(pb));
}

TEST_CASE("ae loss matches its closed forms") {
    Rng rng(17);
    AeModel m = make_ae(16, {8}, 2, rng);
    zero(m.decoder_out);  // constant 0.5 output

    Tensor half({2, 16}, std::vector<double>(32, 0.5));
    CHECK(ae_loss(m, half) == Catch::Approx(0.0).margin(1e-18));  // perfect reconstruction

    Tensor binary({2, 16});
    for (auto& v : binary.data) v = rng.below(2) ? 1.0 : 0.0;
    CHECK(ae_loss(m, binary) == Catch::Approx(0.25 * 16).epsilon(1e-12));
}

TEST_CASE("ae training reduces reconstruction loss below the 0.25P baseline") {
    TrainResult r = train_ae(testutil::tiny_config(), testutil::tiny_digits());
    REQUIRE(!r.metrics.empty());
    CHECK(r.metrics.back().val_loss < 0.25 * 196.0);
    CHECK(r.metrics.back().val_loss < r.metrics.front().val_loss);
}

TEST_CASE("classifier training reaches high held-out accuracy on the tiny corpus") {
    const auto& clf = testutil::tiny_classifier();
    const auto& ds = testutil::tiny_digits_gray();
    Dataset val = ds.slice(ds.count() - 150, 150);
    CHECK(classifier_accuracy(clf, val) > 0.9);
}

TEST_CASE("training aborts with a diagnostic on divergence") {
    auto cfg = testutil::tiny_config();
    cfg.epochs = 1;
    cfg.learning_rate = 1e160;
    CHECK_THROWS_WITH(train_vae(cfg, testutil::tiny_digits()),
                      Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("per-epoch metrics are appended to the log file") {
    testutil::TempDir tmp;
    auto cfg = testutil::tiny_config();
    cfg.epochs = 2;
    cfg.log_path = (tmp.path / "train.log").string();
    train_ae(cfg, testutil::tiny_digits());
    std::ifstream in(cfg.log_path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        CHECK(line.find(',') != std::string::npos);
        CHECK(std::count(line.begin(), line.end(), ',') == 2);
    }
    CHECK(lines == 2);
}
