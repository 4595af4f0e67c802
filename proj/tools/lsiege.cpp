// Command-line laboratory: trains the models, mounts the attacks, runs the
// regularization sweeps, and renders reports from their CSV output.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "lsiege/attack.hpp"
#include "lsiege/checkpoint.hpp"
#include "lsiege/data.hpp"
#include "lsiege/harness.hpp"
#include "lsiege/models.hpp"
#include "lsiege/report.hpp"
#include "lsiege/synth.hpp"
#include "lsiege/train.hpp"

namespace fs = std::filesystem;
using namespace lsiege;

namespace {

struct DataOptions {
    std::string dataset = "mnist";  // mnist | svhn | synth | synth-svhn
    std::string data_dir = "data";
    std::string split = "test";  // train | test
    std::size_t synth_count = 10000;
    std::uint64_t synth_seed = 2024;
};

Dataset load_dataset(const DataOptions& opt) {
    if (opt.dataset == "mnist") {
        const fs::path dir = fs::path(opt.data_dir) / "mnist";
        const std::string img =
            opt.split == "train" ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
        const std::string lab =
            opt.split == "train" ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
        return load_mnist_idx((dir / img).string(), (dir / lab).string());
    }
    if (opt.dataset == "svhn") {
        const fs::path dir = fs::path(opt.data_dir) / "svhn";
        const std::string file = opt.split == "train" ? "train.svhnraw" : "test.svhnraw";
        return load_svhn((dir / file).string());
    }
    if (opt.dataset == "synth") {
        const std::uint64_t seed = derive_seed(opt.synth_seed, opt.split == "train" ? 1 : 2);
        return synth_digits(opt.synth_count, seed, 28);
    }
    if (opt.dataset == "synth-svhn") {
        const std::uint64_t seed = derive_seed(opt.synth_seed, opt.split == "train" ? 3 : 4);
        return synth_color_digits(opt.synth_count, seed, 32);
    }
    throw std::invalid_argument("unknown dataset '" + opt.dataset + "'");
}

bool color_dataset(const std::string& name) { return name == "svhn" || name == "synth-svhn"; }

void add_data_flags(CLI::App* cmd, DataOptions& opt) {
    cmd->add_option("--dataset", opt.dataset, "mnist | svhn | synth | synth-svhn")
        ->default_val(opt.dataset);
    cmd->add_option("--data-dir", opt.data_dir, "dataset root directory")->default_val(opt.data_dir);
    cmd->add_option("--split", opt.split, "train | test")->default_val(opt.split);
    cmd->add_option("--synth-n", opt.synth_count, "image count for generated corpora")
        ->default_val(opt.synth_count);
    cmd->add_option("--synth-seed", opt.synth_seed, "seed for generated corpora")
        ->default_val(opt.synth_seed);
}

void write_image(const fs::path& path, const Tensor& img, std::size_t w, std::size_t h,
                 std::size_t c) {
    write_pnm(path, image_bytes(img), w, h, c);
}

int run_train(const std::string& model_kind, DataOptions data_opt, TrainConfig cfg,
              const std::string& out_path, bool binarize_flag) {
    data_opt.split = "train";
    Dataset ds = load_dataset(data_opt);
    const bool color = color_dataset(data_opt.dataset);
    if (binarize_flag) ds = binarize(ds);
    cfg.dataset_id = data_opt.dataset;

    TrainResult result;
    if (model_kind == "vae") {
        cfg.likelihood = color ? Likelihood::Gaussian : Likelihood::Bernoulli;
        result = train_vae(cfg, ds);
    } else if (model_kind == "ae") {
        result = train_ae(cfg, ds);
    } else if (model_kind == "clf") {
        result = train_classifier(cfg, ds);
        Dataset val = ds.slice(ds.count() - cfg.val_count, cfg.val_count);
        std::printf("held-out accuracy: %.4f\n", classifier_accuracy(result.bundle.clf(), val));
    } else {
        throw std::invalid_argument("unknown model kind '" + model_kind + "'");
    }

    for (const auto& m : result.metrics)
        std::printf("epoch %d: train_loss %.6f val_loss %.6f\n", m.epoch, m.train_loss, m.val_loss);
    save_checkpoint(result.bundle, out_path);
    std::printf("checkpoint written to %s\n", out_path.c_str());
    return 0;
}

int run_attack_cmd(const std::string& ckpt_path, DataOptions data_opt, std::size_t original,
                   std::size_t target, AttackConfig cfg, const std::string& out_dir) {
    ModelBundle bundle = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data_opt);
    const bool color = color_dataset(data_opt.dataset);
    const bool needs_binary =
        bundle.kind() == "vae" && bundle.vae().likelihood == Likelihood::Bernoulli;
    if ((needs_binary || bundle.kind() == "ae") && !color) ds = binarize(ds);
    if (original >= ds.count()) throw std::invalid_argument("--original index out of range");

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    const std::size_t w = ds.meta.width, h = ds.meta.height, c = ds.meta.channels;

    nlohmann::json meta;
    meta["checkpoint"] = ckpt_path;
    meta["dataset"] = data_opt.dataset;
    meta["split"] = data_opt.split;
    meta["original"] = original;
    meta["c"] = cfg.c;
    meta["iterations"] = cfg.iterations;
    meta["learning_rate"] = cfg.learning_rate;
    meta["delta"] = delta_name(cfg.delta);
    meta["seed"] = cfg.seed;
    meta["bounds"] = {cfg.lower, cfg.upper};

    AttackResult res;
    Tensor x_orig = ds.image(original);
    if (bundle.kind() == "clf") {
        const int adv_class = static_cast<int>(target);
        res = classifier_attack(bundle.clf(), x_orig, adv_class, cfg);
        meta["adversarial_class"] = adv_class;
        meta["original_class"] = res.original_class;
        meta["p_adv"] = res.p_adv;
        meta["p_orig"] = res.p_orig;
        meta["logit_adv"] = res.logit_adv;
        meta["logit_orig"] = res.logit_orig;
    } else {
        if (target >= ds.count()) throw std::invalid_argument("--target index out of range");
        Tensor x_target = ds.image(target);
        meta["target"] = target;
        Tensor recon_adv, recon_target;
        if (bundle.kind() == "vae") {
            const VaeModel& vae = bundle.vae();
            res = cfg.delta == DeltaKind::OutputL2 ? output_attack(vae, x_orig, x_target, cfg)
                                                   : latent_attack(vae, x_orig, x_target, cfg);
            Rng rng(derive_seed(cfg.seed, 0x7265ULL));
            ReconstructionStats stats = reconstruct_average(vae, res.adversarial, 100, rng, x_target);
            meta["mean_recon_dist_to_target"] = stats.mean_distance;
            recon_adv = decode(vae, encode(vae, res.adversarial).mean);
            recon_target = decode(vae, encode(vae, x_target).mean);
        } else {
            const AeModel& ae = bundle.ae();
            res = cfg.delta == DeltaKind::OutputL2 ? output_attack(ae, x_orig, x_target, cfg)
                                                   : latent_attack(ae, x_orig, x_target, cfg);
            recon_adv = ae_decode(ae, ae_encode(ae, res.adversarial));
            recon_target = ae_decode(ae, ae_encode(ae, x_target));
        }
        write_image(out / (c == 1 ? "target.pgm" : "target.ppm"), x_target, w, h, c);
        write_pnm(out / (c == 1 ? "recon_adversarial.pgm" : "recon_adversarial.ppm"),
                  image_bytes(recon_adv), w, h, c);
        write_pnm(out / (c == 1 ? "recon_target.pgm" : "recon_target.ppm"),
                  image_bytes(recon_target), w, h, c);
        meta["norm_distortion"] = normalize_distortion(res.distortion, x_orig, x_target);
    }

    meta["raw_distortion"] = res.raw_distortion;
    meta["converged"] = res.converged;
    meta["objective_initial"] = res.objective_trace.front();
    meta["objective_final"] = res.objective_trace.back();

    write_image(out / (c == 1 ? "original.pgm" : "original.ppm"), x_orig, w, h, c);
    write_image(out / (c == 1 ? "adversarial.pgm" : "adversarial.ppm"), res.adversarial, w, h, c);
    write_pnm(out / (c == 1 ? "distortion.pgm" : "distortion.ppm"),
              distortion_bytes(res.distortion), w, h, c);

    {
        std::ofstream trace(out / "trace.csv");
        trace << "iteration,objective\n";
        for (std::size_t i = 0; i < res.objective_trace.size(); ++i)
            trace << i << ',' << fmt17(res.objective_trace[i]) << '\n';
    }
    {
        std::ofstream mf(out / "result.json");
        mf << meta.dump(2) << '\n';
    }
    std::printf("attack complete: raw distortion %.6f, objective %.6f -> %.6f%s\n",
                res.raw_distortion, res.objective_trace.front(), res.objective_trace.back(),
                res.converged ? "" : " (non-converged)");
    return 0;
}

int run_sweep_cmd(const std::string& ckpt_path, DataOptions data_opt, std::size_t pairs_n,
                  const std::string& grid, std::uint64_t seed, const std::string& out_dir,
                  AttackConfig attack_template, unsigned threads, std::size_t recon_samples) {
    ModelBundle bundle = load_checkpoint(ckpt_path);
    if (bundle.kind() == "clf")
        throw std::invalid_argument("sweep: checkpoint holds a classifier; use clf-sweep");
    Dataset ds = load_dataset(data_opt);
    if (!color_dataset(data_opt.dataset)) ds = binarize(ds);

    const std::size_t grid_n = grid == "desk" ? 20 : 100;
    if (pairs_n == 0) pairs_n = grid == "desk" ? 5 : 25;

    SweepConfig cfg;
    cfg.c_values = c_grid(GridKind::Autoencoder, grid_n);
    cfg.attack = attack_template;
    cfg.seed = seed;
    cfg.recon_samples = recon_samples;
    cfg.threads = threads;

    auto pairs = sample_pairs(ds, pairs_n, seed);
    SweepTable table = bundle.kind() == "vae" ? run_autoencoder_sweep(bundle.vae(), ds, pairs, cfg)
                                              : run_autoencoder_sweep(bundle.ae(), ds, pairs, cfg);
    table.metadata.emplace_back("checkpoint", ckpt_path);
    table.metadata.emplace_back("dataset", data_opt.dataset);
    table.metadata.emplace_back("split", data_opt.split);
    table.metadata.emplace_back("pairs", std::to_string(pairs_n));
    table.metadata.emplace_back("grid", grid);
    table.metadata.emplace_back("seed", std::to_string(seed));
    table.metadata.emplace_back("iterations", std::to_string(attack_template.iterations));
    table.metadata.emplace_back("learning_rate", fmt17(attack_template.learning_rate));
    emit_reports(&table, nullptr, out_dir);
    std::printf("sweep complete: %zu records -> %s\n", table.records.size(), out_dir.c_str());
    return 0;
}

int run_clf_sweep_cmd(const std::string& ckpt_path, DataOptions data_opt, std::size_t pairs_n,
                      const std::string& grid, std::uint64_t seed, const std::string& out_dir,
                      AttackConfig attack_template, unsigned threads) {
    ModelBundle bundle = load_checkpoint(ckpt_path);
    if (bundle.kind() != "clf")
        throw std::invalid_argument("clf-sweep: checkpoint does not hold a classifier");
    Dataset ds = load_dataset(data_opt);

    const std::size_t grid_n = grid == "desk" ? 20 : 100;
    if (pairs_n == 0) pairs_n = grid == "desk" ? 5 : 25;

    SweepConfig cfg;
    cfg.c_values = c_grid(GridKind::Classifier, grid_n);
    cfg.attack = attack_template;
    cfg.seed = seed;
    cfg.threads = threads;

    auto pairs = sample_classifier_pairs(bundle.clf(), ds, pairs_n, seed);
    ClassifierSweepTable table = run_classifier_sweep(bundle.clf(), ds, pairs, cfg);
    table.metadata.emplace_back("checkpoint", ckpt_path);
    table.metadata.emplace_back("dataset", data_opt.dataset);
    table.metadata.emplace_back("split", data_opt.split);
    table.metadata.emplace_back("pairs", std::to_string(pairs_n));
    table.metadata.emplace_back("grid", grid);
    table.metadata.emplace_back("seed", std::to_string(seed));
    emit_reports(nullptr, &table, out_dir);
    std::size_t crossings = 0;
    for (const auto& s : table.summaries)
        if (s.crossed) ++crossings;
    std::printf("classifier sweep complete: %zu records, %zu/%zu pairs cross -> %s\n",
                table.records.size(), crossings, table.summaries.size(), out_dir.c_str());
    return 0;
}

int run_report_cmd(const std::string& in_dir, const std::string& out_dir) {
    const fs::path in(in_dir);
    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    bool any = false;

    if (fs::exists(in / "sweep.csv")) {
        any = true;
        auto records = read_sweep_csv(in / "sweep.csv");
        SweepSummary summary = summarize_sweep(records);
        write_hinges_csv(summary.hinges, out / "hinges.csv");
        std::ofstream sf(out / "summary.txt");
        write_sweep_summary(summary, sf);
        std::printf("sweep summary: median hinge %.4f, %zu pairs\n", summary.median_hinge,
                    summary.hinges.size());
    }
    if (fs::exists(in / "classifier_sweep.csv")) {
        any = true;
        auto records = read_classifier_csv(in / "classifier_sweep.csv");
        std::vector<int> experiments;
        for (const auto& r : records)
            if (experiments.empty() || experiments.back() != r.experiment)
                experiments.push_back(r.experiment);
        std::ofstream sf(out / "classifier_summary.txt");
        for (int exp_id : experiments) {
            std::vector<const ClassifierSweepRecord*> recs;
            for (const auto& r : records)
                if (r.experiment == exp_id) recs.push_back(&r);
            WindowFit fit = classifier_window_fit(recs);
            sf << "pair " << exp_id << ": logit R^2 " << fmt17(fit.logit_r2) << " prob R^2 "
               << fmt17(fit.prob_r2) << " over " << fit.points << " points\n";
        }
        std::printf("classifier summary written\n");
    }
    if (!any)
        throw std::invalid_argument("report: no sweep.csv or classifier_sweep.csv under " + in_dir);
    return 0;
}

int run_synth_cmd(const std::string& dataset, std::size_t n, std::uint64_t seed,
                  const std::string& out_dir, const std::string& split) {
    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    if (dataset == "mnist" || dataset == "synth") {
        const std::uint64_t s = derive_seed(seed, split == "train" ? 1 : 2);
        const std::string img =
            split == "train" ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
        const std::string lab =
            split == "train" ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
        synth_digits_idx((out / img).string(), (out / lab).string(), n, s, 28);
        std::printf("wrote %zu images to %s\n", n, (out / img).string().c_str());
        return 0;
    }
    if (dataset == "svhn" || dataset == "synth-svhn") {
        const std::uint64_t s = derive_seed(seed, split == "train" ? 3 : 4);
        const std::string file = split == "train" ? "train.svhnraw" : "test.svhnraw";
        synth_color_digits_raw((out / file).string(), n, s, 32);
        std::printf("wrote %zu images to %s\n", n, (out / file).string().c_str());
        return 0;
    }
    throw std::invalid_argument("synth: unknown dataset '" + dataset + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-space adversarial laboratory"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    std::string model_kind = "vae";
    DataOptions train_data;
    TrainConfig train_cfg;
    std::string train_out = "model.ckpt";
    bool binarize_flag = true;
    train->add_option("--model", model_kind, "vae | ae | clf")->required();
    add_data_flags(train, train_data);
    train->add_option("--latent", train_cfg.latent, "latent dimension")->default_val(20);
    train->add_option("--epochs", train_cfg.epochs, "training epochs");
    train->add_option("--batch", train_cfg.batch_size, "batch size")->default_val(100);
    train->add_option("--lr", train_cfg.learning_rate, "learning rate")->default_val(1e-3);
    train->add_option("--seed", train_cfg.seed, "training seed")->default_val(1);
    train->add_option("--hidden", train_cfg.hidden, "hidden layer widths");
    train->add_option("--val", train_cfg.val_count, "held-out image count")->default_val(500);
    train->add_option("--log", train_cfg.log_path, "per-epoch metrics log path");
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_flag("--binarize,!--no-binarize", binarize_flag,
                    "threshold pixels at 0.5 before training");

    // attack
    auto* attack = app.add_subcommand("attack", "run one adversarial attack");
    std::string atk_ckpt;
    DataOptions atk_data;
    std::size_t atk_original = 0, atk_target = 0;
    AttackConfig atk_cfg;
    std::string atk_delta = "kl", atk_out = "attack_out";
    attack->add_option("--checkpoint", atk_ckpt, "model checkpoint")->required();
    add_data_flags(attack, atk_data);
    attack->add_option("--original", atk_original, "original image index")->required();
    attack
        ->add_option("--target", atk_target,
                     "target image index (adversarial class for classifiers)")
        ->required();
    attack->add_option("--c", atk_cfg.c, "regularization constant")->required();
    attack->add_option("--delta", atk_delta, "kl | l2 | output")->default_val("kl");
    attack->add_option("--iters", atk_cfg.iterations, "attack iterations")->default_val(500);
    attack->add_option("--lr", atk_cfg.learning_rate, "attack learning rate")->default_val(1e-2);
    attack->add_option("--seed", atk_cfg.seed, "attack seed")->default_val(0);
    attack->add_option("--out", atk_out, "output directory")->required();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "autoencoder sweep over the C grid");
    std::string sweep_ckpt, sweep_grid = "full", sweep_out = "sweep_out";
    DataOptions sweep_data;
    std::size_t sweep_pairs = 0;
    std::uint64_t sweep_seed = 1;
    AttackConfig sweep_attack;
    unsigned sweep_threads = 0;
    std::size_t sweep_recon = 100;
    sweep->add_option("--checkpoint", sweep_ckpt, "vae or ae checkpoint")->required();
    add_data_flags(sweep, sweep_data);
    sweep->add_option("--pairs", sweep_pairs, "pair count (default 25 full / 5 desk)");
    sweep->add_option("--grid", sweep_grid, "full (100 C) | desk (20 C)")->default_val("full");
    sweep->add_option("--seed", sweep_seed, "sweep seed")->default_val(1);
    sweep->add_option("--iters", sweep_attack.iterations, "attack iterations")->default_val(500);
    sweep->add_option("--lr", sweep_attack.learning_rate, "attack learning rate")->default_val(1e-2);
    sweep->add_option("--recon", sweep_recon, "posterior samples per distance")->default_val(100);
    sweep->add_option("--threads", sweep_threads, "worker threads (0 = hardware)")->default_val(0);
    sweep->add_option("--out", sweep_out, "output directory")->required();

    // clf-sweep
    auto* clf_sweep = app.add_subcommand("clf-sweep", "classifier sweep over the C grid");
    std::string cs_ckpt, cs_grid = "full", cs_out = "clf_sweep_out";
    DataOptions cs_data;
    std::size_t cs_pairs = 0;
    std::uint64_t cs_seed = 1;
    AttackConfig cs_attack;
    unsigned cs_threads = 0;
    clf_sweep->add_option("--checkpoint", cs_ckpt, "classifier checkpoint")->required();
    add_data_flags(clf_sweep, cs_data);
    clf_sweep->add_option("--pairs", cs_pairs, "pair count (default 25 full / 5 desk)");
    clf_sweep->add_option("--grid", cs_grid, "full (100 C) | desk (20 C)")->default_val("full");
    clf_sweep->add_option("--seed", cs_seed, "sweep seed")->default_val(1);
    clf_sweep->add_option("--iters", cs_attack.iterations, "attack iterations")->default_val(500);
    clf_sweep->add_option("--lr", cs_attack.learning_rate, "attack learning rate")
        ->default_val(1e-2);
    clf_sweep->add_option("--threads", cs_threads, "worker threads (0 = hardware)")->default_val(0);
    clf_sweep->add_option("--out", cs_out, "output directory")->required();

    // report
    auto* report = app.add_subcommand("report", "derive hinge/crossing analysis from sweep CSVs");
    std::string rep_in, rep_out;
    report->add_option("--in", rep_in, "directory holding sweep CSVs")->required();
    report->add_option("--out", rep_out, "output directory")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "write a generated dataset to disk");
    std::string sy_dataset = "mnist", sy_out = "data/mnist", sy_split = "train";
    std::size_t sy_n = 10000;
    std::uint64_t sy_seed = 2024;
    synth->add_option("--dataset", sy_dataset, "mnist | svhn")->default_val("mnist");
    synth->add_option("--n", sy_n, "image count")->default_val(10000);
    synth->add_option("--seed", sy_seed, "corpus seed")->default_val(2024);
    synth->add_option("--split", sy_split, "train | test")->default_val("train");
    synth->add_option("--out", sy_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (*train) {
            if (!train->count("--epochs")) train_cfg.epochs = model_kind == "clf" ? 10 : 30;
            if (!train->count("--hidden")) {
                const bool color = color_dataset(train_data.dataset);
                if (model_kind == "clf")
                    train_cfg.hidden = {256};
                else
                    train_cfg.hidden = {color ? std::size_t(1024) : std::size_t(400)};
                if (!train->count("--latent") && color) train_cfg.latent = 100;
            }
            if (!train->count("--binarize") && !train->count("--no-binarize"))
                binarize_flag = model_kind != "clf" && !color_dataset(train_data.dataset);
            return run_train(model_kind, train_data, train_cfg, train_out, binarize_flag);
        }
        if (*attack) {
            atk_cfg.delta = delta_from_name(atk_delta);
            return run_attack_cmd(atk_ckpt, atk_data, atk_original, atk_target, atk_cfg, atk_out);
        }
        if (*sweep)
            return run_sweep_cmd(sweep_ckpt, sweep_data, sweep_pairs, sweep_grid, sweep_seed,
                                 sweep_out, sweep_attack, sweep_threads, sweep_recon);
        if (*clf_sweep)
            return run_clf_sweep_cmd(cs_ckpt, cs_data, cs_pairs, cs_grid, cs_seed, cs_out, cs_attack,
                                     cs_threads);
        if (*report) return run_report_cmd(rep_in, rep_out);
        if (*synth) return run_synth_cmd(sy_dataset, sy_n, sy_seed, sy_out, sy_split);
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
