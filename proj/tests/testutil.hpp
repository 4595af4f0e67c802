#pragma once

#include <filesystem>
#include <unistd.h>

#include "lsiege/synth.hpp"
#include "lsiege/train.hpp"

namespace testutil {

// Desk-scale fixtures shared across test binaries: 12x12 synthetic digits and
// small models trained just enough to have usable structure. Built once per
// process.

inline const lsiege::Dataset& tiny_digits() {
    static const lsiege::Dataset ds = lsiege::binarize(lsiege::synth_digits(1000, 2024, 14));
    return ds;
}

inline const lsiege::Dataset& tiny_digits_gray() {
    static const lsiege::Dataset ds = lsiege::synth_digits(1000, 2024, 14);
    return ds;
}

inline lsiege::TrainConfig tiny_config() {
    lsiege::TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 50;
    cfg.latent = 4;
    cfg.hidden = {48};
    cfg.val_count = 150;
    cfg.seed = 7;
    return cfg;
}

inline const lsiege::VaeModel& tiny_vae() {
    static const lsiege::VaeModel m = [] {
        auto cfg = tiny_config();
        cfg.likelihood = lsiege::Likelihood::Bernoulli;
        return lsiege::train_vae(cfg, tiny_digits()).bundle.vae();
    }();
    return m;
}

inline const lsiege::AeModel& tiny_ae() {
    static const lsiege::AeModel m = [] {
        return lsiege::train_ae(tiny_config(), tiny_digits()).bundle.ae();
    }();
    return m;
}

inline const lsiege::ClassifierModel& tiny_classifier() {
    static const lsiege::ClassifierModel m = [] {
        auto cfg = tiny_config();
        cfg.epochs = 16;
        return lsiege::train_classifier(cfg, tiny_digits_gray()).bundle.clf();
    }();
    return m;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("lsiege_t_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace testutil
