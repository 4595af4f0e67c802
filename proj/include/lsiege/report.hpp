#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "harness.hpp"
#include "stats.hpp"
#include "tensor.hpp"

namespace lsiege {

/// Shortest text that round-trips an IEEE double (17 significant digits).
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw std::runtime_error("report: cannot write " + path.string());
    return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

constexpr const char* kSweepCsvHeader =
    "experiment,C,raw_distortion,norm_distortion,raw_adv_target,norm_adv_target,converged";
constexpr const char* kClassifierCsvHeader =
    "experiment,C,raw_distortion,centered_distortion,p_adv,p_orig,logit_adv,logit_orig";
constexpr const char* kHingesCsvHeader =
    "experiment,breakpoint,pre_slope,pre_r2,plateau_level,flag";

inline void write_sweep_csv(const SweepTable& table, const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << kSweepCsvHeader << '\n';
    for (const auto& r : table.records)
        out << r.experiment << ',' << fmt17(r.c) << ',' << fmt17(r.raw_distortion) << ','
            << fmt17(r.norm_distortion) << ',' << fmt17(r.raw_adv_target) << ','
            << fmt17(r.norm_adv_target) << ',' << (r.converged ? 1 : 0) << '\n';
}

inline std::vector<SweepRecord> read_sweep_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kSweepCsvHeader)
        throw std::runtime_error("report: unexpected sweep.csv header in " + path.string());
    std::vector<SweepRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 7) throw std::runtime_error("report: malformed sweep.csv row: " + line);
        SweepRecord r;
        r.experiment = std::stoi(f[0]);
        r.c = std::stod(f[1]);
        r.raw_distortion = std::stod(f[2]);
        r.norm_distortion = std::stod(f[3]);
        r.raw_adv_target = std::stod(f[4]);
        r.norm_adv_target = std::stod(f[5]);
        r.converged = f[6] == "1";
        r.degenerate = std::isnan(r.norm_adv_target);
        records.push_back(r);
    }
    return records;
}

inline void write_classifier_csv(const ClassifierSweepTable& table,
                                 const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << kClassifierCsvHeader << '\n';
    for (const auto& r : table.records)
        out << r.experiment << ',' << fmt17(r.c) << ',' << fmt17(r.raw_distortion) << ','
            << fmt17(r.centered_distortion) << ',' << fmt17(r.p_adv) << ',' << fmt17(r.p_orig)
            << ',' << fmt17(r.logit_adv) << ',' << fmt17(r.logit_orig) << '\n';
}

inline std::vector<ClassifierSweepRecord> read_classifier_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("report: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kClassifierCsvHeader)
        throw std::runtime_error("report: unexpected classifier_sweep.csv header in " +
                                 path.string());
    std::vector<ClassifierSweepRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv_line(line);
        if (f.size() != 8)
            throw std::runtime_error("report: malformed classifier_sweep.csv row: " + line);
        ClassifierSweepRecord r;
        r.experiment = std::stoi(f[0]);
        r.c = std::stod(f[1]);
        r.raw_distortion = std::stod(f[2]);
        r.centered_distortion = std::stod(f[3]);
        r.p_adv = std::stod(f[4]);
        r.p_orig = std::stod(f[5]);
        r.logit_adv = std::stod(f[6]);
        r.logit_orig = std::stod(f[7]);
        records.push_back(r);
    }
    return records;
}

/// Hinge fits per experiment over the non-degenerate records; series with too
/// few points are emitted with the `insufficient_points` flag.
inline std::vector<std::pair<int, HingeEstimate>> hinge_rows(const std::vector<SweepRecord>& records,
                                                             std::size_t min_points = 10) {
    std::vector<int> experiments;
    for (const auto& r : records)
        if (experiments.empty() || experiments.back() != r.experiment)
            experiments.push_back(r.experiment);
    std::vector<std::pair<int, HingeEstimate>> rows;
    for (int exp_id : experiments) {
        std::vector<double> xs, ys;
        for (const auto& r : records)
            if (r.experiment == exp_id && !r.degenerate && !std::isnan(r.norm_adv_target)) {
                xs.push_back(r.norm_distortion);
                ys.push_back(r.norm_adv_target);
            }
        HingeEstimate est;
        if (xs.size() < min_points) {
            est.flag = "insufficient_points";
        } else {
            est = detect_hinge(xs, ys, min_points);
        }
        rows.emplace_back(exp_id, est);
    }
    return rows;
}

inline void write_hinges_csv(const std::vector<std::pair<int, HingeEstimate>>& rows,
                             const std::filesystem::path& path) {
    auto out = detail::open_out(path);
    out << kHingesCsvHeader << '\n';
    for (const auto& [exp_id, est] : rows)
        out << exp_id << ',' << fmt17(est.breakpoint) << ',' << fmt17(est.pre_slope) << ','
            << fmt17(est.pre_r2) << ',' << fmt17(est.plateau_level) << ',' << est.flag << '\n';
}

// ---------------------------------------------------------------------------
// portable graymap / pixmap emission
// ---------------------------------------------------------------------------

inline unsigned char to_byte(double v) {
    return static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
}

inline void write_pnm(const std::filesystem::path& path, const std::vector<unsigned char>& bytes,
                      std::size_t width, std::size_t height, std::size_t channels) {
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("write_pnm: only 1 or 3 channels supported");
    if (bytes.size() != width * height * channels)
        throw std::invalid_argument("write_pnm: payload size mismatch");
    auto out = detail::open_out(path, true);
    out << (channels == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << '\n' << "255\n";
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("report: write failed for " + path.string());
}

inline std::vector<unsigned char> image_bytes(const Tensor& image) {
    std::vector<unsigned char> bytes(image.numel());
    for (std::size_t i = 0; i < image.numel(); ++i) bytes[i] = to_byte(image.data[i]);
    return bytes;
}

/// Signed distortion rendered around mid-gray, amplified for visibility.
inline std::vector<unsigned char> distortion_bytes(const Tensor& d, double gain = 5.0) {
    std::vector<unsigned char> bytes(d.numel());
    for (std::size_t i = 0; i < d.numel(); ++i) bytes[i] = to_byte(0.5 + gain * d.data[i]);
    return bytes;
}

/// Horizontal strip of same-sized images.
inline std::vector<unsigned char> hstack_bytes(const std::vector<std::vector<unsigned char>>& imgs,
                                               std::size_t width, std::size_t height,
                                               std::size_t channels) {
    const std::size_t row_bytes = width * channels;
    std::vector<unsigned char> out(imgs.size() * width * height * channels);
    const std::size_t total_row = imgs.size() * row_bytes;
    for (std::size_t k = 0; k < imgs.size(); ++k) {
        if (imgs[k].size() != width * height * channels)
            throw std::invalid_argument("hstack_bytes: image size mismatch");
        for (std::size_t y = 0; y < height; ++y)
            std::copy(imgs[k].begin() + y * row_bytes, imgs[k].begin() + (y + 1) * row_bytes,
                      out.begin() + y * total_row + k * row_bytes);
    }
    return out;
}

inline void write_metadata_json(const std::vector<std::pair<std::string, std::string>>& metadata,
                                const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : metadata) j[k] = v;
    auto out = detail::open_out(path);
    out << j.dump(2) << '\n';
}

/// Writes everything a sweep produced: sweep.csv / classifier_sweep.csv,
/// hinges.csv, per-pair exemplar image strips, and meta.json.
inline void emit_reports(const SweepTable* sweep, const ClassifierSweepTable* clf,
                         const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    if (sweep) {
        write_sweep_csv(*sweep, out_dir / "sweep.csv");
        write_hinges_csv(hinge_rows(sweep->records), out_dir / "hinges.csv");
        for (const auto& ex : sweep->exemplars) {
            const auto strip = hstack_bytes(
                {image_bytes(ex.original), distortion_bytes(ex.distortion),
                 image_bytes(ex.adversarial), image_bytes(ex.recon_adversarial),
                 image_bytes(ex.recon_target), image_bytes(ex.target)},
                sweep->width, sweep->height, sweep->channels);
            char name[64];
            std::snprintf(name, sizeof name, "pair_%02d_grid.%s", ex.experiment,
                          sweep->channels == 1 ? "pgm" : "ppm");
            write_pnm(out_dir / name, strip, sweep->width * 6, sweep->height, sweep->channels);
        }
        if (!sweep->metadata.empty()) write_metadata_json(sweep->metadata, out_dir / "meta.json");
    }
    if (clf) {
        write_classifier_csv(*clf, out_dir / "classifier_sweep.csv");
        if (!clf->metadata.empty())
            write_metadata_json(clf->metadata, out_dir / "clf_meta.json");
    }
}

// ---------------------------------------------------------------------------
// derived summaries (the analysis behind the plots)
// ---------------------------------------------------------------------------

struct SweepSummary {
    std::vector<std::pair<int, HingeEstimate>> hinges;
    std::vector<std::pair<int, double>> spearman_per_pair;  // raw ||d|| vs C
    double median_hinge = 0.0;
    double frac_hinge_below_one = 0.0;
    double frac_pre_r2_above = 0.0;  // share of pairs with pre-hinge R^2 >= 0.9
};

inline SweepSummary summarize_sweep(const std::vector<SweepRecord>& records) {
    SweepSummary s;
    s.hinges = hinge_rows(records);
    std::vector<int> experiments;
    for (const auto& r : records)
        if (experiments.empty() || experiments.back() != r.experiment)
            experiments.push_back(r.experiment);
    for (int exp_id : experiments) {
        std::vector<double> cs, ds;
        for (const auto& r : records)
            if (r.experiment == exp_id) {
                cs.push_back(r.c);
                ds.push_back(r.raw_distortion);
            }
        s.spearman_per_pair.emplace_back(exp_id, spearman(cs, ds));
    }
    std::vector<double> breakpoints;
    std::size_t usable = 0, below_one = 0, linear = 0;
    for (const auto& [exp_id, est] : s.hinges) {
        if (est.flag == "insufficient_points") continue;
        ++usable;
        breakpoints.push_back(est.breakpoint);
        if (est.breakpoint < 1.0) ++below_one;
        if (est.pre_r2 >= 0.9) ++linear;
    }
    if (!breakpoints.empty()) s.median_hinge = median(breakpoints);
    if (usable > 0) {
        s.frac_hinge_below_one = static_cast<double>(below_one) / static_cast<double>(usable);
        s.frac_pre_r2_above = static_cast<double>(linear) / static_cast<double>(usable);
    }
    return s;
}

inline void write_sweep_summary(const SweepSummary& s, std::ostream& out) {
    out << "pairs: " << s.hinges.size() << '\n';
    out << "median hinge breakpoint: " << fmt17(s.median_hinge) << '\n';
    out << "fraction hinge < 1.0: " << fmt17(s.frac_hinge_below_one) << '\n';
    out << "fraction pre-hinge R^2 >= 0.9: " << fmt17(s.frac_pre_r2_above) << '\n';
    for (const auto& [exp_id, rho] : s.spearman_per_pair)
        out << "spearman(C, raw distortion) pair " << exp_id << ": " << fmt17(rho) << '\n';
    for (const auto& [exp_id, est] : s.hinges)
        out << "hinge pair " << exp_id << ": breakpoint " << fmt17(est.breakpoint) << " slope "
            << fmt17(est.pre_slope) << " R^2 " << fmt17(est.pre_r2) << " plateau "
            << fmt17(est.plateau_level) << " [" << est.flag << "]\n";
}

}  // namespace lsiege
