#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsiege {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;  // defined as 1 when the data has no variance to explain
};

inline LineFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("linear_fit: need at least two matched points");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double denom = n * sxx - sx * sx;
    LineFit fit;
    if (std::abs(denom) < 1e-30) {  // vertical stack of points
        fit.slope = 0.0;
        fit.intercept = sy / n;
    } else {
        fit.slope = (n * sxy - sx * sy) / denom;
        fit.intercept = (sy - fit.slope * sx) / n;
    }
    const double ymean = sy / n;
    double sse = 0, sst = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double resid = ys[i] - (fit.slope * xs[i] + fit.intercept);
        sse += resid * resid;
        sst += (ys[i] - ymean) * (ys[i] - ymean);
    }
    fit.r2 = sst < 1e-30 ? 1.0 : 1.0 - sse / sst;
    return fit;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median: empty input");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {
inline std::vector<double> ranks_with_ties(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}
}  // namespace detail

/// Spearman rank correlation (tie-aware).
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("spearman: need at least two matched points");
    auto rx = detail::ranks_with_ties(xs);
    auto ry = detail::ranks_with_ties(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx < 1e-30 || vy < 1e-30) return 0.0;  // a constant series carries no rank order
    return cov / std::sqrt(vx * vy);
}

/// Two-segment piecewise-linear description of a distortion/misdirection
/// series: the descending pre-hinge line and the saturation plateau.
struct HingeEstimate {
    double breakpoint = 0.0;     // normalized distortion where the plateau begins
    double pre_slope = 0.0;      // slope of the pre-hinge segment
    double pre_r2 = 0.0;         // linearity of the pre-hinge segment
    double plateau_level = 0.0;  // mean of the plateau segment
    std::string flag = "ok";     // ok | no_saturation | plateau_only
};

/// Two-segment least-squares fit with a shared join: y = a + b*x + c*(x-k)+,
/// the breakpoint k restricted to observed x values (no continuous
/// optimization, so the result is deterministic). Slope thresholds flag series
/// that never saturate or never descend.
inline HingeEstimate detect_hinge(std::vector<double> xs, std::vector<double> ys,
                                  std::size_t min_points = 10) {
    if (xs.size() != ys.size())
        throw std::invalid_argument("detect_hinge: mismatched series lengths");
    if (xs.size() < min_points)
        throw std::invalid_argument("detect_hinge: need at least " + std::to_string(min_points) +
                                    " records, got " + std::to_string(xs.size()));
    // sort jointly by x
    std::vector<std::size_t> idx(xs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> x(xs.size()), y(ys.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        x[i] = xs[idx[i]];
        y[i] = ys[idx[i]];
    }

    const std::size_t n = x.size();
    const std::size_t min_side = 3;

    // least squares on [1, x, (x - k)+] via 3x3 normal equations
    auto hinge_sse = [&](double k, double beta[3]) {
        double A[3][3] = {};
        double r[3] = {};
        for (std::size_t i = 0; i < n; ++i) {
            const double h = std::max(0.0, x[i] - k);
            const double row[3] = {1.0, x[i], h};
            for (int a = 0; a < 3; ++a) {
                r[a] += row[a] * y[i];
                for (int b = 0; b < 3; ++b) A[a][b] += row[a] * row[b];
            }
        }
        // Gaussian elimination with partial pivoting
        int piv[3] = {0, 1, 2};
        for (int col = 0; col < 3; ++col) {
            int best = col;
            for (int rr = col + 1; rr < 3; ++rr)
                if (std::abs(A[piv[rr]][col]) > std::abs(A[piv[best]][col])) best = rr;
            std::swap(piv[col], piv[best]);
            if (std::abs(A[piv[col]][col]) < 1e-12) return std::numeric_limits<double>::infinity();
            for (int rr = col + 1; rr < 3; ++rr) {
                const double f = A[piv[rr]][col] / A[piv[col]][col];
                for (int cc = col; cc < 3; ++cc) A[piv[rr]][cc] -= f * A[piv[col]][cc];
                r[piv[rr]] -= f * r[piv[col]];
            }
        }
        for (int col = 2; col >= 0; --col) {
            double acc = r[piv[col]];
            for (int cc = col + 1; cc < 3; ++cc) acc -= A[piv[col]][cc] * beta[cc];
            beta[col] = acc / A[piv[col]][col];
        }
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double fit = beta[0] + beta[1] * x[i] + beta[2] * std::max(0.0, x[i] - k);
            sse += (y[i] - fit) * (y[i] - fit);
        }
        return sse;
    };

    std::size_t best_i = min_side - 1;
    double best_sse = std::numeric_limits<double>::infinity();
    double best_beta[3] = {};
    for (std::size_t i = min_side - 1; i + min_side < n; ++i) {
        double beta[3];
        const double sse = hinge_sse(x[i], beta);
        if (sse < best_sse - 1e-12 || (sse <= best_sse + 1e-12 && i > best_i)) {
            best_sse = sse;
            best_i = i;
            std::copy(beta, beta + 3, best_beta);
        }
    }

    HingeEstimate est;
    est.breakpoint = x[best_i];
    est.pre_slope = best_beta[1];
    const double post_slope = best_beta[1] + best_beta[2];

    // pre-hinge linearity over the points left of the join
    std::vector<double> lx, ly, ry;
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] <= est.breakpoint) {
            lx.push_back(x[i]);
            ly.push_back(y[i]);
        } else {
            ry.push_back(y[i]);
        }
    }
    est.pre_r2 = lx.size() >= 2 ? linear_fit(lx, ly).r2 : 1.0;
    est.plateau_level = 0.0;
    for (double v : ry) est.plateau_level += v;
    if (!ry.empty()) est.plateau_level /= static_cast<double>(ry.size());

    // slope thresholds in normalized units (both axes live in ~[0,1])
    if (post_slope < -0.25)
        est.flag = "no_saturation";
    else if (est.pre_slope > -0.05)
        est.flag = "plateau_only";
    return est;
}

}  // namespace lsiege
