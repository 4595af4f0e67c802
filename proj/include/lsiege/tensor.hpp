#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsiege {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

/// Dense row-major tensor of 64-bit floats.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(shape_numel(shape), fill) {
        for (auto d : shape)
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension in " + shape_str(shape));
    }

    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (shape_numel(shape) != data.size())
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match " +
                                        std::to_string(data.size()) + " values");
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), 1.0); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
    static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }
    static Tensor row(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    bool is_scalar() const { return numel() == 1; }
    double scalar_value() const {
        if (!is_scalar()) throw std::invalid_argument("Tensor: scalar_value on shape " + shape_str(shape));
        return data[0];
    }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // 2-d access, no bounds check on indices
    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
}

inline void require_rank(const char* op, const Tensor& a, std::size_t r) {
    if (a.rank() != r)
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(r) +
                                    ", got shape " + shape_str(a.shape));
}

/// C = A * B for A [n,k], B [k,m].
inline Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    if (a.shape[1] != b.shape[0])
        throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
    const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
    Tensor out({n, m});
    const double* A = a.data.data();
    const double* B = b.data.data();
    double* C = out.data.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = A + i * k;
        double* ci = C + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            if (av == 0.0) continue;
            const double* bk = B + kk * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += av * bk[j];
        }
    }
    return out;
}

/// C = A * B^T for A [n,m], B [k,m].
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank("matmul_nt", a, 2);
    require_rank("matmul_nt", b, 2);
    if (a.shape[1] != b.shape[1])
        throw std::invalid_argument("matmul_nt: inner dimension mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
    const std::size_t n = a.shape[0], m = a.shape[1], k = b.shape[0];
    Tensor out({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data.data() + i * m;
        double* ci = out.data.data() + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double* bk = b.data.data() + kk * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += ai[j] * bk[j];
            ci[kk] = acc;
        }
    }
    return out;
}

/// C = A^T * B for A [n,k], B [n,m].
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank("matmul_tn", a, 2);
    require_rank("matmul_tn", b, 2);
    if (a.shape[0] != b.shape[0])
        throw std::invalid_argument("matmul_tn: inner dimension mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
    const std::size_t n = a.shape[0], k = a.shape[1], m = b.shape[1];
    Tensor out({k, m});
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data.data() + i * k;
        const double* bi = b.data.data() + i * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = ai[kk];
            if (av == 0.0) continue;
            double* ck = out.data.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) ck[j] += av * bi[j];
        }
    }
    return out;
}

inline double l2_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

inline double l2_dist(const Tensor& a, const Tensor& b) {
    require_same_shape("l2_dist", a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double sum_sq(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return s;
}

}  // namespace lsiege
