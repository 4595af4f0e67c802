#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "rng.hpp"

namespace lsiege {

// Procedurally rendered digit corpus: a 5x7 glyph per class, drawn at random
// scale/rotation/offset/stroke weight. Stands in for the handwritten sets when
// they are not on disk; generated images flow through the exact same dataset
// containers and file formats.

namespace detail {

// bit 4 = leftmost column
constexpr std::array<std::array<std::uint8_t, 7>, 10> kDigitGlyphs = {{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
}};

inline double glyph_cell(int digit, int cx, int cy) {
    if (cx < 0 || cx >= 5 || cy < 0 || cy >= 7) return 0.0;
    return (kDigitGlyphs[digit][cy] >> (4 - cx)) & 1 ? 1.0 : 0.0;
}

/// Bilinear interpolation of the glyph bitmap at continuous glyph coordinates.
inline double glyph_field(int digit, double u, double v) {
    const double fu = u - 0.5, fv = v - 0.5;
    const int cx = static_cast<int>(std::floor(fu));
    const int cy = static_cast<int>(std::floor(fv));
    const double ax = fu - cx, ay = fv - cy;
    const double v00 = glyph_cell(digit, cx, cy), v10 = glyph_cell(digit, cx + 1, cy);
    const double v01 = glyph_cell(digit, cx, cy + 1), v11 = glyph_cell(digit, cx + 1, cy + 1);
    return (1 - ax) * (1 - ay) * v00 + ax * (1 - ay) * v10 + (1 - ax) * ay * v01 + ax * ay * v11;
}

struct GlyphPose {
    double scale, angle, dx, dy, threshold;
};

inline GlyphPose random_pose(Rng& rng, double side) {
    GlyphPose p;
    p.scale = rng.uniform(side / 11.0, side / 8.0);  // glyph is 5x7 cells
    p.angle = rng.uniform(-0.25, 0.25);
    p.dx = rng.uniform(-3.0, 3.0) * side / 28.0;
    p.dy = rng.uniform(-3.0, 3.0) * side / 28.0;
    p.threshold = rng.uniform(0.32, 0.55);  // lower threshold = thicker stroke
    return p;
}

inline double render_pixel(int digit, const GlyphPose& p, double x, double y, double side) {
    // map output pixel back into glyph space (glyph centered at (2.5, 3.5))
    const double cx = side / 2.0 + p.dx, cy = side / 2.0 + p.dy;
    const double rx = x - cx, ry = y - cy;
    const double ca = std::cos(-p.angle), sa = std::sin(-p.angle);
    const double gx = (ca * rx - sa * ry) / p.scale + 2.5;
    const double gy = (sa * rx + ca * ry) / p.scale + 3.5;
    const double f = glyph_field(digit, gx, gy);
    const double edge = 0.22;
    return std::min(1.0, std::max(0.0, (f - p.threshold) / edge));
}

}  // namespace detail

/// One grayscale digit image as bytes, row-major side*side.
inline std::vector<unsigned char> synth_digit_image(int digit, std::size_t side, Rng& rng) {
    const auto pose = detail::random_pose(rng, static_cast<double>(side));
    std::vector<unsigned char> img(side * side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            const double v =
                detail::render_pixel(digit, pose, x + 0.5, y + 0.5, static_cast<double>(side));
            img[y * side + x] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
    return img;
}

/// n-image 28x28 grayscale corpus; image i depends only on (seed, i).
inline Dataset synth_digits(std::size_t n, std::uint64_t seed, std::size_t side = 28) {
    Dataset ds;
    ds.meta = {"synth-digits", side, side, 1, false};
    ds.images = Tensor({n, side * side});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x73796e7468ULL, i));
        const int digit = static_cast<int>(rng.below(10));
        auto img = synth_digit_image(digit, side, rng);
        for (std::size_t j = 0; j < img.size(); ++j)
            ds.images.data[i * img.size() + j] = img[j] / 255.0;
        ds.labels[i] = digit;
    }
    return ds;
}

/// Writes a synthetic corpus as an IDX image/label file pair.
inline void synth_digits_idx(const std::string& images_path, const std::string& labels_path,
                             std::size_t n, std::uint64_t seed, std::size_t side = 28) {
    std::vector<std::vector<unsigned char>> images(n);
    std::vector<unsigned char> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x73796e7468ULL, i));
        const int digit = static_cast<int>(rng.below(10));
        images[i] = synth_digit_image(digit, side, rng);
        labels[i] = static_cast<unsigned char>(digit);
    }
    save_mnist_idx(images_path, labels_path, images, labels, side, side);
}

/// n-image 32x32x3 color corpus in the flat SVHN container layout.
inline Dataset synth_color_digits(std::size_t n, std::uint64_t seed, std::size_t side = 32) {
    Dataset ds;
    ds.meta = {"synth-color-digits", side, side, 3, false};
    const std::size_t pixels = side * side * 3;
    ds.images = Tensor({n, pixels});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x73766873ULL, i));
        const int digit = static_cast<int>(rng.below(10));
        double bg[3], fg[3];
        for (int c = 0; c < 3; ++c) bg[c] = rng.uniform(0.0, 0.35);
        for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(0.55, 1.0);
        const auto pose = detail::random_pose(rng, static_cast<double>(side));
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const double a = detail::render_pixel(digit, pose, x + 0.5, y + 0.5,
                                                      static_cast<double>(side));
                for (int c = 0; c < 3; ++c) {
                    double v = bg[c] + a * (fg[c] - bg[c]) + rng.normal(0.0, 0.03);
                    ds.images.data[i * pixels + (y * side + x) * 3 + c] =
                        std::min(1.0, std::max(0.0, v));
                }
            }
        ds.labels[i] = digit;
    }
    return ds;
}

inline void synth_color_digits_raw(const std::string& path, std::size_t n, std::uint64_t seed,
                                   std::size_t side = 32) {
    Dataset ds = synth_color_digits(n, seed, side);
    std::vector<std::vector<unsigned char>> images(n);
    std::vector<unsigned char> labels(n);
    const std::size_t pixels = side * side * 3;
    for (std::size_t i = 0; i < n; ++i) {
        images[i].resize(pixels);
        for (std::size_t j = 0; j < pixels; ++j)
            images[i][j] =
                static_cast<unsigned char>(std::lround(ds.images.data[i * pixels + j] * 255.0));
        labels[i] = static_cast<unsigned char>(ds.labels[i]);
    }
    save_svhn(path, images, labels, side, side, 3);
}

}  // namespace lsiege
