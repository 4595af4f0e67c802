#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace lsiege {

struct DatasetMeta {
    std::string name;
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    bool binarized = false;
};

/// Images as rows of an [N, pixels] tensor with values in [0,1].
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    DatasetMeta meta;

    std::size_t count() const { return images.rank() == 2 ? images.shape[0] : 0; }
    std::size_t pixels() const { return images.rank() == 2 ? images.shape[1] : 0; }

    Tensor image(std::size_t i) const {
        const std::size_t p = pixels();
        Tensor out({p});
        std::copy(images.data.begin() + i * p, images.data.begin() + (i + 1) * p,
                  out.data.begin());
        return out;
    }

    Dataset slice(std::size_t start, std::size_t n) const {
        if (start + n > count()) throw std::invalid_argument("Dataset::slice: out of range");
        Dataset out;
        out.meta = meta;
        const std::size_t p = pixels();
        out.images = Tensor({n, p});
        std::copy(images.data.begin() + start * p, images.data.begin() + (start + n) * p,
                  out.images.data.begin());
        out.labels.assign(labels.begin() + start, labels.begin() + start + n);
        return out;
    }
};

struct ExperimentPair {
    std::size_t original;
    std::size_t target;
    int id;
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("IDX: truncated file while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("SVHN raw: truncated file while reading " + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace detail

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// MNIST IDX pair loader: big-endian magics 0x803 (images) and 0x801 (labels),
/// pixel bytes scaled to [0,1] by /255.
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("IDX: cannot open " + images_path);
    const std::uint32_t img_magic = detail::read_u32_be(img, "image magic");
    if (img_magic != kIdxImagesMagic)
        throw std::runtime_error("IDX: image magic mismatch in " + images_path + " (got 0x" +
                                 [&] {
                                     char buf[16];
                                     std::snprintf(buf, sizeof buf, "%08x", img_magic);
                                     return std::string(buf);
                                 }() +
                                 ", want 0x00000803)");
    const std::uint32_t n = detail::read_u32_be(img, "image count");
    const std::uint32_t rows = detail::read_u32_be(img, "row count");
    const std::uint32_t cols = detail::read_u32_be(img, "column count");

    std::vector<unsigned char> bytes(static_cast<std::size_t>(n) * rows * cols);
    img.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(img.gcount()) != bytes.size())
        throw std::runtime_error("IDX: truncated image payload in " + images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("IDX: cannot open " + labels_path);
    const std::uint32_t lab_magic = detail::read_u32_be(lab, "label magic");
    if (lab_magic != kIdxLabelsMagic)
        throw std::runtime_error("IDX: label magic mismatch in " + labels_path);
    const std::uint32_t n_lab = detail::read_u32_be(lab, "label count");
    if (n_lab != n)
        throw std::runtime_error("IDX: count mismatch: " + std::to_string(n) + " images vs " +
                                 std::to_string(n_lab) + " labels");
    std::vector<unsigned char> lbytes(n_lab);
    lab.read(reinterpret_cast<char*>(lbytes.data()), static_cast<std::streamsize>(lbytes.size()));
    if (static_cast<std::size_t>(lab.gcount()) != lbytes.size())
        throw std::runtime_error("IDX: truncated label payload in " + labels_path);

    Dataset ds;
    ds.meta = {"mnist", cols, rows, 1, false};
    ds.images = Tensor({n, static_cast<std::size_t>(rows) * cols});
    for (std::size_t i = 0; i < bytes.size(); ++i) ds.images.data[i] = bytes[i] / 255.0;
    ds.labels.assign(lbytes.begin(), lbytes.end());
    return ds;
}

/// Writes an IDX image/label pair from byte-valued images (one row per image).
inline void save_mnist_idx(const std::string& images_path, const std::string& labels_path,
                           const std::vector<std::vector<unsigned char>>& images,
                           const std::vector<unsigned char>& labels, std::size_t rows,
                           std::size_t cols) {
    if (images.size() != labels.size())
        throw std::invalid_argument("save_mnist_idx: image/label count mismatch");
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("IDX: cannot write " + images_path);
    detail::write_u32_be(img, kIdxImagesMagic);
    detail::write_u32_be(img, static_cast<std::uint32_t>(images.size()));
    detail::write_u32_be(img, static_cast<std::uint32_t>(rows));
    detail::write_u32_be(img, static_cast<std::uint32_t>(cols));
    for (const auto& im : images) {
        if (im.size() != rows * cols)
            throw std::invalid_argument("save_mnist_idx: image size mismatch");
        img.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));
    }
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("IDX: cannot write " + labels_path);
    detail::write_u32_be(lab, kIdxLabelsMagic);
    detail::write_u32_be(lab, static_cast<std::uint32_t>(labels.size()));
    lab.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

constexpr char kSvhnRawMagic[8] = {'S', 'V', 'H', 'N', 'R', 'A', 'W', '1'};

/// Loader for the project's flat SVHN container: 8-byte magic, then
/// little-endian u32 {N, height, width, channels}, N*H*W*C pixel bytes
/// (row-major, channel-interleaved), then N label bytes.
inline Dataset load_svhn(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("SVHN raw: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kSvhnRawMagic, 8) != 0)
        throw std::runtime_error("SVHN raw: magic mismatch in " + path);
    const std::uint32_t n = detail::read_u32_le(in, "count");
    const std::uint32_t h = detail::read_u32_le(in, "height");
    const std::uint32_t w = detail::read_u32_le(in, "width");
    const std::uint32_t c = detail::read_u32_le(in, "channels");
    const std::size_t pixels = static_cast<std::size_t>(h) * w * c;

    std::vector<unsigned char> bytes(static_cast<std::size_t>(n) * pixels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw std::runtime_error("SVHN raw: truncated pixel payload in " + path);
    std::vector<unsigned char> lbytes(n);
    in.read(reinterpret_cast<char*>(lbytes.data()), static_cast<std::streamsize>(lbytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != lbytes.size())
        throw std::runtime_error("SVHN raw: truncated label payload in " + path);

    Dataset ds;
    ds.meta = {"svhn", w, h, c, false};
    ds.images = Tensor({n, pixels});
    for (std::size_t i = 0; i < bytes.size(); ++i) ds.images.data[i] = bytes[i] / 255.0;
    ds.labels.assign(lbytes.begin(), lbytes.end());
    return ds;
}

inline void save_svhn(const std::string& path, const std::vector<std::vector<unsigned char>>& images,
                      const std::vector<unsigned char>& labels, std::size_t h, std::size_t w,
                      std::size_t c) {
    if (images.size() != labels.size())
        throw std::invalid_argument("save_svhn: image/label count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("SVHN raw: cannot write " + path);
    out.write(kSvhnRawMagic, 8);
    detail::write_u32_le(out, static_cast<std::uint32_t>(images.size()));
    detail::write_u32_le(out, static_cast<std::uint32_t>(h));
    detail::write_u32_le(out, static_cast<std::uint32_t>(w));
    detail::write_u32_le(out, static_cast<std::uint32_t>(c));
    for (const auto& im : images) {
        if (im.size() != h * w * c) throw std::invalid_argument("save_svhn: image size mismatch");
        out.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));
    }
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

/// Thresholded copy: pixel >= threshold maps to 1, else 0.
inline Dataset binarize(const Dataset& ds, double threshold = 0.5) {
    Dataset out = ds;
    for (auto& v : out.images.data) v = v >= threshold ? 1.0 : 0.0;
    out.meta.binarized = true;
    return out;
}

/// Draws n distinct original/target index pairs, original != target,
/// deterministic under the seed.
inline std::vector<ExperimentPair> sample_pairs(const Dataset& ds, std::size_t n,
                                                std::uint64_t seed) {
    const std::size_t count = ds.count();
    if (count < 2 && n > 0) throw std::invalid_argument("sample_pairs: dataset too small");
    if (n > count * (count - 1))
        throw std::invalid_argument("sample_pairs: requested " + std::to_string(n) +
                                    " pairs from only " + std::to_string(count) + " images");
    Rng rng(derive_seed(seed, 0x70616972ULL));
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<ExperimentPair> pairs;
    pairs.reserve(n);
    while (pairs.size() < n) {
        const std::size_t o = rng.below(count);
        const std::size_t t = rng.below(count);
        if (o == t) continue;
        if (!seen.insert({o, t}).second) continue;
        pairs.push_back({o, t, static_cast<int>(pairs.size())});
    }
    return pairs;
}

}  // namespace lsiege
