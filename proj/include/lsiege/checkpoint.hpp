#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "models.hpp"
#include "tensor.hpp"

namespace lsiege {

constexpr char kCheckpointMagic[8] = {'L', 'S', 'I', 'E', 'G', 'E', '0', '1'};

struct TrainMeta {
    std::uint64_t seed = 0;
    std::uint32_t epochs = 0;
    double final_loss = 0.0;
    std::string dataset;
    std::string notes;
};

/// A trained model plus its provenance; what checkpoints serialize.
struct ModelBundle {
    std::variant<VaeModel, AeModel, ClassifierModel> model;
    TrainMeta meta;

    std::string kind() const {
        if (std::holds_alternative<VaeModel>(model)) return "vae";
        if (std::holds_alternative<AeModel>(model)) return "ae";
        return "clf";
    }
    VaeModel& vae() { return std::get<VaeModel>(model); }
    const VaeModel& vae() const { return std::get<VaeModel>(model); }
    AeModel& ae() { return std::get<AeModel>(model); }
    const AeModel& ae() const { return std::get<AeModel>(model); }
    ClassifierModel& clf() { return std::get<ClassifierModel>(model); }
    const ClassifierModel& clf() const { return std::get<ClassifierModel>(model); }
};

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<char*>(b), 8);
}

inline std::uint64_t read_u64_le(std::istream& in, const char* what) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

inline void write_f64_le(std::ostream& out, const double* vals, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &vals[i], 8);
        write_u64_le(out, bits);
    }
}

inline void read_f64_le(std::istream& in, double* vals, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = read_u64_le(in, "tensor data");
        std::memcpy(&vals[i], &bits, 8);
    }
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
    write_u64_le(out, t.rank());
    for (auto d : t.shape) write_u64_le(out, d);
    write_u64_le(out, t.numel());
    write_f64_le(out, t.data.data(), t.numel());
}

inline Tensor read_tensor(std::istream& in) {
    const std::uint64_t rank = read_u64_le(in, "tensor rank");
    if (rank > 8) throw std::runtime_error("checkpoint: implausible tensor rank");
    Shape shape(rank);
    for (auto& d : shape) d = read_u64_le(in, "tensor dimension");
    const std::uint64_t count = read_u64_le(in, "tensor count");
    if (count != shape_numel(shape))
        throw std::runtime_error("checkpoint: tensor count does not match its shape");
    Tensor t(shape);
    read_f64_le(in, t.data.data(), count);
    return t;
}

inline nlohmann::json dense_descriptor(const Dense& d) {
    return {{"in", d.in()}, {"out", d.out()}, {"act", activation_name(d.act)}};
}

inline void check_dense(const Dense& d, const nlohmann::json& j, const std::string& name) {
    if (d.w.shape != Shape{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>()} ||
        d.b.shape != Shape{j.at("out").get<std::size_t>()})
        throw std::runtime_error("checkpoint: tensor shapes for layer '" + name +
                                 "' are inconsistent with the architecture descriptor");
}

}  // namespace detail

inline void save_checkpoint(const ModelBundle& bundle, const std::string& path) {
    nlohmann::json desc;
    desc["kind"] = bundle.kind();
    desc["meta"] = {{"seed", bundle.meta.seed},
                    {"epochs", bundle.meta.epochs},
                    {"final_loss", bundle.meta.final_loss},
                    {"dataset", bundle.meta.dataset},
                    {"notes", bundle.meta.notes}};

    std::vector<const Tensor*> tensors;
    auto add_dense = [&](const Dense& d) {
        tensors.push_back(&d.w);
        tensors.push_back(&d.b);
    };

    if (bundle.kind() == "vae") {
        const auto& m = bundle.vae();
        desc["likelihood"] = likelihood_name(m.likelihood);
        desc["latent"] = m.latent_dim;
        desc["logvar_clip"] = m.logvar_clip;
        desc["encoder"] = nlohmann::json::array();
        for (const auto& l : m.encoder) {
            desc["encoder"].push_back(detail::dense_descriptor(l));
            add_dense(l);
        }
        desc["mean_head"] = detail::dense_descriptor(m.mean_head);
        add_dense(m.mean_head);
        desc["logvar_head"] = detail::dense_descriptor(m.logvar_head);
        add_dense(m.logvar_head);
        desc["decoder"] = nlohmann::json::array();
        for (const auto& l : m.decoder) {
            desc["decoder"].push_back(detail::dense_descriptor(l));
            add_dense(l);
        }
        desc["decoder_out"] = detail::dense_descriptor(m.decoder_out);
        add_dense(m.decoder_out);
    } else if (bundle.kind() == "ae") {
        const auto& m = bundle.ae();
        desc["latent"] = m.latent_dim;
        desc["encoder"] = nlohmann::json::array();
        for (const auto& l : m.encoder) {
            desc["encoder"].push_back(detail::dense_descriptor(l));
            add_dense(l);
        }
        desc["bottleneck"] = detail::dense_descriptor(m.bottleneck);
        add_dense(m.bottleneck);
        desc["decoder"] = nlohmann::json::array();
        for (const auto& l : m.decoder) {
            desc["decoder"].push_back(detail::dense_descriptor(l));
            add_dense(l);
        }
        desc["decoder_out"] = detail::dense_descriptor(m.decoder_out);
        add_dense(m.decoder_out);
    } else {
        const auto& m = bundle.clf();
        desc["layers"] = nlohmann::json::array();
        for (const auto& l : m.layers) {
            desc["layers"].push_back(detail::dense_descriptor(l));
            add_dense(l);
        }
        desc["out"] = detail::dense_descriptor(m.out);
        add_dense(m.out);
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kCheckpointMagic, 8);
    const std::string desc_str = desc.dump();
    detail::write_u64_le(out, desc_str.size());
    out.write(desc_str.data(), static_cast<std::streamsize>(desc_str.size()));
    detail::write_u64_le(out, tensors.size());
    for (const auto* t : tensors) detail::write_tensor(out, *t);
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline ModelBundle load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint: magic mismatch in " + path);
    const std::uint64_t desc_len = detail::read_u64_le(in, "descriptor length");
    if (desc_len > (1u << 20)) throw std::runtime_error("checkpoint: implausible descriptor size");
    std::string desc_str(desc_len, '\0');
    in.read(desc_str.data(), static_cast<std::streamsize>(desc_len));
    if (!in) throw std::runtime_error("checkpoint: truncated descriptor in " + path);
    nlohmann::json desc;
    try {
        desc = nlohmann::json::parse(desc_str);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("checkpoint: bad descriptor JSON: " + std::string(e.what()));
    }

    const std::uint64_t tensor_count = detail::read_u64_le(in, "tensor count");
    std::vector<Tensor> tensors;
    tensors.reserve(tensor_count);
    for (std::uint64_t i = 0; i < tensor_count; ++i) tensors.push_back(detail::read_tensor(in));

    std::size_t next = 0;
    auto take_dense = [&](const nlohmann::json& j, const std::string& name) {
        if (next + 2 > tensors.size())
            throw std::runtime_error("checkpoint: missing tensors for layer '" + name + "'");
        Dense d;
        d.w = std::move(tensors[next++]);
        d.b = std::move(tensors[next++]);
        d.act = activation_from_name(j.at("act").get<std::string>());
        detail::check_dense(d, j, name);
        return d;
    };

    ModelBundle bundle;
    const std::string kind = desc.at("kind").get<std::string>();
    if (kind == "vae") {
        VaeModel m;
        m.likelihood = likelihood_from_name(desc.at("likelihood").get<std::string>());
        m.latent_dim = desc.at("latent").get<std::size_t>();
        m.logvar_clip = desc.at("logvar_clip").get<double>();
        for (const auto& j : desc.at("encoder")) m.encoder.push_back(take_dense(j, "encoder"));
        m.mean_head = take_dense(desc.at("mean_head"), "mean_head");
        m.logvar_head = take_dense(desc.at("logvar_head"), "logvar_head");
        for (const auto& j : desc.at("decoder")) m.decoder.push_back(take_dense(j, "decoder"));
        m.decoder_out = take_dense(desc.at("decoder_out"), "decoder_out");
        if (m.mean_head.out() != m.latent_dim || m.logvar_head.out() != m.latent_dim)
            throw std::runtime_error(
                "checkpoint: latent dimension inconsistent with head widths (latent " +
                std::to_string(m.latent_dim) + ", mean head " + std::to_string(m.mean_head.out()) +
                ")");
        bundle.model = std::move(m);
    } else if (kind == "ae") {
        AeModel m;
        m.latent_dim = desc.at("latent").get<std::size_t>();
        for (const auto& j : desc.at("encoder")) m.encoder.push_back(take_dense(j, "encoder"));
        m.bottleneck = take_dense(desc.at("bottleneck"), "bottleneck");
        for (const auto& j : desc.at("decoder")) m.decoder.push_back(take_dense(j, "decoder"));
        m.decoder_out = take_dense(desc.at("decoder_out"), "decoder_out");
        if (m.bottleneck.out() != m.latent_dim)
            throw std::runtime_error("checkpoint: latent dimension inconsistent with bottleneck");
        bundle.model = std::move(m);
    } else if (kind == "clf") {
        ClassifierModel m;
        for (const auto& j : desc.at("layers")) m.layers.push_back(take_dense(j, "layers"));
        m.out = take_dense(desc.at("out"), "out");
        bundle.model = std::move(m);
    } else {
        throw std::runtime_error("checkpoint: unknown model kind '" + kind + "'");
    }
    if (next != tensors.size())
        throw std::runtime_error("checkpoint: descriptor consumed " + std::to_string(next) +
                                 " tensors but file holds " + std::to_string(tensors.size()));

    const auto& meta = desc.at("meta");
    bundle.meta.seed = meta.at("seed").get<std::uint64_t>();
    bundle.meta.epochs = meta.at("epochs").get<std::uint32_t>();
    bundle.meta.final_loss = meta.at("final_loss").get<double>();
    bundle.meta.dataset = meta.value("dataset", "");
    bundle.meta.notes = meta.value("notes", "");
    return bundle;
}

}  // namespace lsiege
