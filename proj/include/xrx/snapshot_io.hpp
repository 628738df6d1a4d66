#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrx/errors.hpp"
#include "xrx/network.hpp"
#include "xrx/training.hpp"

namespace xrx {

// On-disk snapshot: magic "DCXS", u32 LE version, u32 LE header length, UTF-8
// JSON header (architecture, shapes, cycle/epoch, metrics, schedule), then the
// parameters as one little-endian float32 blob. Round trips are bit exact.
inline constexpr char kSnapshotMagic[4] = {'D', 'C', 'X', 'S'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct SnapshotFile {
    Shape3 input;
    std::vector<LayerSpec> layers;
    Snapshot snapshot;

    Network build_network() const {
        Network net(input, layers);
        net.set_all_params(snapshot.params);
        return net;
    }
};

namespace detail {

inline nlohmann::json layer_to_json(const LayerSpec& l) {
    nlohmann::json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Conv2d:
            j["out_channels"] = l.out_channels;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["pad"] = l.pad;
            break;
        case LayerKind::MaxPool2d:
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            break;
        case LayerKind::Dense:
            j["out_features"] = l.out_features;
            break;
        case LayerKind::Dropout:
            j["rate"] = l.rate;
            break;
        default:
            break;
    }
    return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const LayerKind kind = layer_kind_from_name(j.at("kind").get<std::string>());
    switch (kind) {
        case LayerKind::Conv2d:
            return LayerSpec::conv2d(j.at("out_channels").get<int>(), j.at("kernel").get<int>(),
                                     j.at("stride").get<int>(), j.at("pad").get<int>());
        case LayerKind::MaxPool2d:
            return LayerSpec::maxpool2d(j.at("kernel").get<int>(), j.at("stride").get<int>());
        case LayerKind::Dense:
            return LayerSpec::dense(j.at("out_features").get<int>());
        case LayerKind::Dropout:
            return LayerSpec::dropout(j.at("rate").get<float>());
        case LayerKind::Relu:
            return LayerSpec::relu();
        case LayerKind::GlobalAvgPool:
            return LayerSpec::global_avg_pool();
        case LayerKind::Softmax:
            return LayerSpec::softmax();
    }
    throw ParseError("snapshot: bad layer kind");
}

inline void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void float_to_le(float f, char out[4]) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    out[0] = static_cast<char>(bits & 0xFF);
    out[1] = static_cast<char>((bits >> 8) & 0xFF);
    out[2] = static_cast<char>((bits >> 16) & 0xFF);
    out[3] = static_cast<char>((bits >> 24) & 0xFF);
}

inline float float_from_le(const unsigned char* p) {
    const std::uint32_t bits = get_u32le(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace detail

inline std::string serialize_snapshot(const SnapshotFile& sf) {
    nlohmann::json header;
    header["input"] = {sf.input.c, sf.input.h, sf.input.w};
    header["layers"] = nlohmann::json::array();
    for (const auto& l : sf.layers) header["layers"].push_back(detail::layer_to_json(l));
    header["cycle"] = sf.snapshot.cycle;
    header["epoch"] = sf.snapshot.epoch;
    header["val_loss"] = sf.snapshot.val.loss;
    header["val_acc"] = sf.snapshot.val.accuracy;
    header["schedule"] = {{"alpha0", sf.snapshot.schedule.alpha0},
                          {"total_epochs", sf.snapshot.schedule.total_epochs},
                          {"cycles", sf.snapshot.schedule.cycles}};
    std::size_t param_count = 0;
    header["param_counts"] = nlohmann::json::array();
    for (const auto& p : sf.snapshot.params) {
        header["param_counts"].push_back({p.weights.size(), p.bias.size()});
        param_count += p.count();
    }
    header["param_total"] = param_count;

    const std::string hs = header.dump();
    std::string out;
    out.reserve(12 + hs.size() + param_count * 4);
    out.append(kSnapshotMagic, 4);
    detail::put_u32le(out, kSnapshotVersion);
    detail::put_u32le(out, static_cast<std::uint32_t>(hs.size()));
    out += hs;
    char b[4];
    for (const auto& p : sf.snapshot.params) {
        for (float f : p.weights) {
            detail::float_to_le(f, b);
            out.append(b, 4);
        }
        for (float f : p.bias) {
            detail::float_to_le(f, b);
            out.append(b, 4);
        }
    }
    return out;
}

inline SnapshotFile deserialize_snapshot(const std::string& bytes) {
    const unsigned char* data = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 12) throw BadMagic("snapshot: file too short for the header");
    if (std::memcmp(data, kSnapshotMagic, 4) != 0)
        throw BadMagic("snapshot: magic bytes are not DCXS");
    const std::uint32_t version = detail::get_u32le(data + 4);
    if (version != kSnapshotVersion)
        throw VersionUnsupported("snapshot: version " + std::to_string(version) +
                                 " unsupported (expected " + std::to_string(kSnapshotVersion) +
                                 ")");
    const std::uint32_t hlen = detail::get_u32le(data + 8);
    if (bytes.size() < 12 + static_cast<std::size_t>(hlen))
        throw TruncatedBlob("snapshot: truncated JSON header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("snapshot: bad header JSON: ") + e.what());
    }

    SnapshotFile sf;
    try {
        const auto in = header.at("input");
        sf.input = Shape3{in.at(0).get<std::size_t>(), in.at(1).get<std::size_t>(),
                          in.at(2).get<std::size_t>()};
        for (const auto& lj : header.at("layers")) sf.layers.push_back(detail::layer_from_json(lj));
        sf.snapshot.cycle = header.at("cycle").get<int>();
        sf.snapshot.epoch = header.at("epoch").get<int>();
        sf.snapshot.val.loss = header.at("val_loss").get<double>();
        sf.snapshot.val.accuracy = header.at("val_acc").get<double>();
        sf.snapshot.schedule.alpha0 = header.at("schedule").at("alpha0").get<double>();
        sf.snapshot.schedule.total_epochs = header.at("schedule").at("total_epochs").get<int>();
        sf.snapshot.schedule.cycles = header.at("schedule").at("cycles").get<int>();

        std::size_t total = 0;
        std::size_t off = 12 + hlen;
        for (const auto& pc : header.at("param_counts")) {
            const std::size_t nw = pc.at(0).get<std::size_t>();
            const std::size_t nb = pc.at(1).get<std::size_t>();
            total += nw + nb;
            LayerParams lp;
            lp.weights.resize(nw);
            lp.bias.resize(nb);
            sf.snapshot.params.push_back(std::move(lp));
        }
        if (header.at("param_total").get<std::size_t>() != total)
            throw ParseError("snapshot: inconsistent parameter counts in header");
        if (bytes.size() != off + total * 4)
            throw TruncatedBlob("snapshot: blob length " + std::to_string(bytes.size() - off) +
                                " != declared " + std::to_string(total * 4) + " bytes");
        for (auto& lp : sf.snapshot.params) {
            for (float& f : lp.weights) {
                f = detail::float_from_le(data + off);
                off += 4;
            }
            for (float& f : lp.bias) {
                f = detail::float_from_le(data + off);
                off += 4;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("snapshot: malformed header: ") + e.what());
    }
    return sf;
}

inline void save_snapshot(const std::string& path, const SnapshotFile& sf) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("snapshot: cannot write " + path);
    const std::string bytes = serialize_snapshot(sf);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("snapshot: short write to " + path);
}

inline SnapshotFile load_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("snapshot: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_snapshot(bytes);
}

}  // namespace xrx
