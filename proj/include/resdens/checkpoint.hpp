#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "resdens/network.hpp"

namespace resdens {

// Checkpoint container format, little-endian throughout:
//   magic "RDCK" | u32 version | u64 config_hash | u64 iteration | u64 seed
//   | u64 adam_t | f64 lr,beta1,beta2,eps_hat | u32 entry_count | entries...
// Each entry: u32 name_len | name | u8 dtype | u32 rank | u64 dims[rank]
// | payload. dtype 1 = f64 tensor, 2 = u64 words, 3 = raw bytes.
// Entry names: config/text, param/<name>, adam/m/<name>, adam/v/<name>,
// rng/state.
inline constexpr char kCheckpointMagic[4] = {'R', 'D', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::uint64_t iteration = 0;
    std::uint64_t seed = 0;
    std::uint64_t adam_t = 0;
    AdamConfig adam;
    std::string config_text;
    std::map<std::string, Tensor> tensors;  // param/... and adam/...
    std::array<std::uint64_t, 4> rng_state{};
};

namespace detail {

template <typename T>
void put_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
T get_raw(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw ParseError("checkpoint: truncated file", in.gcount());
    return v;
}

inline void get_bytes(std::istream& in, void* p, std::size_t n) {
    if (!in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n)))
        throw ParseError("checkpoint: truncated payload");
}

inline void put_entry_header(std::ostream& out, const std::string& name, std::uint8_t dtype,
                             const std::vector<std::uint64_t>& dims) {
    put_raw(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_raw(out, dtype);
    put_raw(out, static_cast<std::uint32_t>(dims.size()));
    for (std::uint64_t d : dims) put_raw(out, d);
}

inline void put_tensor_entry(std::ostream& out, const std::string& name, const Tensor& t) {
    std::vector<std::uint64_t> dims(t.shape().begin(), t.shape().end());
    put_entry_header(out, name, 1, dims);
    put_bytes(out, t.data(), t.size() * sizeof(double));
}

} // namespace detail

inline void save_checkpoint(const std::string& path, Network& net, const AdamState& adam,
                            const std::array<std::uint64_t, 4>& rng_state, std::uint64_t iteration) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("checkpoint: cannot write '" + tmp + "'");
        detail::put_bytes(out, kCheckpointMagic, 4);
        detail::put_raw(out, kCheckpointVersion);
        detail::put_raw(out, net.config_hash);
        detail::put_raw(out, iteration);
        detail::put_raw(out, net.seed);
        detail::put_raw(out, static_cast<std::uint64_t>(adam.t));
        detail::put_raw(out, adam.cfg.lr);
        detail::put_raw(out, adam.cfg.beta1);
        detail::put_raw(out, adam.cfg.beta2);
        detail::put_raw(out, adam.cfg.eps_hat);

        const std::string config_text = net.config.to_kv().canonical_text();
        std::uint32_t entries = 2;  // config/text + rng/state
        net.for_each_param([&](const ParamView& v) { entries += v.learnable ? 3 : 1; });
        detail::put_raw(out, entries);

        detail::put_entry_header(out, "config/text", 3, {config_text.size()});
        detail::put_bytes(out, config_text.data(), config_text.size());

        AdamState& st = const_cast<AdamState&>(adam);
        net.for_each_param([&](const ParamView& v) {
            detail::put_tensor_entry(out, "param/" + v.name, *v.value);
            if (v.learnable) {
                detail::put_tensor_entry(out, "adam/m/" + v.name,
                                         st.moment(st.m, v.name, v.value->shape()));
                detail::put_tensor_entry(out, "adam/v/" + v.name,
                                         st.moment(st.v, v.name, v.value->shape()));
            }
        });

        detail::put_entry_header(out, "rng/state", 2, {4});
        for (std::uint64_t w : rng_state) detail::put_raw(out, w);
        if (!out) throw ConfigError("checkpoint: write failed for '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    detail::get_bytes(in, magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw ParseError("checkpoint: bad magic in '" + path + "'", 0);
    const auto version = detail::get_raw<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version), 4);

    Checkpoint c;
    c.config_hash = detail::get_raw<std::uint64_t>(in);
    c.iteration = detail::get_raw<std::uint64_t>(in);
    c.seed = detail::get_raw<std::uint64_t>(in);
    c.adam_t = detail::get_raw<std::uint64_t>(in);
    c.adam.lr = detail::get_raw<double>(in);
    c.adam.beta1 = detail::get_raw<double>(in);
    c.adam.beta2 = detail::get_raw<double>(in);
    c.adam.eps_hat = detail::get_raw<double>(in);

    const auto entries = detail::get_raw<std::uint32_t>(in);
    for (std::uint32_t e = 0; e < entries; ++e) {
        const auto name_len = detail::get_raw<std::uint32_t>(in);
        if (name_len > 4096) throw ParseError("checkpoint: entry name too long");
        std::string name(name_len, '\0');
        detail::get_bytes(in, name.data(), name_len);
        const auto dtype = detail::get_raw<std::uint8_t>(in);
        const auto rank = detail::get_raw<std::uint32_t>(in);
        if (rank > 8) throw ParseError("checkpoint: entry rank too large");
        std::vector<std::uint64_t> dims(rank);
        std::size_t count = 1;
        for (auto& d : dims) {
            d = detail::get_raw<std::uint64_t>(in);
            count *= static_cast<std::size_t>(d);
        }
        if (dtype == 1) {
            Shape shape(dims.begin(), dims.end());
            Tensor t(shape);
            detail::get_bytes(in, t.data(), count * sizeof(double));
            c.tensors.emplace(name, std::move(t));
        } else if (dtype == 2) {
            if (name == "rng/state" && count == 4) {
                for (auto& w : c.rng_state) w = detail::get_raw<std::uint64_t>(in);
            } else {
                in.seekg(static_cast<std::streamoff>(count * 8), std::ios::cur);
            }
        } else if (dtype == 3) {
            std::string text(count, '\0');
            detail::get_bytes(in, text.data(), count);
            if (name == "config/text") c.config_text = std::move(text);
        } else {
            throw ParseError("checkpoint: unknown dtype " + std::to_string(dtype));
        }
    }
    return c;
}

// Rebuilds the network recorded in the checkpoint and loads every tensor.
inline Network restore_network(const Checkpoint& c) {
    if (c.config_text.empty()) throw ParseError("checkpoint: missing config/text entry");
    std::istringstream cfg_stream(c.config_text);
    const KeyValueFile kv = KeyValueFile::parse(cfg_stream, "checkpoint config");
    const NetworkConfig config = NetworkConfig::from_kv(kv);
    Network net = build_network(config, c.seed);
    if (net.config_hash != c.config_hash)
        throw ParseError("checkpoint: config hash mismatch");
    net.for_each_param([&](const ParamView& v) {
        auto it = c.tensors.find("param/" + v.name);
        if (it == c.tensors.end()) throw ParseError("checkpoint: missing tensor param/" + v.name);
        if (it->second.shape() != v.value->shape())
            throw ParseError("checkpoint: shape mismatch for param/" + v.name);
        *v.value = it->second;
    });
    return net;
}

inline AdamState restore_adam(const Checkpoint& c, Network& net) {
    AdamState st;
    st.cfg = c.adam;
    st.t = static_cast<long long>(c.adam_t);
    net.for_each_param([&](const ParamView& v) {
        if (!v.learnable) return;
        for (const char* kind : {"m", "v"}) {
            auto it = c.tensors.find("adam/" + std::string(kind) + "/" + v.name);
            if (it == c.tensors.end())
                throw ParseError("checkpoint: missing tensor adam/" + std::string(kind) + "/" + v.name);
            if (it->second.shape() != v.value->shape())
                throw ParseError("checkpoint: shape mismatch for adam/" + std::string(kind) + "/" + v.name);
            (kind[0] == 'm' ? st.m : st.v)[v.name] = it->second;
        }
    });
    return st;
}

} // namespace resdens
