#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "pixelcl/config.hpp"
#include "pixelcl/heads.hpp"

namespace pixelcl {

inline constexpr char kCheckpointMagic[8] = {'P', 'X', 'C', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

inline void write_string(std::ofstream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& in) {
    const auto n = read_pod<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    return s;
}

} // namespace detail

/// Versioned container: config echo + step counter + named parameter arrays.
template <class S>
void save_checkpoint(const std::string& path, const Network<S>& net, const TrainConfig& cfg, long step) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod(out, kCheckpointVersion);
    detail::write_pod(out, static_cast<std::int64_t>(step));
    detail::write_string(out, cfg.serialize());
    const auto& ps = net.params();
    detail::write_pod(out, static_cast<std::uint32_t>(ps.entries().size()));
    for (std::size_t i = 0; i < ps.entries().size(); ++i) {
        const auto& e = ps.entries()[i];
        detail::write_string(out, e.name);
        detail::write_pod(out, static_cast<std::uint32_t>(e.shape.size()));
        for (int d : e.shape) detail::write_pod(out, static_cast<std::int32_t>(d));
        auto view = ps.view(i);
        for (S v : view) detail::write_pod(out, static_cast<float>(v));
    }
    if (!out) throw ConfigError("short write to checkpoint: " + path);
}

struct CheckpointHeader {
    TrainConfig cfg;
    long step = 0;
};

inline CheckpointHeader read_checkpoint_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ConfigError("not a checkpoint file: " + path);
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw ConfigError("unsupported checkpoint version");
    CheckpointHeader h;
    h.step = static_cast<long>(detail::read_pod<std::int64_t>(in));
    h.cfg = parse_train_config(detail::read_string(in));
    return h;
}

/// Fills a network (already built from the checkpoint's config) with the
/// stored parameters; names and shapes must match exactly.
template <class S>
void load_checkpoint_params(const std::string& path, Network<S>& net) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read checkpoint: " + path);
    in.seekg(8 + sizeof(std::uint32_t) + sizeof(std::int64_t));
    detail::read_string(in); // config echo
    const auto n = detail::read_pod<std::uint32_t>(in);
    auto& ps = net.params();
    if (n != ps.entries().size()) throw ConfigError("checkpoint/network layout mismatch");
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = detail::read_string(in);
        const auto& e = ps.entries()[i];
        if (name != e.name) throw ConfigError("checkpoint entry mismatch: " + name + " vs " + e.name);
        const auto ndim = detail::read_pod<std::uint32_t>(in);
        if (ndim != e.shape.size()) throw ConfigError("checkpoint shape mismatch for " + name);
        for (std::uint32_t d = 0; d < ndim; ++d)
            if (detail::read_pod<std::int32_t>(in) != e.shape[d])
                throw ConfigError("checkpoint dim mismatch for " + name);
        auto view = ps.view(i);
        for (auto& v : view) v = static_cast<S>(detail::read_pod<float>(in));
    }
    if (!in) throw ConfigError("truncated checkpoint: " + path);
}

} // namespace pixelcl
