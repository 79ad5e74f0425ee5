#pragma once

// Binary formats, all little-endian.
//
// Tensor file:  "FQT1" | u32 rank | u64 dims[rank] | f64 data[prod(dims)]
// Checkpoint:   "FQSP" | u32 version | u64 config length | config JSON |
//               u32 tensor count | per tensor: u32 name length, name,
//               u32 rank, u64 dims[rank], f64 data

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freqsp/error.hpp"
#include "freqsp/nn/model.hpp"
#include "freqsp/nn/tensor.hpp"

namespace freqsp::nn {

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail_io {

template <typename T>
void put(std::ostream& o, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    o.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw IoError("unexpected end of file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

inline void put_tensor_body(std::ostream& o, const Tensor& t) {
    put<uint32_t>(o, static_cast<uint32_t>(t.rank()));
    for (int d : t.shape()) put<uint64_t>(o, static_cast<uint64_t>(d));
    for (double v : t.data()) put<double>(o, v);
}

inline Tensor get_tensor_body(std::istream& in) {
    const auto rank = get<uint32_t>(in);
    if (rank > 4) throw IoError("tensor rank " + std::to_string(rank) + " above 4");
    Shape shape;
    for (uint32_t i = 0; i < rank; ++i) {
        const auto d = get<uint64_t>(in);
        if (d == 0 || d > (1u << 30)) throw IoError("implausible tensor dimension");
        shape.push_back(static_cast<int>(d));
    }
    Tensor t(shape);
    for (auto& v : t.data()) v = get<double>(in);
    return t;
}

inline void expect_magic(std::istream& in, const char* magic) {
    char m[4];
    if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0)
        throw IoError(std::string("bad magic, expected ") + magic);
}

} // namespace detail_io

inline void write_tensor(std::ostream& o, const Tensor& t) {
    o.write("FQT1", 4);
    detail_io::put_tensor_body(o, t);
}

inline Tensor read_tensor(std::istream& in) {
    detail_io::expect_magic(in, "FQT1");
    return detail_io::get_tensor_body(in);
}

inline void save_tensor(const Tensor& t, const std::filesystem::path& p) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw IoError("cannot open " + p.string());
    write_tensor(o, t);
    if (!o) throw IoError("short write to " + p.string());
}

inline Tensor load_tensor(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return read_tensor(in);
}

inline std::string checkpoint_bytes(const FreqSP& model) {
    std::ostringstream o(std::ios::binary);
    o.write("FQSP", 4);
    detail_io::put<uint32_t>(o, kCheckpointVersion);
    const std::string cfg = nlohmann::json(model.config()).dump();
    detail_io::put<uint64_t>(o, cfg.size());
    o.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const auto params = model.named_parameters();
    detail_io::put<uint32_t>(o, static_cast<uint32_t>(params.size()));
    for (const auto& [name, v] : params) {
        detail_io::put<uint32_t>(o, static_cast<uint32_t>(name.size()));
        o.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail_io::put_tensor_body(o, v.value());
    }
    return o.str();
}

inline void save_checkpoint(const FreqSP& model, const std::filesystem::path& p) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw IoError("cannot open " + p.string());
    const std::string bytes = checkpoint_bytes(model);
    o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!o) throw IoError("short write to " + p.string());
}

inline FreqSP read_checkpoint(std::istream& in) {
    detail_io::expect_magic(in, "FQSP");
    const auto version = detail_io::get<uint32_t>(in);
    if (version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto len = detail_io::get<uint64_t>(in);
    if (len > (1u << 20)) throw IoError("implausible config length");
    std::string cfg(len, '\0');
    if (!in.read(cfg.data(), static_cast<std::streamsize>(len))) throw IoError("truncated checkpoint config");
    FreqSPConfig config;
    try {
        config = nlohmann::json::parse(cfg).get<FreqSPConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad checkpoint config: ") + e.what());
    }
    FreqSP model(config);
    auto params = model.named_parameters();
    const auto count = detail_io::get<uint32_t>(in);
    if (count != params.size()) throw IoError("checkpoint tensor count does not match its config");
    for (auto& [name, v] : params) {
        const auto nlen = detail_io::get<uint32_t>(in);
        if (nlen > 4096) throw IoError("implausible tensor name length");
        std::string stored(nlen, '\0');
        if (!in.read(stored.data(), nlen)) throw IoError("truncated checkpoint");
        if (stored != name) throw IoError("checkpoint tensor '" + stored + "' where '" + name + "' expected");
        Tensor t = detail_io::get_tensor_body(in);
        if (t.shape() != v.value().shape()) throw IoError("checkpoint tensor '" + name + "' has wrong shape");
        v.value() = std::move(t);
    }
    return model;
}

inline FreqSP load_checkpoint(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    return read_checkpoint(in);
}

} // namespace freqsp::nn
