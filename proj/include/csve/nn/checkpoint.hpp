#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "csve/core/error.hpp"
#include "csve/nn/mlp.hpp"

namespace csve::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::array<char, 8> kBlobMagic{'C', 'S', 'V', 'E', 'M', 'L', 'P', '\0'};
inline constexpr std::uint32_t kBlobVersion = 1;

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("checkpoint: unexpected end of data");
    return value;
}

}  // namespace detail

/// Blob layout: magic[8], u32 version, u32 activation, u64 layer count, u64 sizes[count],
/// u64 parameter count, f64 parameters[count] (little-endian, flat layer order).
inline void write_mlp(std::ostream& out, const Mlp& net) {
    out.write(kBlobMagic.data(), kBlobMagic.size());
    detail::write_pod(out, kBlobVersion);
    detail::write_pod(out, static_cast<std::uint32_t>(net.activation() == Activation::relu ? 0 : 1));
    detail::write_pod(out, static_cast<std::uint64_t>(net.layer_sizes().size()));
    for (auto s : net.layer_sizes()) detail::write_pod(out, static_cast<std::uint64_t>(s));
    detail::write_pod(out, static_cast<std::uint64_t>(net.num_params()));
    out.write(reinterpret_cast<const char*>(net.params().data()),
              static_cast<std::streamsize>(net.num_params() * sizeof(double)));
    if (!out) throw IoError("checkpoint: write failed");
}

inline Mlp read_mlp(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kBlobMagic) throw IoError("checkpoint: bad magic");
    if (detail::read_pod<std::uint32_t>(in) != kBlobVersion) throw IoError("checkpoint: unsupported version");
    const auto act = detail::read_pod<std::uint32_t>(in);
    if (act > 1) throw IoError("checkpoint: unknown activation tag");
    const auto count = detail::read_pod<std::uint64_t>(in);
    if (count < 2 || count > 64) throw IoError("checkpoint: implausible layer count");
    std::vector<std::size_t> sizes(count);
    for (auto& s : sizes) s = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(in));
    Mlp net(sizes, act == 0 ? Activation::relu : Activation::tanh);
    if (detail::read_pod<std::uint64_t>(in) != net.num_params()) throw IoError("checkpoint: parameter count mismatch");
    in.read(reinterpret_cast<char*>(net.params().data()), static_cast<std::streamsize>(net.num_params() * sizeof(double)));
    if (!in) throw IoError("checkpoint: truncated parameters");
    return net;
}

inline void save_mlp(const std::string& path, const Mlp& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    write_mlp(out, net);
}

inline Mlp load_mlp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_mlp(in);
}

}  // namespace csve::nn
