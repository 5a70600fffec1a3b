#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string_view>

#include "mage/common.hpp"

namespace mage::detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    }
    out.write(b.data(), b.size());
}

inline void put_f64(std::ostream& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
    }
    out.write(b.data(), b.size());
}

inline void put_block(std::ostream& out, std::span<const double> values) {
    for (const double v : values) {
        put_f64(out, v);
    }
}

inline std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
        throw UsageError("checkpoint truncated");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    }
    return v;
}

inline double get_f64(std::istream& in) {
    std::array<unsigned char, 8> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
        throw UsageError("checkpoint truncated");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    }
    return std::bit_cast<double>(bits);
}

inline void get_block(std::istream& in, std::span<double> values) {
    for (double& v : values) {
        v = get_f64(in);
    }
}

inline void put_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    std::array<char, 16> buf{};
    if (magic.size() > buf.size() || !in.read(buf.data(), static_cast<std::streamsize>(magic.size())) ||
        std::string_view(buf.data(), magic.size()) != magic) {
        throw UsageError("checkpoint magic mismatch, expected " + std::string(magic));
    }
}

} // namespace mage::detail
