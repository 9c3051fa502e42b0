#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace pdda::bin {

// Fixed little-endian encoding regardless of host byte order.

inline void put_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b.data(), b.size());
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b.data(), b.size());
}

inline void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
inline void put_i64(std::ostream& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_magic(std::ostream& out, const char (&magic)[9]) { out.write(magic, 8); }

inline void require(std::istream& in, const char* what) {
    if (!in) throw std::runtime_error(std::string("truncated or unreadable data while reading ") + what);
}

inline std::uint64_t get_u64(std::istream& in) {
    std::array<unsigned char, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    require(in, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    require(in, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint8_t get_u8(std::istream& in) {
    char c = 0;
    in.get(c);
    require(in, "u8");
    return static_cast<std::uint8_t>(c);
}

inline std::int64_t get_i64(std::istream& in) { return static_cast<std::int64_t>(get_u64(in)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
    char buf[8] = {};
    in.read(buf, 8);
    if (!in || std::memcmp(buf, magic, 8) != 0) throw std::runtime_error(std::string("bad magic, expected ") + magic);
}

}  // namespace pdda::bin
