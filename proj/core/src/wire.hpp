#pragma once

// Little-endian primitive IO used by the raw_v1 volume format and the
// checkpoint container.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "tgseg/errors.hpp"

namespace tgseg::wire {

inline void put_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}
inline void put_u16(std::ostream& os, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}
inline void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}
inline void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void need(std::istream& is, const char* what) {
    if (!is.good()) throw FormatError(std::string("truncated input while reading ") + what);
}
inline std::uint8_t get_u8(std::istream& is, const char* what = "u8") {
    const int c = is.get();
    if (c == EOF) throw FormatError(std::string("truncated input while reading ") + what);
    return static_cast<std::uint8_t>(c);
}
inline std::uint16_t get_u16(std::istream& is, const char* what = "u16") {
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(get_u8(is, what)) << (8 * i);
    return v;
}
inline std::uint32_t get_u32(std::istream& is, const char* what = "u32") {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(is, what)) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& is, const char* what = "u64") {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(get_u8(is, what)) << (8 * i);
    return v;
}
inline float get_f32(std::istream& is, const char* what = "f32") {
    const std::uint32_t bits = get_u32(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}
inline double get_f64(std::istream& is, const char* what = "f64") {
    const std::uint64_t bits = get_u64(is, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}
inline std::string get_str(std::istream& is, const char* what = "string") {
    const std::uint32_t n = get_u32(is, what);
    std::string s(n, '\0');
    is.read(s.data(), n);
    need(is, what);
    return s;
}

}  // namespace tgseg::wire
