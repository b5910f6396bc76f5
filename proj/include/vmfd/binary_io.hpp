// Little-endian binary readers/writers for scene and checkpoint files.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "vmfd/common.hpp"

namespace vmfd::io {

inline void write_u32(std::ostream& os, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline void write_u64(std::ostream& os, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline void write_f64(std::ostream& os, double v) {
    write_u64(os, std::bit_cast<uint64_t>(v));
}

inline void write_i32(std::ostream& os, int32_t v) {
    write_u32(os, static_cast<uint32_t>(v));
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("unexpected end of file");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

inline uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw FormatError("unexpected end of file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline int32_t read_i32(std::istream& is) { return static_cast<int32_t>(read_u32(is)); }

inline void write_magic(std::ostream& os, const char (&magic)[9]) {
    os.write(magic, 8);
}

inline void expect_magic(std::istream& is, const char (&magic)[9], const char* what) {
    char b[8];
    is.read(b, 8);
    if (!is || std::memcmp(b, magic, 8) != 0)
        throw FormatError(std::string(what) + ": bad magic bytes");
}

// Matrices are stored row-major with explicit dimensions.
inline void write_matrix(std::ostream& os, const Mat& m) {
    write_u32(os, static_cast<uint32_t>(m.rows()));
    write_u32(os, static_cast<uint32_t>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
}

inline Mat read_matrix(std::istream& is) {
    const uint32_t rows = read_u32(is);
    const uint32_t cols = read_u32(is);
    Mat m(rows, cols);
    for (uint32_t i = 0; i < rows; ++i)
        for (uint32_t j = 0; j < cols; ++j) m(i, j) = read_f64(is);
    return m;
}

inline void write_vector(std::ostream& os, const Vec& v) {
    write_u32(os, static_cast<uint32_t>(v.size()));
    for (int i = 0; i < v.size(); ++i) write_f64(os, v[i]);
}

inline Vec read_vector(std::istream& is) {
    const uint32_t n = read_u32(is);
    Vec v(n);
    for (uint32_t i = 0; i < n; ++i) v[i] = read_f64(is);
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    const uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw FormatError("unexpected end of file");
    return s;
}

}  // namespace vmfd::io
