#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

#include "peft/errors.hpp"
#include "peft/matrix.hpp"

namespace peft {
namespace io {

// Byte-level little-endian primitives shared by all file formats. Explicit
// byte assembly keeps the formats host-endianness independent.

inline void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void write_f32_le(std::ostream& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::uint8_t read_u8(std::istream& in, const char* what) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) {
        throw FormatError(std::string("truncated file: expected ") + what);
    }
    return static_cast<std::uint8_t>(c);
}

inline std::uint64_t read_u64_le(std::istream& in, const char* what) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(read_u8(in, what)) << (8 * i);
    }
    return v;
}

inline float read_f32_le(std::istream& in, const char* what) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
        bits |= static_cast<std::uint32_t>(read_u8(in, what)) << (8 * i);
    }
    return std::bit_cast<float>(bits);
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char found[4];
    for (int i = 0; i < 4; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) {
            throw FormatError(std::string("truncated file: expected magic \"") + magic + "\"");
        }
        found[i] = static_cast<char>(c);
    }
    if (std::string(found, 4) != std::string(magic, 4)) {
        throw FormatError(std::string("bad magic: expected \"") + magic + "\", found \"" +
                          std::string(found, 4) + "\"");
    }
}

/// Guard against absurd dimensions from corrupt headers before allocating.
inline void check_dims(std::uint64_t rows, std::uint64_t cols) {
    constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
    if (rows == 0 || cols == 0 || rows > kMaxElements || cols > kMaxElements ||
        rows * cols > kMaxElements) {
        throw FormatError("implausible dimensions " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

} // namespace io

/// Tensor file: magic "PFT1", rows and cols as 64-bit little-endian
/// unsigned, then rows*cols 32-bit little-endian IEEE-754 reals row-major.
inline void write_matrix(std::ostream& out, const Matrix& m) {
    out.write("PFT1", 4);
    io::write_u64_le(out, m.rows());
    io::write_u64_le(out, m.cols());
    for (float v : m.data()) io::write_f32_le(out, v);
    if (!out) throw IoError("write failed while serializing tensor");
}

inline Matrix read_matrix(std::istream& in) {
    io::expect_magic(in, "PFT1");
    const std::uint64_t rows = io::read_u64_le(in, "rows");
    const std::uint64_t cols = io::read_u64_le(in, "cols");
    io::check_dims(rows, cols);
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (auto& v : m.data()) v = io::read_f32_le(in, "tensor data");
    return m;
}

inline void save_matrix(const std::filesystem::path& path, const Matrix& m) {
    auto out = io::open_output(path);
    write_matrix(out, m);
}

inline Matrix load_matrix(const std::filesystem::path& path) {
    auto in = io::open_input(path);
    return read_matrix(in);
}

} // namespace peft
