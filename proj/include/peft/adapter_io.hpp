#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <variant>

#include "peft/adalora.hpp"
#include "peft/errors.hpp"
#include "peft/lora.hpp"
#include "peft/tensor_io.hpp"

namespace peft {

/// Adapter checkpoint layout (PFTA, little-endian):
///   magic "PFTA" | kind u8 | dims and rank as u64 | factor sections
/// kind 0: n, k, r then A (n x r) and B (r x k), each a full PFT1 section.
/// kind 1: d1, d2, r then P (d1 x r), lambda (1 x r), Q (r x d2) as PFT1.

inline constexpr std::uint8_t kAdapterKindLora = 0;
inline constexpr std::uint8_t kAdapterKindAdaLora = 1;

using AnyAdapter = std::variant<LoraAdapter, AdaLoraAdapter>;

inline void write_adapter(std::ostream& out, const LoraAdapter& ad) {
    out.write("PFTA", 4);
    io::write_u8(out, kAdapterKindLora);
    io::write_u64_le(out, ad.n());
    io::write_u64_le(out, ad.k());
    io::write_u64_le(out, ad.rank);
    write_matrix(out, ad.a);
    write_matrix(out, ad.b);
    if (!out) {
        throw IoError("write_adapter: stream failure");
    }
}

inline void write_adapter(std::ostream& out, const AdaLoraAdapter& ad) {
    out.write("PFTA", 4);
    io::write_u8(out, kAdapterKindAdaLora);
    io::write_u64_le(out, ad.d1());
    io::write_u64_le(out, ad.d2());
    io::write_u64_le(out, ad.max_rank());
    write_matrix(out, ad.p);
    Matrix lam(1, ad.max_rank());
    for (std::size_t i = 0; i < ad.max_rank(); ++i) {
        lam(0, i) = ad.lambda[i];
    }
    write_matrix(out, lam);
    write_matrix(out, ad.q);
    if (!out) {
        throw IoError("write_adapter: stream failure");
    }
}

inline void write_adapter(std::ostream& out, const AnyAdapter& ad) {
    std::visit([&](const auto& a) { write_adapter(out, a); }, ad);
}

namespace detail {

inline void expect_section_shape(const Matrix& m, std::size_t rows, std::size_t cols,
                                 const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
        throw FormatError("read_adapter: section " + name + " is " + m.shape_str() +
                          ", header promised (" + std::to_string(rows) + "x" +
                          std::to_string(cols) + ")");
    }
}

} // namespace detail

inline AnyAdapter read_adapter(std::istream& in) {
    io::expect_magic(in, "PFTA");
    const std::uint8_t kind = io::read_u8(in, "adapter kind");
    const std::uint64_t dim_a = io::read_u64_le(in, "first dimension");
    const std::uint64_t dim_b = io::read_u64_le(in, "second dimension");
    const std::uint64_t rank = io::read_u64_le(in, "rank");
    io::check_dims(dim_a, dim_b);
    if (rank < 1 || rank > std::min(dim_a, dim_b)) {
        throw FormatError("read_adapter: rank " + std::to_string(rank) + " outside [1, min(" +
                          std::to_string(dim_a) + ", " + std::to_string(dim_b) + ")]");
    }
    if (kind == kAdapterKindLora) {
        LoraAdapter ad;
        ad.rank = static_cast<std::size_t>(rank);
        ad.a = read_matrix(in);
        detail::expect_section_shape(ad.a, dim_a, rank, "A");
        ad.b = read_matrix(in);
        detail::expect_section_shape(ad.b, rank, dim_b, "B");
        return ad;
    }
    if (kind == kAdapterKindAdaLora) {
        AdaLoraAdapter ad;
        ad.p = read_matrix(in);
        detail::expect_section_shape(ad.p, dim_a, rank, "P");
        const Matrix lam = read_matrix(in);
        detail::expect_section_shape(lam, 1, rank, "lambda");
        ad.lambda.assign(lam.data().begin(), lam.data().end());
        ad.q = read_matrix(in);
        detail::expect_section_shape(ad.q, rank, dim_b, "Q");
        return ad;
    }
    throw FormatError("read_adapter: unknown adapter kind " + std::to_string(kind));
}

inline void save_adapter(const std::string& path, const AnyAdapter& ad) {
    auto out = io::open_output(path);
    write_adapter(out, ad);
    if (!out) {
        throw IoError("save_adapter: failed writing " + path);
    }
}

inline AnyAdapter load_adapter(const std::string& path) {
    auto in = io::open_input(path);
    return read_adapter(in);
}

inline LoraAdapter load_lora_adapter(const std::string& path) {
    AnyAdapter any = load_adapter(path);
    if (auto* ad = std::get_if<LoraAdapter>(&any)) {
        return std::move(*ad);
    }
    throw FormatError("load_lora_adapter: " + path + " holds a different adapter kind");
}

inline AdaLoraAdapter load_adalora_adapter(const std::string& path) {
    AnyAdapter any = load_adapter(path);
    if (auto* ad = std::get_if<AdaLoraAdapter>(&any)) {
        return std::move(*ad);
    }
    throw FormatError("load_adalora_adapter: " + path + " holds a different adapter kind");
}

} // namespace peft
