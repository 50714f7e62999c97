#pragma once

#include <algorithm>
#include <array>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "peft/errors.hpp"
#include "peft/matrix.hpp"
#include "peft/tensor_io.hpp"

namespace peft {

enum class QuantMode : std::uint8_t { asymmetric, symmetric };

enum class Codec : std::uint8_t { affine_int8 = 0, affine_int4 = 1, nf4 = 2 };

/// Round-half-to-even. std::nearbyint follows the ambient rounding mode,
/// which is FE_TONEAREST (ties-to-even) unless someone changed it; nothing
/// in this library does.
inline double round_half_even(double x) { return std::nearbyint(x); }

/// Affine quantization constants for one tensor or one block.
///
/// Quantization: code = clamp(round(x/S + Z), q_min, q_max)
/// Dequantization: x = S * (code - Z)
struct AffineParams {
    float scale = 1.0f;           // S, stored full-precision
    std::int8_t zero_point = 0;   // Z, stored in the quantized integer type
    int q_min = 0;
    int q_max = 0;
    float r_min = 0.0f;
    float r_max = 0.0f;
    QuantMode mode = QuantMode::asymmetric;
};

namespace detail {

inline void affine_code_range(int bits, QuantMode mode, int& q_min, int& q_max) {
    const int half = 1 << (bits - 1); // 128 or 8
    if (mode == QuantMode::asymmetric) {
        q_min = -half;
        q_max = half - 1;
    } else {
        // Symmetric sacrifices one code: int8 uses [-127, 127], int4 [-7, 7].
        q_min = -(half - 1);
        q_max = half - 1;
    }
}

} // namespace detail

/// Calibrate affine constants from observed values.
///
/// Asymmetric mode uses the observed min/max, extended to include zero:
/// exact-zero representability (code == Z for x == 0) is an invariant of
/// every codec here, and it also keeps Z inside [q_min, q_max] without
/// clamping. For weight tensors, which straddle zero, the extension is a
/// no-op. Symmetric mode uses max |value|.
///
/// Degenerate inputs (all values equal): an all-zero input falls back to
/// S = 1, Z = 0; a non-zero constant c uses S = |c|/q_max, Z = 0, which
/// reconstructs c exactly (an integer zero-point with S = 1 could not).
inline AffineParams compute_affine_params(std::span<const float> values, int bits,
                                          QuantMode mode) {
    if (values.empty()) {
        throw ShapeError("compute_affine_params: empty input");
    }
    if (bits != 4 && bits != 8) {
        throw ShapeError("compute_affine_params: bits must be 4 or 8, got " +
                         std::to_string(bits));
    }
    AffineParams p;
    p.mode = mode;
    detail::affine_code_range(bits, mode, p.q_min, p.q_max);

    float lo = values[0], hi = values[0];
    for (float v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    p.r_min = lo;
    p.r_max = hi;

    if (mode == QuantMode::symmetric) {
        const double amax = std::max(std::abs(static_cast<double>(lo)),
                                     std::abs(static_cast<double>(hi)));
        p.scale = amax == 0.0
                      ? 1.0f
                      : std::max(static_cast<float>(amax / p.q_max),
                                 std::numeric_limits<float>::min());
        p.zero_point = 0;
        return p;
    }

    const double ext_lo = std::min(0.0, static_cast<double>(lo));
    const double ext_hi = std::max(0.0, static_cast<double>(hi));
    const double range = ext_hi - ext_lo;
    if (range == 0.0) {
        // All values equal. Zero constant: identity fallback. Non-zero
        // constant c: S = |c| puts c exactly on code +/-1, and multiplying
        // by +/-1 is exact, so the constant reconstructs bit-for-bit.
        const float c = lo;
        p.scale = c == 0.0f ? 1.0f : std::abs(c);
        p.zero_point = 0;
        return p;
    }
    p.scale = std::max(static_cast<float>(range / (p.q_max - p.q_min)),
                       std::numeric_limits<float>::min());
    // Z from the exact ratio rather than the rounded scale: the two agree to
    // within rounding noise, but the ratio keeps clean halfway cases (e.g.
    // range [-1, 1] at 8 bits gives exactly -0.5, which ties-to-even to 0).
    const double z = p.q_min - ext_lo * (p.q_max - p.q_min) / range;
    p.zero_point = static_cast<std::int8_t>(
        std::clamp(static_cast<int>(round_half_even(z)), p.q_min, p.q_max));
    return p;
}

/// code = clamp(round(x/S + Z), q_min, q_max), round-half-to-even.
/// Out-of-range values clamp rather than error: ranges are calibrated from
/// the data, so overflow only arises from user-supplied params.
inline std::int8_t quantize_affine_value(float x, const AffineParams& p) {
    const double u = static_cast<double>(x) / static_cast<double>(p.scale) + p.zero_point;
    const double r = round_half_even(u);
    // Clamp before the integer cast: a huge x over a tiny scale must saturate,
    // not overflow.
    if (r <= p.q_min) return static_cast<std::int8_t>(p.q_min);
    if (r >= p.q_max) return static_cast<std::int8_t>(p.q_max);
    return static_cast<std::int8_t>(static_cast<int>(r));
}

/// x = S * (code - Z).
inline float dequantize_affine_value(std::int8_t code, const AffineParams& p) {
    return static_cast<float>(static_cast<double>(p.scale) * (code - p.zero_point));
}

inline std::vector<std::int8_t> quantize_affine(const Matrix& x, const AffineParams& p) {
    std::vector<std::int8_t> codes(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) codes[i] = quantize_affine_value(x.data()[i], p);
    return codes;
}

inline Matrix dequantize_affine(std::span<const std::int8_t> codes, std::size_t rows,
                                std::size_t cols, const AffineParams& p) {
    if (codes.size() != rows * cols) {
        throw ShapeError("dequantize_affine: " + std::to_string(codes.size()) +
                         " codes for a (" + std::to_string(rows) + "x" + std::to_string(cols) +
                         ") matrix");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        m.data()[i] = dequantize_affine_value(codes[i], p);
    }
    return m;
}

// ---------------------------------------------------------------------------
// NF4 codebook
// ---------------------------------------------------------------------------

/// 16 levels in [-1, 1]: exact -1, seven strictly negative interior levels,
/// exact 0, six strictly positive interior levels, exact +1; strictly
/// increasing.
struct Nf4Codebook {
    std::array<float, 16> levels;

    /// Index of the level nearest to x; ties resolve to the lower index.
    int nearest(float x) const {
        int best = 0;
        float best_dist = std::abs(x - levels[0]);
        for (int i = 1; i < 16; ++i) {
            const float d = std::abs(x - levels[i]);
            if (d < best_dist) {
                best = i;
                best_dist = d;
            }
        }
        return best;
    }

    /// Largest spacing between adjacent levels (reconstruction error bound:
    /// max_gap/2 in normalized units).
    float max_gap() const {
        float g = 0.0f;
        for (int i = 1; i < 16; ++i) g = std::max(g, levels[i] - levels[i - 1]);
        return g;
    }
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Inverse standard-normal CDF by Newton iteration on erfc; accurate to
/// ~1e-15 over the probabilities used here (all well inside (0, 1)).
inline double probit(double p) {
    double x = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        const double step = (normal_cdf(x) - p) / pdf;
        x -= step;
        if (std::abs(step) < 1e-14) return x;
    }
    throw ConvergenceError("probit: Newton failed to converge for p=" + std::to_string(p));
}

} // namespace detail

/// Information-theoretically motivated 4-bit codebook: the negative levels
/// are the 8 evenly-spaced-in-probability quantiles of a standard normal
/// restricted to the negative half-axis (p = (i+0.5)/8), rescaled so the
/// extreme quantile lands exactly on -1; the positive side likewise with 7
/// quantiles (p = (i+0.5)/7) rescaled onto +1; an exact zero level sits in
/// between. The resulting constants are frozen in tests/golden/nf4_levels.txt.
inline const Nf4Codebook& build_nf4_codebook() {
    static const Nf4Codebook codebook = [] {
        Nf4Codebook cb{};
        std::array<double, 8> neg{};
        for (int i = 0; i < 8; ++i) neg[i] = detail::probit(((i + 0.5) / 8.0) / 2.0);
        const double neg_scale = -neg[0];
        std::array<double, 7> pos{};
        for (int i = 0; i < 7; ++i) pos[i] = detail::probit(0.5 + ((i + 0.5) / 7.0) / 2.0);
        const double pos_scale = pos[6];
        cb.levels[0] = -1.0f;
        for (int i = 1; i < 8; ++i) cb.levels[i] = static_cast<float>(neg[i] / neg_scale);
        cb.levels[8] = 0.0f;
        for (int i = 0; i < 6; ++i) cb.levels[9 + i] = static_cast<float>(pos[i] / pos_scale);
        cb.levels[15] = 1.0f;
        return cb;
    }();
    return codebook;
}

// ---------------------------------------------------------------------------
// Block-quantized tensors
// ---------------------------------------------------------------------------

/// A quantized matrix: codes packed per block (two 4-bit codes per byte, low
/// nibble first, each block padded to whole bytes), one scale per block
/// (plus a zero-point for asymmetric affine), with the scales optionally
/// double-quantized (8-bit symmetric codes in super_block groups plus one
/// second-level scale per group).
///
/// Blocks run over the flattened row-major data:
/// block b covers flat indices [b*block_size, min((b+1)*block_size, n)).
struct QuantizedTensor {
    Codec codec = Codec::affine_int8;
    QuantMode mode = QuantMode::symmetric; // meaningful for affine codecs only
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t block_size = 0;
    std::vector<std::uint8_t> packed;      // packed codes
    std::vector<float> scales;             // per block, empty when double_quant
    std::vector<std::int8_t> zero_points;  // per block, asymmetric affine only
    bool double_quant = false;
    std::size_t super_block = 0;           // group size for double quantization
    std::vector<std::int8_t> scale_codes;  // per block, when double_quant
    std::vector<float> super_scales;       // per group, when double_quant

    std::size_t elements() const { return rows * cols; }
    std::size_t num_blocks() const {
        return block_size == 0 ? 0 : (elements() + block_size - 1) / block_size;
    }
    int bits() const { return codec == Codec::affine_int8 ? 8 : 4; }
};

namespace detail {

inline std::size_t block_count(std::size_t n, std::size_t bs) {
    return bs == 0 ? 0 : (n + bs - 1) / bs;
}

inline std::size_t packed_bytes(int bits, std::size_t n, std::size_t bs) {
    if (n == 0) return 0;
    if (bits == 8) return n;
    const std::size_t nblocks = block_count(n, bs);
    const std::size_t last = n - (nblocks - 1) * bs;
    return (nblocks - 1) * ((bs + 1) / 2) + (last + 1) / 2;
}

/// Pack one block's 4-bit codes (values must fit in 4 bits two's-complement
/// for affine, or be 0..15 for nf4 indices), low nibble first.
inline void pack_block_4bit(std::span<const std::int8_t> codes, std::vector<std::uint8_t>& out) {
    for (std::size_t i = 0; i < codes.size(); i += 2) {
        std::uint8_t byte = static_cast<std::uint8_t>(codes[i]) & 0x0f;
        if (i + 1 < codes.size()) {
            byte |= static_cast<std::uint8_t>(static_cast<std::uint8_t>(codes[i + 1]) & 0x0f) << 4;
        }
        out.push_back(byte);
    }
}

inline std::int8_t sign_extend_nibble(std::uint8_t nibble) {
    return static_cast<std::int8_t>((nibble ^ 0x8) - 0x8);
}

} // namespace detail

/// Per-element codes, unpacked: signed for affine codecs, 0..15 for nf4.
inline std::vector<std::int8_t> unpack_codes(const QuantizedTensor& qt) {
    const std::size_t n = qt.elements();
    std::vector<std::int8_t> codes(n);
    if (qt.bits() == 8) {
        for (std::size_t i = 0; i < n; ++i) codes[i] = static_cast<std::int8_t>(qt.packed[i]);
        return codes;
    }
    const std::size_t nblocks = qt.num_blocks();
    std::size_t byte_pos = 0;
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t begin = b * qt.block_size;
        const std::size_t end = std::min(begin + qt.block_size, n);
        for (std::size_t i = begin; i < end; ++i) {
            const std::size_t offset = i - begin;
            const std::uint8_t byte = qt.packed[byte_pos + offset / 2];
            const std::uint8_t nibble = (offset % 2 == 0) ? (byte & 0x0f) : (byte >> 4);
            codes[i] = qt.codec == Codec::nf4 ? static_cast<std::int8_t>(nibble)
                                              : detail::sign_extend_nibble(nibble);
        }
        byte_pos += (end - begin + 1) / 2;
    }
    return codes;
}

/// Reconstruct the per-block scales, inverting double quantization when
/// present.
inline std::vector<float> effective_scales(const QuantizedTensor& qt) {
    if (!qt.double_quant) return qt.scales;
    std::vector<float> out(qt.scale_codes.size());
    for (std::size_t b = 0; b < qt.scale_codes.size(); ++b) {
        const float s2 = qt.super_scales[b / qt.super_block];
        out[b] = static_cast<float>(static_cast<double>(s2) * qt.scale_codes[b]);
    }
    return out;
}

/// Quantize the first-level scales themselves: 8-bit symmetric affine in
/// groups of super_block, one second-level scale per group. Returned as a
/// 1 x n quantized tensor whose dequantization reproduces the input scales.
///
/// Scale codes are clamped to at least 1 so no reconstructed scale can
/// collapse to zero (scale > 0 is a type invariant); for any scale at least
/// half its group's second-level scale, the usual round-half-even code is
/// unaffected and reconstruction stays within second-level S/2.
inline QuantizedTensor double_quantize_scales(std::span<const float> scales,
                                              std::size_t super_block) {
    if (super_block == 0) {
        throw ShapeError("double_quantize_scales: super_block must be >= 1");
    }
    QuantizedTensor qt;
    qt.codec = Codec::affine_int8;
    qt.mode = QuantMode::symmetric;
    qt.rows = 1;
    qt.cols = scales.size();
    qt.block_size = super_block;
    const std::size_t ngroups = detail::block_count(scales.size(), super_block);
    qt.packed.resize(scales.size());
    qt.scales.resize(ngroups);
    for (std::size_t g = 0; g < ngroups; ++g) {
        const std::size_t begin = g * super_block;
        const std::size_t end = std::min(begin + super_block, scales.size());
        const AffineParams p = compute_affine_params(
            scales.subspan(begin, end - begin), 8, QuantMode::symmetric);
        qt.scales[g] = p.scale;
        for (std::size_t i = begin; i < end; ++i) {
            const std::int8_t code = quantize_affine_value(scales[i], p);
            qt.packed[i] = static_cast<std::uint8_t>(std::max<std::int8_t>(code, 1));
        }
    }
    return qt;
}

namespace detail {

/// Shared skeleton: calibrate per block, optionally double-quantize the
/// scales, then encode each block against the scale the decoder will
/// actually see (the reconstructed one when double quantization is on).
template <typename Calibrate, typename Encode>
QuantizedTensor quantize_blockwise(const Matrix& x, Codec codec, QuantMode mode,
                                   std::size_t block_size, bool double_quant,
                                   std::size_t super_block, Calibrate calibrate,
                                   Encode encode) {
    if (block_size == 0) {
        throw ShapeError("quantize: block_size must be >= 1");
    }
    QuantizedTensor qt;
    qt.codec = codec;
    qt.mode = mode;
    qt.rows = x.rows();
    qt.cols = x.cols();
    qt.block_size = block_size;
    const std::size_t n = x.size();
    const std::size_t nblocks = block_count(n, block_size);

    std::vector<float> scales(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t begin = b * block_size;
        const std::size_t end = std::min(begin + block_size, n);
        scales[b] = calibrate(std::span<const float>(x.data()).subspan(begin, end - begin));
    }

    if (double_quant) {
        qt.double_quant = true;
        qt.super_block = super_block;
        QuantizedTensor second = double_quantize_scales(scales, super_block);
        qt.scale_codes.resize(nblocks);
        for (std::size_t b = 0; b < nblocks; ++b) {
            qt.scale_codes[b] = static_cast<std::int8_t>(second.packed[b]);
        }
        qt.super_scales = second.scales;
        scales = effective_scales(qt);
    } else {
        qt.scales = scales;
    }

    qt.packed.reserve(packed_bytes(qt.bits(), n, block_size));
    for (std::size_t b = 0; b < nblocks; ++b) {
        const std::size_t begin = b * block_size;
        const std::size_t end = std::min(begin + block_size, n);
        encode(std::span<const float>(x.data()).subspan(begin, end - begin), scales[b], b, qt);
    }
    return qt;
}

} // namespace detail

/// Blockwise affine quantization: independent AffineParams per block of the
/// flattened tensor. block_size == rows*cols degenerates to whole-tensor
/// quantization; block_size == 1 reconstructs exactly.
inline QuantizedTensor quantize_blockwise_affine(const Matrix& x, int bits, QuantMode mode,
                                                 std::size_t block_size,
                                                 bool double_quant = false,
                                                 std::size_t super_block = 256) {
    if (bits != 4 && bits != 8) {
        throw ShapeError("quantize_blockwise_affine: bits must be 4 or 8, got " +
                         std::to_string(bits));
    }
    const Codec codec = bits == 8 ? Codec::affine_int8 : Codec::affine_int4;
    QuantizedTensor qt = detail::quantize_blockwise(
        x, codec, mode, block_size, double_quant, super_block,
        /*calibrate=*/
        [&](std::span<const float> block) {
            return compute_affine_params(block, bits, mode).scale;
        },
        /*encode=*/
        [&](std::span<const float> block, float eff_scale, std::size_t b, QuantizedTensor& out) {
            AffineParams p = compute_affine_params(block, bits, mode);
            if (eff_scale != p.scale) {
                // Double quantization altered the scale; re-derive the
                // zero-point against the scale the decoder will actually
                // use, so the S/2 error bound holds against it.
                p.scale = eff_scale;
                if (mode == QuantMode::asymmetric) {
                    const double ext_lo = std::min(0.0, static_cast<double>(p.r_min));
                    const double z = p.q_min - ext_lo / static_cast<double>(eff_scale);
                    p.zero_point = static_cast<std::int8_t>(
                        std::clamp(static_cast<int>(round_half_even(z)), p.q_min, p.q_max));
                }
            }
            if (mode == QuantMode::asymmetric) {
                out.zero_points.push_back(p.zero_point);
            }
            std::vector<std::int8_t> codes(block.size());
            for (std::size_t i = 0; i < block.size(); ++i) {
                codes[i] = quantize_affine_value(block[i], p);
            }
            if (bits == 8) {
                for (std::int8_t c : codes) out.packed.push_back(static_cast<std::uint8_t>(c));
            } else {
                detail::pack_block_4bit(codes, out.packed);
            }
            (void)b;
        });
    return qt;
}

/// Blockwise NF4 quantization: per block, scale = max |value| (fallback 1
/// for an all-zero block); values normalized by the scale map to the nearest
/// codebook level (ties to the lower index); 4-bit level indices packed two
/// per byte, low nibble first.
inline QuantizedTensor quantize_nf4(const Matrix& x, std::size_t block_size,
                                    bool double_quant = false, std::size_t super_block = 256) {
    const Nf4Codebook& cb = build_nf4_codebook();
    return detail::quantize_blockwise(
        x, Codec::nf4, QuantMode::symmetric, block_size, double_quant, super_block,
        /*calibrate=*/
        [](std::span<const float> block) {
            float amax = 0.0f;
            for (float v : block) amax = std::max(amax, std::abs(v));
            return amax == 0.0f ? 1.0f : std::max(amax, std::numeric_limits<float>::min());
        },
        /*encode=*/
        [&](std::span<const float> block, float eff_scale, std::size_t, QuantizedTensor& out) {
            std::vector<std::int8_t> codes(block.size());
            for (std::size_t i = 0; i < block.size(); ++i) {
                const float normalized =
                    static_cast<float>(static_cast<double>(block[i]) / eff_scale);
                codes[i] = static_cast<std::int8_t>(cb.nearest(normalized));
            }
            detail::pack_block_4bit(codes, out.packed);
        });
}

namespace detail {

inline void validate(const QuantizedTensor& qt) {
    if (qt.block_size == 0) throw FormatError("quantized tensor: block_size is 0");
    const std::size_t n = qt.elements();
    const std::size_t nblocks = qt.num_blocks();
    if (qt.packed.size() != packed_bytes(qt.bits(), n, qt.block_size)) {
        throw FormatError("quantized tensor: wrong code byte count");
    }
    if (qt.double_quant) {
        if (qt.super_block == 0) throw FormatError("quantized tensor: super_block is 0");
        if (qt.scale_codes.size() != nblocks ||
            qt.super_scales.size() != block_count(nblocks, qt.super_block)) {
            throw FormatError("quantized tensor: wrong constants count");
        }
        for (std::int8_t c : qt.scale_codes) {
            if (c < 1) throw FormatError("quantized tensor: scale code below 1");
        }
        for (float s : qt.super_scales) {
            if (!(s > 0.0f) || !std::isfinite(s)) {
                throw FormatError("quantized tensor: non-positive second-level scale");
            }
        }
    } else {
        if (qt.scales.size() != nblocks) {
            throw FormatError("quantized tensor: wrong constants count");
        }
        for (float s : qt.scales) {
            if (!(s > 0.0f) || !std::isfinite(s)) {
                throw FormatError("quantized tensor: non-positive scale");
            }
        }
    }
    const bool asym = qt.codec != Codec::nf4 && qt.mode == QuantMode::asymmetric;
    if (qt.zero_points.size() != (asym ? nblocks : 0)) {
        throw FormatError("quantized tensor: wrong zero-point count");
    }
    int q_min = 0, q_max = 0;
    if (qt.codec != Codec::nf4) {
        affine_code_range(qt.bits(), qt.mode, q_min, q_max);
        for (std::int8_t z : qt.zero_points) {
            if (z < q_min || z > q_max) {
                throw FormatError("quantized tensor: zero-point out of code range");
            }
        }
        for (std::int8_t c : unpack_codes(qt)) {
            if (c < q_min || c > q_max) {
                throw FormatError("quantized tensor: code out of range [" +
                                  std::to_string(q_min) + ", " + std::to_string(q_max) + "]");
            }
        }
    }
}

} // namespace detail

/// Invert the full codec chain (including double quantization) back to a
/// dense matrix. Throws FormatError on corrupt codes or constants.
inline Matrix dequantize(const QuantizedTensor& qt) {
    const std::size_t n = qt.elements();
    Matrix m(qt.rows, qt.cols);
    if (n == 0) return m;
    detail::validate(qt);
    const std::vector<float> scales = effective_scales(qt);
    const std::vector<std::int8_t> codes = unpack_codes(qt);
    const bool asym = qt.codec != Codec::nf4 && qt.mode == QuantMode::asymmetric;
    const Nf4Codebook& cb = build_nf4_codebook();
    for (std::size_t b = 0; b < qt.num_blocks(); ++b) {
        const std::size_t begin = b * qt.block_size;
        const std::size_t end = std::min(begin + qt.block_size, n);
        const double s = scales[b];
        const int z = asym ? qt.zero_points[b] : 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (qt.codec == Codec::nf4) {
                m.data()[i] = static_cast<float>(s * cb.levels[static_cast<int>(codes[i])]);
            } else {
                m.data()[i] = static_cast<float>(s * (codes[i] - z));
            }
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Storage accounting and serialization
// ---------------------------------------------------------------------------

struct StorageReport {
    std::size_t code_bytes = 0;
    std::size_t constant_bytes = 0;
    std::size_t header_bytes = 0;
    std::size_t total_bytes = 0;
    double compression_ratio = 0.0; // dense 32-bit bytes / total_bytes
};

/// Exact byte accounting of the serialized form (header + codes +
/// constants); compression_ratio compares against a dense 32-bit tensor.
inline StorageReport storage_report(const QuantizedTensor& qt) {
    StorageReport r;
    r.code_bytes = detail::packed_bytes(qt.bits(), qt.elements(), qt.block_size);
    const std::size_t nblocks = qt.num_blocks();
    if (qt.double_quant) {
        r.constant_bytes = 8 /*super_block*/ + nblocks /*scale codes*/ +
                           detail::block_count(nblocks, qt.super_block) * 4 /*super scales*/;
    } else {
        r.constant_bytes = nblocks * 4;
    }
    if (qt.codec != Codec::nf4 && qt.mode == QuantMode::asymmetric) {
        r.constant_bytes += nblocks; // zero points
    }
    r.header_bytes = 4 /*magic*/ + 1 /*codec*/ + 1 /*flags*/ + 8 * 3 /*dims, block_size*/;
    r.total_bytes = r.header_bytes + r.code_bytes + r.constant_bytes;
    const double dense = static_cast<double>(qt.elements()) * 4.0;
    r.compression_ratio = dense > 0.0 ? dense / static_cast<double>(r.total_bytes) : 0.0;
    return r;
}

namespace detail {
constexpr std::uint8_t kFlagDoubleQuant = 0x01;
constexpr std::uint8_t kFlagAsymmetric = 0x02;
} // namespace detail

/// Quantized tensor file: magic "PFTQ", codec byte (0 = affine_int8,
/// 1 = affine_int4, 2 = nf4), flags byte (bit 0 = double-quantized
/// constants, bit 1 = asymmetric affine), dims (2 x u64 LE), block_size
/// (u64 LE), packed codes, then the constants section (double-quantized:
/// super_block u64, per-block int8 scale codes, per-group f32 second-level
/// scales; otherwise per-block f32 scales; asymmetric affine appends
/// per-block int8 zero-points).
inline void write_quantized(std::ostream& out, const QuantizedTensor& qt) {
    detail::validate(qt);
    out.write("PFTQ", 4);
    io::write_u8(out, static_cast<std::uint8_t>(qt.codec));
    std::uint8_t flags = 0;
    if (qt.double_quant) flags |= detail::kFlagDoubleQuant;
    if (qt.codec != Codec::nf4 && qt.mode == QuantMode::asymmetric) {
        flags |= detail::kFlagAsymmetric;
    }
    io::write_u8(out, flags);
    io::write_u64_le(out, qt.rows);
    io::write_u64_le(out, qt.cols);
    io::write_u64_le(out, qt.block_size);
    out.write(reinterpret_cast<const char*>(qt.packed.data()),
              static_cast<std::streamsize>(qt.packed.size()));
    if (qt.double_quant) {
        io::write_u64_le(out, qt.super_block);
        for (std::int8_t c : qt.scale_codes) io::write_u8(out, static_cast<std::uint8_t>(c));
        for (float s : qt.super_scales) io::write_f32_le(out, s);
    } else {
        for (float s : qt.scales) io::write_f32_le(out, s);
    }
    for (std::int8_t z : qt.zero_points) io::write_u8(out, static_cast<std::uint8_t>(z));
    if (!out) throw IoError("write failed while serializing quantized tensor");
}

inline QuantizedTensor read_quantized(std::istream& in) {
    io::expect_magic(in, "PFTQ");
    QuantizedTensor qt;
    const std::uint8_t codec = io::read_u8(in, "codec");
    if (codec > 2) throw FormatError("unknown codec byte " + std::to_string(codec));
    qt.codec = static_cast<Codec>(codec);
    const std::uint8_t flags = io::read_u8(in, "flags");
    if (flags & ~(detail::kFlagDoubleQuant | detail::kFlagAsymmetric)) {
        throw FormatError("unknown flag bits in quantized tensor");
    }
    qt.double_quant = (flags & detail::kFlagDoubleQuant) != 0;
    const bool asym = (flags & detail::kFlagAsymmetric) != 0;
    if (asym && qt.codec == Codec::nf4) {
        throw FormatError("asymmetric flag is invalid for the nf4 codec");
    }
    qt.mode = asym ? QuantMode::asymmetric : QuantMode::symmetric;
    const std::uint64_t rows = io::read_u64_le(in, "rows");
    const std::uint64_t cols = io::read_u64_le(in, "cols");
    io::check_dims(rows, cols);
    qt.rows = static_cast<std::size_t>(rows);
    qt.cols = static_cast<std::size_t>(cols);
    qt.block_size = static_cast<std::size_t>(io::read_u64_le(in, "block_size"));
    if (qt.block_size == 0) throw FormatError("quantized tensor: block_size is 0");
    const std::size_t nbytes = detail::packed_bytes(qt.bits(), qt.elements(), qt.block_size);
    qt.packed.resize(nbytes);
    for (auto& b : qt.packed) b = io::read_u8(in, "packed codes");
    const std::size_t nblocks = qt.num_blocks();
    if (qt.double_quant) {
        qt.super_block = static_cast<std::size_t>(io::read_u64_le(in, "super_block"));
        if (qt.super_block == 0) throw FormatError("quantized tensor: super_block is 0");
        qt.scale_codes.resize(nblocks);
        for (auto& c : qt.scale_codes) {
            c = static_cast<std::int8_t>(io::read_u8(in, "scale codes"));
        }
        qt.super_scales.resize(detail::block_count(nblocks, qt.super_block));
        for (auto& s : qt.super_scales) s = io::read_f32_le(in, "second-level scales");
    } else {
        qt.scales.resize(nblocks);
        for (auto& s : qt.scales) s = io::read_f32_le(in, "scales");
    }
    if (asym) {
        qt.zero_points.resize(nblocks);
        for (auto& z : qt.zero_points) {
            z = static_cast<std::int8_t>(io::read_u8(in, "zero points"));
        }
    }
    detail::validate(qt);
    return qt;
}

inline void save_quantized(const std::filesystem::path& path, const QuantizedTensor& qt) {
    auto out = io::open_output(path);
    write_quantized(out, qt);
}

inline QuantizedTensor load_quantized(const std::filesystem::path& path) {
    auto in = io::open_input(path);
    return read_quantized(in);
}

} // namespace peft
