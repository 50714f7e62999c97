#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "peft/adapter_io.hpp"
#include "peft/lora.hpp"
#include "peft/matrix.hpp"
#include "peft/rng.hpp"
#include "test_util.hpp"

namespace {

using peft::LoraAdapter;
using peft::Matrix;
using peft::test::matrices_equal;
using peft::test::matrices_near;

Matrix random_matrix(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    peft::Rng rng(seed);
    return peft::gaussian_matrix(rng, rows, cols, 1.0f);
}

TEST(LoraInit, FreshAdapterIsExactlyTransparent) {
    const LoraAdapter ad = peft::init_lora(16, 12, 4, 0.02f, 7);
    for (std::size_t i = 0; i < ad.a.rows(); ++i) {
        for (std::size_t j = 0; j < ad.a.cols(); ++j) {
            ASSERT_EQ(ad.a(i, j), 0.0f);
        }
    }
    const Matrix x = random_matrix(11, 5, 16);
    const Matrix w = random_matrix(12, 16, 12);
    const Matrix base = peft::matmul(x, w);
    const Matrix adapted = peft::lora_forward(x, w, ad);
    EXPECT_TRUE(matrices_equal(base, adapted));
}

TEST(LoraInit, SameSeedGivesBitIdenticalB) {
    const LoraAdapter first = peft::init_lora(8, 8, 2, 0.02f, 42);
    const LoraAdapter second = peft::init_lora(8, 8, 2, 0.02f, 42);
    EXPECT_TRUE(first.b == second.b);
    const LoraAdapter other = peft::init_lora(8, 8, 2, 0.02f, 43);
    EXPECT_FALSE(first.b == other.b);
}

TEST(LoraInit, BHasConfiguredSpread) {
    const float sigma = 0.05f;
    const LoraAdapter ad = peft::init_lora(4, 4096, 4, sigma, 3);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (float v : ad.b.data()) {
        sum += v;
        sum_sq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(ad.b.data().size());
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 3e-3);
    EXPECT_NEAR(var, static_cast<double>(sigma) * sigma, 3e-4);
}

TEST(LoraInit, RankBoundsEnforced) {
    EXPECT_NO_THROW(peft::init_lora(6, 9, 6, 0.02f, 1));
    EXPECT_THROW(peft::init_lora(6, 9, 0, 0.02f, 1), peft::ShapeError);
    EXPECT_THROW(peft::init_lora(6, 9, 7, 0.02f, 1), peft::ShapeError);
    EXPECT_THROW(peft::init_lora(6, 9, 2, 0.0f, 1), peft::ShapeError);
    EXPECT_THROW(peft::init_lora(6, 9, 2, -0.5f, 1), peft::ShapeError);
}

TEST(LoraForward, FactoredMatchesMaterializedDelta) {
    LoraAdapter ad = peft::init_lora(10, 7, 3, 0.02f, 5);
    ad.a = random_matrix(21, 10, 3);
    const Matrix x = random_matrix(22, 6, 10);
    const Matrix w = random_matrix(23, 10, 7);
    const Matrix factored = peft::lora_forward(x, w, ad);
    const Matrix materialized = peft::matmul(x, peft::add(w, peft::matmul(ad.a, ad.b)));
    EXPECT_TRUE(matrices_near(factored, materialized, 1e-5));
}

TEST(LoraForward, NonzeroABreaksTransparency) {
    LoraAdapter ad = peft::init_lora(10, 7, 3, 0.02f, 5);
    ad.a(0, 0) = 1.0f;
    const Matrix x = random_matrix(31, 4, 10);
    const Matrix w = random_matrix(32, 10, 7);
    const Matrix base = peft::matmul(x, w);
    const Matrix adapted = peft::lora_forward(x, w, ad);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < base.rows(); ++i) {
        for (std::size_t j = 0; j < base.cols(); ++j) {
            max_dev = std::max(max_dev,
                               std::fabs(static_cast<double>(base(i, j)) - adapted(i, j)));
        }
    }
    EXPECT_GT(max_dev, 0.0);
}

TEST(LoraForward, ZeroInputGivesZeroDelta) {
    LoraAdapter ad = peft::init_lora(10, 7, 3, 0.02f, 5);
    ad.a = random_matrix(41, 10, 3);
    const Matrix x(2, 10);
    const Matrix delta = peft::lora_delta_forward(x, ad);
    EXPECT_TRUE(matrices_equal(delta, Matrix(2, 7)));
}

TEST(LoraForward, ShapeMismatchesThrow) {
    const LoraAdapter ad = peft::init_lora(10, 7, 3, 0.02f, 5);
    const Matrix x = random_matrix(51, 4, 9);
    const Matrix w = random_matrix(52, 10, 7);
    EXPECT_THROW(peft::lora_forward(x, w, ad), peft::ShapeError);
    const Matrix x_ok = random_matrix(53, 4, 10);
    const Matrix w_wrong = random_matrix(54, 10, 8);
    EXPECT_THROW(peft::lora_forward(x_ok, w_wrong, ad), peft::ShapeError);
}

TEST(ParamRatio, WorkedValuesAreExact) {
    EXPECT_EQ(peft::param_ratio(4096, 4096, 8), 256.0);
    EXPECT_EQ(peft::param_ratio(1600, 1600, 8), 100.0);
    EXPECT_EQ(peft::param_ratio(8, 8, 8), 0.5);
    EXPECT_DOUBLE_EQ(peft::param_ratio(768, 3072, 16), 38.4);
    EXPECT_THROW(peft::param_ratio(0, 4, 2), peft::ShapeError);
    EXPECT_THROW(peft::param_ratio(4, 0, 2), peft::ShapeError);
    EXPECT_THROW(peft::param_ratio(4, 4, 0), peft::ShapeError);
}

TEST(ParamRatio, RankWindowStaysNearTwoOrdersForLargeSquare) {
    for (std::size_t r = 8; r <= 128; r *= 2) {
        const double ratio = peft::param_ratio(4096, 4096, r);
        EXPECT_EQ(ratio, 2048.0 / static_cast<double>(r));
        EXPECT_GE(ratio, 10.0);
        EXPECT_LE(ratio, 1000.0);
    }
}

TEST(AdapterIo, LoraRoundTripIsBitExact) {
    LoraAdapter ad = peft::init_lora(9, 5, 2, 0.02f, 77);
    ad.a = random_matrix(78, 9, 2);
    std::stringstream stream;
    peft::write_adapter(stream, ad);
    const peft::AnyAdapter back = peft::read_adapter(stream);
    ASSERT_TRUE(std::holds_alternative<LoraAdapter>(back));
    const LoraAdapter& got = std::get<LoraAdapter>(back);
    EXPECT_EQ(got.rank, 2u);
    EXPECT_TRUE(got.a == ad.a);
    EXPECT_TRUE(got.b == ad.b);
}

TEST(AdapterIo, FileRoundTripViaTypedLoader) {
    const std::string path = ::testing::TempDir() + "adapter_roundtrip.pfta";
    LoraAdapter ad = peft::init_lora(6, 6, 3, 0.02f, 101);
    ad.a = random_matrix(102, 6, 3);
    peft::save_adapter(path, peft::AnyAdapter(ad));
    const LoraAdapter got = peft::load_lora_adapter(path);
    EXPECT_TRUE(got.a == ad.a);
    EXPECT_TRUE(got.b == ad.b);
    EXPECT_THROW(peft::load_adalora_adapter(path), peft::FormatError);
    std::remove(path.c_str());
}

TEST(AdapterIo, MissingFileRaisesIoError) {
    EXPECT_THROW(peft::load_adapter("/nonexistent/dir/adapter.pfta"), peft::IoError);
}

TEST(AdapterIo, BadMagicNamesExpectation) {
    std::stringstream stream;
    LoraAdapter ad = peft::init_lora(3, 3, 1, 0.02f, 1);
    peft::write_adapter(stream, ad);
    std::string bytes = stream.str();
    bytes[0] = 'X';
    std::stringstream corrupt(bytes);
    try {
        peft::read_adapter(corrupt);
        FAIL() << "expected FormatError";
    } catch (const peft::FormatError& err) {
        EXPECT_NE(std::string(err.what()).find("PFTA"), std::string::npos);
    }
}

TEST(AdapterIo, UnknownKindRejected) {
    std::stringstream stream;
    LoraAdapter ad = peft::init_lora(3, 3, 1, 0.02f, 1);
    peft::write_adapter(stream, ad);
    std::string bytes = stream.str();
    bytes[4] = 9;
    std::stringstream corrupt(bytes);
    EXPECT_THROW(peft::read_adapter(corrupt), peft::FormatError);
}

TEST(AdapterIo, RankExceedingDimsRejected) {
    std::stringstream stream;
    LoraAdapter ad = peft::init_lora(3, 3, 1, 0.02f, 1);
    peft::write_adapter(stream, ad);
    std::string bytes = stream.str();
    bytes[21] = 9;  // rank field low byte, now 9 > min(3, 3)
    std::stringstream corrupt(bytes);
    EXPECT_THROW(peft::read_adapter(corrupt), peft::FormatError);
}

TEST(AdapterIo, TruncatedStreamRejected) {
    std::stringstream stream;
    LoraAdapter ad = peft::init_lora(4, 4, 2, 0.02f, 1);
    peft::write_adapter(stream, ad);
    const std::string bytes = stream.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() - 7));
    EXPECT_THROW(peft::read_adapter(truncated), peft::FormatError);
}

TEST(AdapterIo, SectionShapeContradictingHeaderRejected) {
    std::stringstream stream;
    stream.write("PFTA", 4);
    peft::io::write_u8(stream, 0);
    peft::io::write_u64_le(stream, 2);  // n
    peft::io::write_u64_le(stream, 2);  // k
    peft::io::write_u64_le(stream, 1);  // r
    peft::write_matrix(stream, Matrix(3, 1));  // A should be 2x1
    peft::write_matrix(stream, Matrix(1, 2));
    try {
        peft::read_adapter(stream);
        FAIL() << "expected FormatError";
    } catch (const peft::FormatError& err) {
        EXPECT_NE(std::string(err.what()).find("section A"), std::string::npos);
    }
}

} // namespace
