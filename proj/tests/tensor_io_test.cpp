#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "peft/matrix.hpp"
#include "peft/rng.hpp"
#include "peft/tensor_io.hpp"
#include "test_util.hpp"

using namespace peft;
using peft::test::matrices_equal;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("peft_tensor_io_" + name);
}

} // namespace

TEST(TensorIo, RoundTripBitExact) {
    Rng rng(404);
    const Matrix m = gaussian_matrix(rng, 7, 5, 3.0);
    std::stringstream buf;
    write_matrix(buf, m);
    const Matrix back = read_matrix(buf);
    EXPECT_TRUE(matrices_equal(back, m));
}

TEST(TensorIo, ExactByteLayout) {
    // magic + 2 u64 dims + data, little-endian: 1.0f = 00 00 80 3f.
    const Matrix m{{1.0f}};
    std::stringstream buf;
    write_matrix(buf, m);
    const std::string bytes = buf.str();
    ASSERT_EQ(bytes.size(), 4u + 8u + 8u + 4u);
    EXPECT_EQ(bytes.substr(0, 4), "PFT1");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
    for (int i = 5; i < 12; ++i) EXPECT_EQ(bytes[i], '\0');
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 1u);
    for (int i = 13; i < 20; ++i) EXPECT_EQ(bytes[i], '\0');
    EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 0x00);
    EXPECT_EQ(static_cast<unsigned char>(bytes[21]), 0x00);
    EXPECT_EQ(static_cast<unsigned char>(bytes[22]), 0x80);
    EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 0x3f);
}

TEST(TensorIo, FileRoundTrip) {
    Rng rng(405);
    const Matrix m = gaussian_matrix(rng, 3, 9, 1.0);
    const auto path = temp_file("roundtrip.pft");
    save_matrix(path, m);
    const Matrix back = load_matrix(path);
    EXPECT_TRUE(matrices_equal(back, m));
    std::filesystem::remove(path);
}

TEST(TensorIo, BadMagicNamesBoth) {
    std::stringstream buf;
    buf << "NOPE" << std::string(20, '\0');
    try {
        read_matrix(buf);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("PFT1"), std::string::npos) << msg;
        EXPECT_NE(msg.find("NOPE"), std::string::npos) << msg;
    }
}

TEST(TensorIo, TruncatedDataThrows) {
    const Matrix m{{1, 2}, {3, 4}};
    std::stringstream buf;
    write_matrix(buf, m);
    std::string bytes = buf.str();
    bytes.resize(bytes.size() - 3);
    std::stringstream cut(bytes);
    EXPECT_THROW(read_matrix(cut), FormatError);
}

TEST(TensorIo, ImplausibleDimsRejectedBeforeAllocation) {
    std::stringstream buf;
    buf << "PFT1";
    io::write_u64_le(buf, 0xffffffffffffffffULL);
    io::write_u64_le(buf, 2);
    EXPECT_THROW(read_matrix(buf), FormatError);
}

TEST(TensorIo, MissingFileThrowsIoError) {
    EXPECT_THROW(load_matrix("/nonexistent/dir/file.pft"), IoError);
}
