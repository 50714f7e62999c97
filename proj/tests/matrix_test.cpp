#include <gtest/gtest.h>

#include <cstdint>
#include <set>

#include "peft/matrix.hpp"
#include "peft/rng.hpp"
#include "test_util.hpp"

using namespace peft;
using peft::test::matrices_equal;
using peft::test::matrices_near;

TEST(Matmul, WorkedExample) {
    // [[1,2],[3,4]] * [[5],[6]] = [[17],[39]]
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{5}, {6}};
    const Matrix c = matmul(a, b);
    const Matrix expected{{17}, {39}};
    EXPECT_TRUE(matrices_equal(c, expected));
}

TEST(Matmul, IdentityIsNeutral) {
    Rng rng(42);
    const Matrix a = gaussian_matrix(rng, 5, 7, 1.0);
    EXPECT_TRUE(matrices_equal(matmul(identity<float>(5), a), a));
    EXPECT_TRUE(matrices_equal(matmul(a, identity<float>(7)), a));
}

TEST(Matmul, ZeroAnnihilates) {
    Rng rng(7);
    const Matrix a = gaussian_matrix(rng, 4, 6, 1.0);
    const Matrix z(6, 3);
    const Matrix c = matmul(a, z);
    EXPECT_TRUE(matrices_equal(c, Matrix(4, 3)));
}

TEST(Matmul, AssociativityWithinTolerance) {
    // (AB)C == A(BC) up to float round-off.
    Rng rng(123);
    const Matrix a = gaussian_matrix(rng, 4, 5, 1.0);
    const Matrix b = gaussian_matrix(rng, 5, 6, 1.0);
    const Matrix c = gaussian_matrix(rng, 6, 3, 1.0);
    EXPECT_TRUE(matrices_near(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), 1e-4));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    const Matrix a(2, 3);
    const Matrix b(4, 2);
    try {
        matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2x3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(4x2)"), std::string::npos) << msg;
    }
}

TEST(Matmul, DeterministicAcrossRepeats) {
    Rng rng(99);
    const Matrix a = gaussian_matrix(rng, 16, 16, 1.0);
    const Matrix b = gaussian_matrix(rng, 16, 16, 1.0);
    const Matrix first = matmul(a, b);
    for (int i = 0; i < 5; ++i) {
        EXPECT_TRUE(matrices_equal(matmul(a, b), first));
    }
}

TEST(Transpose, RoundTripAndShape) {
    Rng rng(5);
    const Matrix a = gaussian_matrix(rng, 3, 8, 1.0);
    const Matrix at = transpose(a);
    EXPECT_EQ(at.rows(), 8u);
    EXPECT_EQ(at.cols(), 3u);
    EXPECT_EQ(at(2, 1), a(1, 2));
    EXPECT_TRUE(matrices_equal(transpose(at), a));
}

TEST(Frobenius, WorkedExamples) {
    // ||[[3,4]]||_F = 5; ||[[1],[1]]||_F = sqrt(2); ||0||_F = 0.
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix{{3, 4}}), 5.0);
    EXPECT_NEAR(frobenius_norm(Matrix{{1}, {1}}), std::sqrt(2.0), 1e-12);
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix(3, 3)), 0.0);
}

TEST(ElementwiseOps, AddSubScale) {
    const Matrix a{{1, 2}, {3, 4}};
    const Matrix b{{10, 20}, {30, 40}};
    EXPECT_TRUE(matrices_equal(add(a, b), Matrix{{11, 22}, {33, 44}}));
    EXPECT_TRUE(matrices_equal(sub(b, a), Matrix{{9, 18}, {27, 36}}));
    EXPECT_TRUE(matrices_equal(scale(a, 2.0f), Matrix{{2, 4}, {6, 8}}));
    EXPECT_THROW(add(a, Matrix(3, 2)), ShapeError);
    EXPECT_THROW(sub(a, Matrix(2, 3)), ShapeError);
}

TEST(Rng, DeterministicStreams) {
    Rng a(2024), b(2024), c(2025);
    bool any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const double va = a.gaussian();
        EXPECT_EQ(va, b.gaussian());
        if (va != c.gaussian()) any_diff = true;
    }
    EXPECT_TRUE(any_diff);
}

TEST(Rng, UniformInUnitInterval) {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Rng, GaussianMomentsRoughlyStandard) {
    Rng rng(31337);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sumsq += g * g;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Rng, GaussianMatrixUsesRowMajorDrawOrder) {
    Rng a(7), b(7);
    const Matrix m = gaussian_matrix(a, 2, 3, 2.0);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_FLOAT_EQ(m(i, j), static_cast<float>(b.gaussian(0.0, 2.0)));
        }
    }
}
