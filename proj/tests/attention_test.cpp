#include <gtest/gtest.h>

#include "peft/attention.hpp"
#include "peft/matrix.hpp"
#include "peft/rng.hpp"
#include "test_util.hpp"

using namespace peft;
using peft::test::matrices_near;

TEST(RowSoftmax, RowsSumToOneAndStable) {
    // Max-subtraction keeps huge logits finite.
    const Matrix logits{{1000, 1001, 999}, {-5, 0, 5}};
    const Matrix w = row_softmax(logits);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        float sum = 0;
        for (std::size_t j = 0; j < w.cols(); ++j) {
            EXPECT_TRUE(std::isfinite(w(i, j)));
            EXPECT_GT(w(i, j), 0.0f);
            sum += w(i, j);
        }
        EXPECT_NEAR(sum, 1.0f, 1e-6);
    }
}

TEST(SelfAttention, SingleTokenReturnsItsValueRow) {
    // softmax over one logit is 1, output = that token's V row.
    Rng rng(11);
    const Matrix x = gaussian_matrix(rng, 1, 4, 1.0);
    const Matrix wq = gaussian_matrix(rng, 4, 3, 0.5);
    const Matrix wk = gaussian_matrix(rng, 4, 3, 0.5);
    const Matrix wv = gaussian_matrix(rng, 4, 3, 0.5);
    const Matrix out = self_attention(x, wq, wk, wv);
    EXPECT_TRUE(matrices_near(out, matmul(x, wv), 1e-6));
}

TEST(SelfAttention, ZeroInputGivesUniformAttention) {
    // x = 0 -> Q = K = 0 -> uniform weights -> column means of V.
    // With x = 0 the V rows are zero too, so probe the weights hook instead.
    Rng rng(12);
    const Matrix x(3, 4);
    const Matrix wq = gaussian_matrix(rng, 4, 2, 0.5);
    const Matrix wk = gaussian_matrix(rng, 4, 2, 0.5);
    const Matrix wv = gaussian_matrix(rng, 4, 2, 0.5);
    Matrix weights;
    const Matrix out = self_attention(x, wq, wk, wv, &weights);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_NEAR(weights(i, j), 1.0f / 3.0f, 1e-6);
        }
    }
    EXPECT_TRUE(matrices_near(out, Matrix(3, 2), 1e-6));
}

TEST(SelfAttention, FixedTwoTokenCaseMatchesReference) {
    // straight-line reimplementation of softmax(QK^T/sqrt(d_k))V
    // over these literals, computed in a double-precision scripting
    // calculator.
    const Matrix x{{0.2f, -0.4f, 0.7f}, {1.1f, 0.3f, -0.5f}};
    const Matrix wq{{0.3f, -0.2f}, {0.5f, 0.1f}, {-0.4f, 0.6f}};
    const Matrix wk{{0.2f, 0.7f}, {-0.3f, 0.4f}, {0.1f, -0.5f}};
    const Matrix wv{{0.9f, -0.1f}, {0.2f, 0.8f}, {-0.6f, 0.3f}};
    Matrix weights;
    const Matrix out = self_attention(x, wq, wk, wv, &weights);
    const Matrix expected_weights{{0.3994934094f, 0.6005065906f}, {0.6445833095f, 0.3554166905f}};
    const Matrix expected_out{{0.6828460063f, -0.0639442750f}, {0.2735458731f, -0.0909041640f}};
    EXPECT_TRUE(matrices_near(weights, expected_weights, 1e-6));
    EXPECT_TRUE(matrices_near(out, expected_out, 1e-6));
}

TEST(SelfAttention, WeightsRowsSumToOneOnRandomInput) {
    Rng rng(77);
    const Matrix x = gaussian_matrix(rng, 6, 8, 1.0);
    const Matrix wq = gaussian_matrix(rng, 8, 4, 0.35);
    const Matrix wk = gaussian_matrix(rng, 8, 4, 0.35);
    const Matrix wv = gaussian_matrix(rng, 8, 4, 0.35);
    Matrix weights;
    self_attention(x, wq, wk, wv, &weights);
    ASSERT_EQ(weights.rows(), 6u);
    ASSERT_EQ(weights.cols(), 6u);
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        float sum = 0;
        for (std::size_t j = 0; j < weights.cols(); ++j) sum += weights(i, j);
        EXPECT_NEAR(sum, 1.0f, 1e-5);
    }
}

TEST(SelfAttention, ShapeMismatchThrows) {
    const Matrix x(2, 3);
    EXPECT_THROW(self_attention(x, Matrix(4, 2), Matrix(3, 2), Matrix(3, 2)), ShapeError);
    EXPECT_THROW(self_attention(x, Matrix(3, 2), Matrix(3, 3), Matrix(3, 2)), ShapeError);
}
