#include <gtest/gtest.h>

#include "oracles.hpp"
#include "resdens/ops.hpp"

using namespace resdens;

TEST(Tensor, ConstructionAndAccess) {
    Tensor t({2, 3});
    EXPECT_EQ(t.rank(), 2u);
    EXPECT_EQ(t.size(), 6u);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i], 0.0);

    t.at2(1, 2) = 4.5;
    EXPECT_EQ(t[5], 4.5);

    Tensor u({2, 2}, {1.0, 2.0, 3.0, 4.0});
    EXPECT_EQ(u.at2(0, 1), 2.0);
    EXPECT_EQ(u.at2(1, 0), 3.0);
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
}

TEST(Tensor, FullAndFinite) {
    Tensor t = Tensor::full({3}, 2.5);
    EXPECT_EQ(t[0], 2.5);
    EXPECT_EQ(t[2], 2.5);
    EXPECT_TRUE(t.all_finite());
    t[1] = std::nan("");
    EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, At4Layout) {
    Tensor t({2, 3, 4, 5});
    t.at4(1, 2, 3, 4) = 7.0;
    // row-major (n, c, y, x)
    EXPECT_EQ(t[((1 * 3 + 2) * 4 + 3) * 5 + 4], 7.0);
}

TEST(ConvSpec, OutDim) {
    ConvSpec s{1, 1, 3, 3};
    EXPECT_EQ(s.out_dim(5, 3), 5u);  // same padding
    ConvSpec s2{2, 0, 2, 2};
    EXPECT_EQ(s2.out_dim(6, 2), 3u);
    ConvSpec s3{1, 0, 7, 7};
    EXPECT_THROW(s3.out_dim(4, 7), ShapeError);  // kernel exceeds extent
    ConvSpec bad{0, 0, 3, 3};
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Conv2d, MatchesLoopOracleOnRandomShapes) {
    Rng rng(101);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.below(3);
        const std::size_t cin = 1 + rng.below(4);
        const std::size_t cout = 1 + rng.below(4);
        const int k = 1 + 2 * static_cast<int>(rng.below(2));  // 1 or 3
        const int stride = 1 + static_cast<int>(rng.below(2));
        const int pad = static_cast<int>(rng.below(2));
        const std::size_t h = static_cast<std::size_t>(k) + rng.below(6);
        const std::size_t w = static_cast<std::size_t>(k) + rng.below(6);
        const ConvSpec spec{stride, pad, k, k};

        Tensor x = oracle::rand_tensor({n, cin, h, w}, rng);
        Tensor wt = oracle::rand_tensor({cout, cin, (std::size_t)k, (std::size_t)k}, rng);
        Tensor b = oracle::rand_tensor({cout}, rng);

        const Tensor got = conv2d_forward(x, wt, b, spec);
        const Tensor want = oracle::conv2d(x, wt, b, spec);
        EXPECT_LE(oracle::max_abs_diff(got, want), 1e-12)
            << "trial " << trial << " shape " << shape_str(x.shape());
    }
}

TEST(Conv2d, RejectsMismatchedArguments) {
    const ConvSpec spec{1, 1, 3, 3};
    Tensor x({1, 2, 4, 4});
    Tensor w({3, 2, 3, 3});
    Tensor b({3});
    EXPECT_NO_THROW(conv2d_forward(x, w, b, spec));

    Tensor wrong_cin({3, 1, 3, 3});
    EXPECT_THROW(conv2d_forward(x, wrong_cin, b, spec), ShapeError);
    Tensor wrong_bias({2});
    EXPECT_THROW(conv2d_forward(x, w, wrong_bias, spec), ShapeError);
    const ConvSpec wrong_kernel{1, 1, 5, 5};
    EXPECT_THROW(conv2d_forward(x, w, b, wrong_kernel), ShapeError);
    Tensor rank3({2, 4, 4});
    EXPECT_THROW(conv2d_forward(rank3, w, b, spec), ShapeError);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
    Rng rng(7);
    const ConvSpec spec{1, 1, 3, 3};
    Tensor x = oracle::rand_tensor({2, 2, 4, 5}, rng);
    Tensor w = oracle::rand_tensor({3, 2, 3, 3}, rng);
    Tensor b = oracle::rand_tensor({3}, rng);
    Tensor weights = oracle::rand_tensor({2, 3, 4, 5}, rng);

    auto loss = [&] {
        const Tensor y = conv2d_forward(x, w, b, spec);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
        return s;
    };
    const ConvGrads g = conv2d_backward(x, w, spec, weights);

    auto fd = [&](double& coord) {
        const double saved = coord;
        coord = saved + 1e-6;
        const double up = loss();
        coord = saved - 1e-6;
        const double dn = loss();
        coord = saved;
        return (up - dn) / 2e-6;
    };
    for (std::size_t i = 0; i < x.size(); i += 7)
        EXPECT_NEAR(g.grad_input[i], fd(x.data()[i]), 1e-7);
    for (std::size_t i = 0; i < w.size(); i += 5)
        EXPECT_NEAR(g.grad_weight[i], fd(w.data()[i]), 1e-7);
    for (std::size_t i = 0; i < b.size(); ++i)
        EXPECT_NEAR(g.grad_bias[i], fd(b.data()[i]), 1e-7);
}

TEST(Conv2d, BackwardRejectsWrongGradShape) {
    const ConvSpec spec{1, 1, 3, 3};
    Tensor x({1, 2, 4, 4});
    Tensor w({3, 2, 3, 3});
    Tensor bad({1, 3, 5, 5});
    EXPECT_THROW(conv2d_backward(x, w, spec, bad), ShapeError);
}

TEST(AvgPool, MatchesLoopOracleOnRandomShapes) {
    Rng rng(202);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 1 + rng.below(3);
        const std::size_t c = 1 + rng.below(4);
        const int wh = 1 + static_cast<int>(rng.below(3));
        const int ww = 1 + static_cast<int>(rng.below(3));
        const int sh = 1 + static_cast<int>(rng.below(3));
        const int sw = 1 + static_cast<int>(rng.below(3));
        const std::size_t h = static_cast<std::size_t>(wh) + rng.below(7);
        const std::size_t w = static_cast<std::size_t>(ww) + rng.below(7);

        Tensor x = oracle::rand_tensor({n, c, h, w}, rng);
        const Tensor got = avg_pool2d_forward(x, wh, ww, sh, sw);
        const Tensor want = oracle::avg_pool(x, wh, ww, sh, sw);
        EXPECT_LE(oracle::max_abs_diff(got, want), 1e-12) << "trial " << trial;
    }
}

TEST(AvgPool, KnownValues) {
    Tensor x({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    const Tensor y = avg_pool2d_forward(x, 2, 2, 2, 2);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_DOUBLE_EQ(y[0], 2.5);

    EXPECT_THROW(avg_pool2d_forward(x, 3, 3, 1, 1), ShapeError);
    EXPECT_THROW(avg_pool2d_forward(x, 0, 2, 1, 1), ConfigError);
}

TEST(AvgPool, BackwardDistributesEvenly) {
    Tensor grad_out({1, 1, 1, 1}, {8.0});
    const Tensor gin = avg_pool2d_backward({1, 1, 2, 2}, 2, 2, 2, 2, grad_out);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(gin[i], 2.0);

    Tensor wrong({1, 1, 2, 2});
    EXPECT_THROW(avg_pool2d_backward({1, 1, 2, 2}, 2, 2, 2, 2, wrong), ShapeError);
}

TEST(AvgPool, OverlappingWindowBackwardAccumulates) {
    // 1x4 input, window 2, stride 1: middle cells feed two windows.
    Tensor grad_out({1, 1, 1, 3}, {1.0, 1.0, 1.0});
    const Tensor gin = avg_pool2d_backward({1, 1, 1, 4}, 1, 2, 1, 1, grad_out);
    EXPECT_DOUBLE_EQ(gin[0], 0.5);
    EXPECT_DOUBLE_EQ(gin[1], 1.0);
    EXPECT_DOUBLE_EQ(gin[2], 1.0);
    EXPECT_DOUBLE_EQ(gin[3], 0.5);
}

TEST(Affine, MatchesLoopOracleOnRandomShapes) {
    Rng rng(303);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        const std::size_t d = 1 + rng.below(9);
        const std::size_t m = 1 + rng.below(7);
        Tensor x = oracle::rand_tensor({n, d}, rng);
        Tensor w = oracle::rand_tensor({d, m}, rng);
        Tensor b = oracle::rand_tensor({m}, rng);
        EXPECT_LE(oracle::max_abs_diff(affine_forward(x, w, b), oracle::affine(x, w, b)), 1e-12)
            << "trial " << trial;
    }
}

TEST(Affine, BackwardIsExactForLinearMap) {
    // For y = xW + b with loss sum(y .* s), gradients have closed forms:
    // dL/dx = s W^T, dL/dW = x^T s, dL/db = column sums of s.
    Rng rng(404);
    Tensor x = oracle::rand_tensor({3, 4}, rng);
    Tensor w = oracle::rand_tensor({4, 2}, rng);
    Tensor s = oracle::rand_tensor({3, 2}, rng);
    const AffineGrads g = affine_backward(x, w, s);

    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k) {
            double want = 0.0;
            for (std::size_t j = 0; j < 2; ++j) want += s.at2(i, j) * w.at2(k, j);
            EXPECT_NEAR(g.grad_input.at2(i, k), want, 1e-14);
        }
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < 2; ++j) {
            double want = 0.0;
            for (std::size_t i = 0; i < 3; ++i) want += x.at2(i, k) * s.at2(i, j);
            EXPECT_NEAR(g.grad_weight.at2(k, j), want, 1e-14);
        }
    for (std::size_t j = 0; j < 2; ++j) {
        double want = 0.0;
        for (std::size_t i = 0; i < 3; ++i) want += s.at2(i, j);
        EXPECT_NEAR(g.grad_bias[j], want, 1e-14);
    }

    Tensor bad({2, 2});
    EXPECT_THROW(affine_backward(x, w, bad), ShapeError);
}

TEST(Relu, ForwardAndBackward) {
    Tensor x({1, 4}, {-1.0, 0.0, 0.5, 2.0});
    const Tensor y = relu_forward(x);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 0.0);
    EXPECT_EQ(y[2], 0.5);
    EXPECT_EQ(y[3], 2.0);

    Tensor g({1, 4}, {1.0, 1.0, 1.0, 1.0});
    const Tensor gin = relu_backward(x, g);
    EXPECT_EQ(gin[0], 0.0);
    EXPECT_EQ(gin[1], 0.0);  // subgradient 0 at the kink
    EXPECT_EQ(gin[2], 1.0);
    EXPECT_EQ(gin[3], 1.0);

    Tensor wrong({2, 2});
    EXPECT_THROW(relu_backward(x, wrong), ShapeError);
}

TEST(Softmax, RowsArePositiveAndNormalized) {
    Rng rng(505);
    Tensor logits = oracle::rand_tensor({6, 4}, rng, -30.0, 30.0);
    const Tensor p = softmax(logits);
    for (std::size_t i = 0; i < 6; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            EXPECT_GT(p.at2(i, j), 0.0);
            s += p.at2(i, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    EXPECT_LE(oracle::max_abs_diff(p, oracle::softmax(logits)), 1e-12);
}

TEST(Softmax, ShiftInvariance) {
    Tensor a({1, 3}, {1.0, 2.0, 3.0});
    Tensor b({1, 3}, {1001.0, 1002.0, 1003.0});
    EXPECT_LE(oracle::max_abs_diff(softmax(a), softmax(b)), 1e-12);

    Tensor single({2, 1});
    EXPECT_THROW(softmax(single), ShapeError);
}

TEST(CrossEntropy, HandComputedValues) {
    // Uniform probabilities: loss is log(k) regardless of the label.
    Tensor probs({1, 4}, {0.25, 0.25, 0.25, 0.25});
    const auto r = cross_entropy(probs, {2});
    EXPECT_NEAR(r.loss.mean, std::log(4.0), 1e-15);

    // Gradient is (p - onehot)/N.
    for (std::size_t j = 0; j < 4; ++j) {
        const double want = 0.25 - (j == 2 ? 1.0 : 0.0);
        EXPECT_NEAR(r.grad_logits[j], want, 1e-15);
    }
}

TEST(CrossEntropy, MeanOverBatchAndFloor) {
    Tensor probs({2, 2}, {0.75, 0.25, 0.1, 0.9});
    const auto r = cross_entropy(probs, {0, 1});
    EXPECT_NEAR(r.loss.mean, (-std::log(0.75) - std::log(0.9)) / 2.0, 1e-15);
    EXPECT_NEAR(r.loss.per_sample[0], -std::log(0.75), 1e-15);

    // A zero probability is floored instead of producing infinity.
    Tensor zero({1, 2}, {0.0, 1.0});
    const auto rz = cross_entropy(zero, {0});
    EXPECT_TRUE(std::isfinite(rz.loss.mean));
    EXPECT_NEAR(rz.loss.mean, -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, RejectsBadLabels) {
    Tensor probs({1, 4}, {0.25, 0.25, 0.25, 0.25});
    EXPECT_THROW(cross_entropy(probs, {4}), LabelError);
    EXPECT_THROW(cross_entropy(probs, {-1}), LabelError);
    EXPECT_THROW(cross_entropy(probs, {0, 1}), ShapeError);
}
