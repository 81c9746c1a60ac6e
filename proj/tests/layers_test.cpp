#include <gtest/gtest.h>

#include <functional>

#include "oracles.hpp"
#include "resdens/batchnorm.hpp"
#include "resdens/residual.hpp"

using namespace resdens;

namespace {

double fd(const std::function<double()>& loss, double& coord, double h = 1e-6) {
    const double saved = coord;
    coord = saved + h;
    const double up = loss();
    coord = saved - h;
    const double dn = loss();
    coord = saved;
    return (up - dn) / (2.0 * h);
}

} // namespace

TEST(BatchNorm, TrainOutputIsStandardized) {
    Rng rng(11);
    Tensor x = oracle::rand_tensor({4, 3, 5, 5}, rng, -2.0, 5.0);
    BatchNormState st(3);
    const auto r = batchnorm_forward(x, st, Mode::train);

    const std::size_t m = 4 * 5 * 5;
    for (std::size_t ch = 0; ch < 3; ++ch) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t xx = 0; xx < 5; ++xx) mean += r.y.at4(i, ch, y, xx);
        mean /= static_cast<double>(m);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t xx = 0; xx < 5; ++xx) {
                    const double d = r.y.at4(i, ch, y, xx) - mean;
                    var += d * d;
                }
        var /= static_cast<double>(m);
        EXPECT_NEAR(mean, 0.0, 1e-12);
        EXPECT_NEAR(var, 1.0, 1e-3);  // off by var/(var+eps)
    }
}

TEST(BatchNorm, MatchesLoopOracle) {
    Rng rng(12);
    Tensor x = oracle::rand_tensor({3, 4, 2, 6}, rng, -1.0, 3.0);
    BatchNormState st(4);
    for (std::size_t i = 0; i < 4; ++i) {
        st.gamma[i] = rng.uniform(0.5, 1.5);
        st.beta[i] = rng.uniform(-0.5, 0.5);
    }
    const auto r = batchnorm_forward(x, st, Mode::train);
    const Tensor want = oracle::batchnorm_train(x, st.gamma, st.beta, st.epsilon);
    EXPECT_LE(oracle::max_abs_diff(r.y, want), 1e-12);
}

TEST(BatchNorm, RunningStatsFollowMomentumRule) {
    Rng rng(13);
    Tensor x = oracle::rand_tensor({2, 1, 3, 3}, rng, 1.0, 2.0);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mean += x[i];
    mean /= static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(x.size());

    BatchNormState st(1);
    st.running_mean[0] = 0.3;
    st.running_var[0] = 2.0;
    batchnorm_forward(x, st, Mode::train);
    EXPECT_NEAR(st.running_mean[0], 0.9 * 0.3 + 0.1 * mean, 1e-15);
    EXPECT_NEAR(st.running_var[0], 0.9 * 2.0 + 0.1 * var, 1e-15);
}

TEST(BatchNorm, EvalUsesRunningStatsAndLeavesThemAlone) {
    Rng rng(14);
    Tensor x = oracle::rand_tensor({2, 1, 2, 2}, rng);
    BatchNormState st(1);
    st.running_mean[0] = 0.25;
    st.running_var[0] = 4.0;
    st.gamma[0] = 2.0;
    st.beta[0] = 1.0;

    const auto r = batchnorm_forward(x, st, Mode::eval);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double want = 2.0 * (x[i] - 0.25) / std::sqrt(4.0 + st.epsilon) + 1.0;
        EXPECT_NEAR(r.y[i], want, 1e-15);
    }
    EXPECT_EQ(st.running_mean[0], 0.25);
    EXPECT_EQ(st.running_var[0], 4.0);
}

TEST(BatchNorm, BackwardMatchesFiniteDifferences) {
    Rng rng(15);
    Tensor x = oracle::rand_tensor({2, 2, 3, 3}, rng);
    BatchNormState st(2);
    st.gamma[0] = 1.3;
    st.gamma[1] = 0.7;
    st.beta[0] = -0.2;
    st.beta[1] = 0.4;
    Tensor weights = oracle::rand_tensor(x.shape(), rng);

    auto loss = [&] {
        BatchNormState copy = st;
        const Tensor y = batchnorm_forward(x, copy, Mode::train).y;
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
        return s;
    };

    BatchNormState fwd = st;
    const auto res = batchnorm_forward(x, fwd, Mode::train);
    const auto g = batchnorm_backward(res.cache, weights);

    for (std::size_t i = 0; i < x.size(); i += 3)
        EXPECT_NEAR(g.grad_x[i], fd(loss, x.data()[i]), 1e-6);
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_NEAR(g.grad_gamma[c], fd(loss, st.gamma.data()[c]), 1e-6);
        EXPECT_NEAR(g.grad_beta[c], fd(loss, st.beta.data()[c]), 1e-6);
    }
}

TEST(BatchNorm, ModeAndShapeErrors) {
    Tensor x({2, 2, 2, 2});
    BatchNormState st(3);
    EXPECT_THROW(batchnorm_forward(x, st, Mode::train), ShapeError);

    BatchNormState ok(2);
    Tensor single({1, 2, 1, 1});
    EXPECT_THROW(batchnorm_forward(single, ok, Mode::train), UsageError);

    const auto eval_res = batchnorm_forward(x, ok, Mode::eval);
    EXPECT_THROW(batchnorm_backward(eval_res.cache, x), UsageError);
}

TEST(ResidualBlock, ProjectionFollowsShapeRule) {
    const ResidualBlock same = ResidualBlock::make(8, 8, 2, 3, false);
    EXPECT_FALSE(same.projection.has_value());

    const ResidualBlock widen = ResidualBlock::make(8, 16, 2, 3, false);
    ASSERT_TRUE(widen.projection.has_value());
    EXPECT_EQ(widen.projection->weight.shape(), (Shape{16, 8, 1, 1}));

    const ResidualBlock forced = ResidualBlock::make(8, 8, 3, 3, true);
    ASSERT_TRUE(forced.projection.has_value());

    EXPECT_THROW(ResidualBlock::make(8, 8, 1, 3, false), ConfigError);
    EXPECT_THROW(ResidualBlock::make(8, 8, 4, 3, false), ConfigError);
}

TEST(ResidualBlock, ForwardComposesPrimitives) {
    // Rebuild the two-conv identity-shortcut block out of the public
    // primitives and compare elementwise.
    Rng rng(21);
    ResidualBlock block = ResidualBlock::make(3, 3, 2, 3, false);
    for (auto& cu : block.convs) {
        cu.weight = oracle::rand_tensor(cu.weight.shape(), rng, -0.4, 0.4);
        cu.bias = oracle::rand_tensor(cu.bias.shape(), rng, -0.1, 0.1);
    }
    Tensor x = oracle::rand_tensor({2, 3, 5, 5}, rng);

    ResidualBlock fwd = block;
    const Tensor got = residual_block_forward(x, fwd, Mode::train).y;

    const ConvSpec spec{1, 1, 3, 3};
    ResidualBlock manual = block;
    Tensor t = conv2d_forward(x, manual.convs[0].weight, manual.convs[0].bias, spec);
    t = batchnorm_forward(t, manual.convs[0].bn, Mode::train).y;
    t = relu_forward(t);
    t = conv2d_forward(t, manual.convs[1].weight, manual.convs[1].bias, spec);
    t = batchnorm_forward(t, manual.convs[1].bn, Mode::train).y;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += x[i];  // identity shortcut
    t = relu_forward(t);

    EXPECT_LE(oracle::max_abs_diff(got, t), 1e-15);
}

TEST(ResidualBlock, ProjectionShortcutIsPlainConv) {
    Rng rng(22);
    ResidualBlock block = ResidualBlock::make(2, 4, 2, 3, false);
    for (auto& cu : block.convs) {
        cu.weight.fill(0.0);
        cu.bias.fill(0.0);
        cu.bn.beta.fill(0.0);
    }
    block.projection->weight = oracle::rand_tensor(block.projection->weight.shape(), rng, 0.1, 0.5);
    block.projection->bias = oracle::rand_tensor(block.projection->bias.shape(), rng, 0.0, 0.2);
    Tensor x = oracle::rand_tensor({2, 2, 4, 4}, rng, 0.0, 1.0);

    // Zero F path: the output reduces to relu(projection(x)); the shortcut
    // carries no batch norm.
    ResidualBlock fwd = block;
    const Tensor got = residual_block_forward(x, fwd, Mode::train).y;
    const Tensor want =
        relu_forward(conv2d_forward(x, block.projection->weight, block.projection->bias, ConvSpec{1, 0, 1, 1}));
    EXPECT_LE(oracle::max_abs_diff(got, want), 1e-15);
}

TEST(ResidualBlock, BackwardMatchesFiniteDifferences) {
    Rng rng(23);
    ResidualBlock block = ResidualBlock::make(2, 3, 2, 3, false);
    for (auto& cu : block.convs) {
        cu.weight = oracle::rand_tensor(cu.weight.shape(), rng, -0.5, 0.5);
        cu.bias = oracle::rand_tensor(cu.bias.shape(), rng, -0.2, 0.2);
        cu.bn.gamma = oracle::rand_tensor(cu.bn.gamma.shape(), rng, 0.5, 1.5);
        cu.bn.beta = oracle::rand_tensor(cu.bn.beta.shape(), rng, -0.3, 0.3);
    }
    block.projection->weight = oracle::rand_tensor(block.projection->weight.shape(), rng, -0.5, 0.5);
    block.projection->bias = oracle::rand_tensor(block.projection->bias.shape(), rng, -0.2, 0.2);
    Tensor x = oracle::rand_tensor({2, 2, 3, 3}, rng);
    Tensor weights = oracle::rand_tensor({2, 3, 3, 3}, rng);

    auto loss = [&] {
        ResidualBlock copy = block;
        const Tensor y = residual_block_forward(x, copy, Mode::train).y;
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
        return s;
    };

    ResidualBlock fwd = block;
    const auto res = residual_block_forward(x, fwd, Mode::train);
    const auto g = residual_block_backward(block, res.cache, weights);

    for (std::size_t i = 0; i < x.size(); i += 2)
        EXPECT_NEAR(g.grad_x[i], fd(loss, x.data()[i]), 1e-6);
    for (std::size_t c = 0; c < 2; ++c) {
        Tensor& w = block.convs[c].weight;
        for (std::size_t i = 0; i < w.size(); i += 11)
            EXPECT_NEAR(g.convs[c].grad_weight[i], fd(loss, w.data()[i]), 1e-6);
        EXPECT_NEAR(g.convs[c].grad_gamma[0], fd(loss, block.convs[c].bn.gamma.data()[0]), 1e-6);
        EXPECT_NEAR(g.convs[c].grad_beta[0], fd(loss, block.convs[c].bn.beta.data()[0]), 1e-6);
    }
    for (std::size_t i = 0; i < block.projection->weight.size(); ++i)
        EXPECT_NEAR(g.grad_proj_weight[i], fd(loss, block.projection->weight.data()[i]), 1e-6);
}

TEST(ResidualBlock, RejectsWrongInputChannels) {
    ResidualBlock block = ResidualBlock::make(3, 3, 2, 3, false);
    Tensor x({1, 2, 4, 4});
    EXPECT_THROW(residual_block_forward(x, block, Mode::train), ShapeError);
}
