#pragma once

#include <optional>
#include <vector>

#include "resdens/batchnorm.hpp"
#include "resdens/ops.hpp"

namespace resdens {

// Residual unit: F(x) + shortcut(x) followed by ReLU, where F is a chain of
// conv->BN->ReLU repeated convs_per_block times with the last ReLU deferred
// until after the shortcut addition (classic post-activation layout). The
// shortcut is the identity when shapes match and a learned 1x1 convolution
// otherwise (or when forced by the preset to hit its layer count).
struct ConvUnit {
    Tensor weight;  // [Cout, Cin, k, k]
    Tensor bias;    // [Cout]
    BatchNormState bn;
};

struct ResidualBlock {
    std::vector<ConvUnit> convs;  // 2 or 3
    std::optional<ConvUnit> projection;  // 1x1, no BN on the shortcut path
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;

    static ResidualBlock make(std::size_t in_ch, std::size_t out_ch, int convs_per_block, int kernel,
                              bool force_projection) {
        if (convs_per_block < 2 || convs_per_block > 3)
            throw ConfigError("ResidualBlock: convs_per_block must be 2 or 3, got " +
                              std::to_string(convs_per_block));
        ResidualBlock b;
        b.in_channels = in_ch;
        b.out_channels = out_ch;
        std::size_t cin = in_ch;
        for (int i = 0; i < convs_per_block; ++i) {
            ConvUnit u;
            u.weight = Tensor({out_ch, cin, static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)});
            u.bias = Tensor({out_ch});
            u.bn = BatchNormState(out_ch);
            b.convs.push_back(std::move(u));
            cin = out_ch;
        }
        if (in_ch != out_ch || force_projection) {
            ConvUnit p;
            p.weight = Tensor({out_ch, in_ch, 1, 1});
            p.bias = Tensor({out_ch});
            b.projection = std::move(p);
        }
        return b;
    }

    ConvSpec conv_spec() const {
        const int k = static_cast<int>(convs[0].weight.dim(2));
        return ConvSpec{1, (k - 1) / 2, k, k};
    }
};

struct BlockCache {
    Tensor input;
    std::vector<Tensor> conv_inputs;   // input to each conv
    std::vector<BatchNormCache> bn_caches;
    std::vector<Tensor> bn_outputs;    // pre-ReLU values for internal ReLUs
    Tensor pre_relu;                   // F(x) + shortcut(x), before the output ReLU
    Tensor shortcut_out;
};

struct BlockResult {
    Tensor y;
    BlockCache cache;
};

inline BlockResult residual_block_forward(const Tensor& x, ResidualBlock& block, Mode mode) {
    require_rank(x, 4, "residual_block_forward", "x");
    if (x.dim(1) != block.in_channels)
        throw ShapeError("residual_block: input channel axis (" + std::to_string(x.dim(1)) +
                         ") != block input width (" + std::to_string(block.in_channels) + ")");

    BlockResult r;
    r.cache.input = x;
    const ConvSpec spec = block.conv_spec();

    Tensor cur = x;
    for (std::size_t i = 0; i < block.convs.size(); ++i) {
        r.cache.conv_inputs.push_back(cur);
        Tensor c = conv2d_forward(cur, block.convs[i].weight, block.convs[i].bias, spec);
        auto bn = batchnorm_forward(c, block.convs[i].bn, mode);
        r.cache.bn_caches.push_back(std::move(bn.cache));
        if (i + 1 < block.convs.size()) {
            r.cache.bn_outputs.push_back(bn.y);
            cur = relu_forward(bn.y);
        } else {
            cur = std::move(bn.y);
        }
    }

    if (block.projection) {
        const ConvSpec pspec{1, 0, 1, 1};
        r.cache.shortcut_out = conv2d_forward(x, block.projection->weight, block.projection->bias, pspec);
    } else {
        r.cache.shortcut_out = x;
    }

    r.cache.pre_relu = Tensor(cur.shape());
    for (std::size_t i = 0; i < cur.size(); ++i)
        r.cache.pre_relu[i] = cur[i] + r.cache.shortcut_out[i];
    r.y = relu_forward(r.cache.pre_relu);
    return r;
}

struct ConvUnitGrads {
    Tensor grad_weight;
    Tensor grad_bias;
    Tensor grad_gamma;
    Tensor grad_beta;
};

struct BlockGrads {
    Tensor grad_x;
    std::vector<ConvUnitGrads> convs;
    Tensor grad_proj_weight;  // empty when no projection
    Tensor grad_proj_bias;
};

// grad_x is the sum of the F-path and shortcut-path contributions.
inline BlockGrads residual_block_backward(const ResidualBlock& block, const BlockCache& cache,
                                          const Tensor& grad_out) {
    BlockGrads g;
    g.convs.resize(block.convs.size());

    Tensor grad_sum = relu_backward(cache.pre_relu, grad_out);

    // Shortcut path.
    Tensor grad_x_shortcut;
    if (block.projection) {
        const ConvSpec pspec{1, 0, 1, 1};
        auto pg = conv2d_backward(cache.input, block.projection->weight, pspec, grad_sum);
        grad_x_shortcut = std::move(pg.grad_input);
        g.grad_proj_weight = std::move(pg.grad_weight);
        g.grad_proj_bias = std::move(pg.grad_bias);
    } else {
        grad_x_shortcut = grad_sum;
    }

    // F path, walked in reverse.
    const ConvSpec spec = block.conv_spec();
    Tensor grad = grad_sum;
    for (std::size_t ri = block.convs.size(); ri-- > 0;) {
        if (ri + 1 < block.convs.size())
            grad = relu_backward(cache.bn_outputs[ri], grad);
        auto bng = batchnorm_backward(cache.bn_caches[ri], grad);
        g.convs[ri].grad_gamma = std::move(bng.grad_gamma);
        g.convs[ri].grad_beta = std::move(bng.grad_beta);
        auto cg = conv2d_backward(cache.conv_inputs[ri], block.convs[ri].weight, spec, bng.grad_x);
        g.convs[ri].grad_weight = std::move(cg.grad_weight);
        g.convs[ri].grad_bias = std::move(cg.grad_bias);
        grad = std::move(cg.grad_input);
    }

    g.grad_x = Tensor(cache.input.shape());
    for (std::size_t i = 0; i < g.grad_x.size(); ++i)
        g.grad_x[i] = grad[i] + grad_x_shortcut[i];
    return g;
}

} // namespace resdens
