#pragma once

#include <cmath>
#include <vector>

#include "resdens/tensor.hpp"

namespace resdens {

enum class Mode { train, eval };

// Per-channel batch normalization over (N, H, W). Train mode normalizes by
// batch statistics (biased variance) and folds them into the running
// estimates as running = momentum*running + (1-momentum)*batch; eval mode
// uses the running estimates only.
struct BatchNormState {
    Tensor gamma;         // [C]
    Tensor beta;          // [C]
    Tensor running_mean;  // [C]
    Tensor running_var;   // [C]
    double epsilon = 1e-5;
    double momentum = 0.9;

    explicit BatchNormState(std::size_t channels = 0)
        : gamma(Tensor::full({channels}, 1.0)),
          beta(Tensor({channels})),
          running_mean(Tensor({channels})),
          running_var(Tensor::full({channels}, 1.0)) {}

    std::size_t channels() const { return gamma.dim(0); }
};

struct BatchNormCache {
    Tensor x;        // forward input
    Tensor xhat;     // normalized input
    std::vector<double> inv_std;  // per channel
    Tensor gamma;    // snapshot used in forward
    bool train = false;
};

struct BatchNormResult {
    Tensor y;
    BatchNormCache cache;
};

inline BatchNormResult batchnorm_forward(const Tensor& x, BatchNormState& state, Mode mode) {
    require_rank(x, 4, "batchnorm_forward", "x");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (c != state.channels())
        throw ShapeError("batchnorm: channel axis (" + std::to_string(c) + ") != state channels (" +
                         std::to_string(state.channels()) + ")");
    const std::size_t m = n * h * w;
    const std::size_t hw = h * w;

    BatchNormResult r;
    r.y = Tensor(x.shape());
    r.cache.train = (mode == Mode::train);
    r.cache.gamma = state.gamma;

    if (mode == Mode::train) {
        if (m < 2)
            throw UsageError("batchnorm_forward: train mode needs at least 2 values per channel, got " +
                             std::to_string(m));
        r.cache.x = x;
        r.cache.xhat = Tensor(x.shape());
        r.cache.inv_std.resize(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double* plane = x.data() + (i * c + ch) * hw;
                for (std::size_t j = 0; j < hw; ++j) mean += plane[j];
            }
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double* plane = x.data() + (i * c + ch) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    const double d = plane[j] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(m);
            const double inv = 1.0 / std::sqrt(var + state.epsilon);
            r.cache.inv_std[ch] = inv;
            const double g = state.gamma[ch], b = state.beta[ch];
            for (std::size_t i = 0; i < n; ++i) {
                const double* plane = x.data() + (i * c + ch) * hw;
                double* xh = r.cache.xhat.data() + (i * c + ch) * hw;
                double* out = r.y.data() + (i * c + ch) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    xh[j] = (plane[j] - mean) * inv;
                    out[j] = g * xh[j] + b;
                }
            }
            state.running_mean[ch] = state.momentum * state.running_mean[ch] + (1.0 - state.momentum) * mean;
            state.running_var[ch] = state.momentum * state.running_var[ch] + (1.0 - state.momentum) * var;
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double inv = 1.0 / std::sqrt(state.running_var[ch] + state.epsilon);
            const double mean = state.running_mean[ch];
            const double g = state.gamma[ch], b = state.beta[ch];
            for (std::size_t i = 0; i < n; ++i) {
                const double* plane = x.data() + (i * c + ch) * hw;
                double* out = r.y.data() + (i * c + ch) * hw;
                for (std::size_t j = 0; j < hw; ++j) out[j] = g * (plane[j] - mean) * inv + b;
            }
        }
    }
    return r;
}

struct BatchNormGrads {
    Tensor grad_x;
    Tensor grad_gamma;
    Tensor grad_beta;
};

// Gradients of the train-mode forward map, with the batch statistics treated
// as functions of x.
inline BatchNormGrads batchnorm_backward(const BatchNormCache& cache, const Tensor& grad_out) {
    if (!cache.train)
        throw UsageError("batchnorm_backward: cache was produced in eval mode");
    if (!grad_out.same_shape(cache.x))
        throw ShapeError("batchnorm_backward: grad_out shape " + shape_str(grad_out.shape()) +
                         " != forward input shape " + shape_str(cache.x.shape()));
    const std::size_t n = cache.x.dim(0), c = cache.x.dim(1), h = cache.x.dim(2), w = cache.x.dim(3);
    const std::size_t m = n * h * w, hw = h * w;

    BatchNormGrads g{Tensor(cache.x.shape()), Tensor({c}), Tensor({c})};
    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* go = grad_out.data() + (i * c + ch) * hw;
            const double* xh = cache.xhat.data() + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                sum_g += go[j];
                sum_gx += go[j] * xh[j];
            }
        }
        g.grad_beta[ch] = sum_g;
        g.grad_gamma[ch] = sum_gx;

        const double gamma = cache.gamma[ch];
        const double inv = cache.inv_std[ch];
        const double scale = gamma * inv / static_cast<double>(m);
        for (std::size_t i = 0; i < n; ++i) {
            const double* go = grad_out.data() + (i * c + ch) * hw;
            const double* xh = cache.xhat.data() + (i * c + ch) * hw;
            double* gx = g.grad_x.data() + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j)
                gx[j] = scale * (static_cast<double>(m) * go[j] - sum_g - xh[j] * sum_gx);
        }
    }
    return g;
}

} // namespace resdens
