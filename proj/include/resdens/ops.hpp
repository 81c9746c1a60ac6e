#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "resdens/tensor.hpp"

namespace resdens {

// Primitive differentiable ops. All functions are pure: inputs are never
// mutated, outputs are freshly allocated. Convolutions use an im2col patch
// matrix per sample; the reduction order over (ci, dy, dx) matches the
// direct nested-loop definition, so results agree with the loop oracle to
// the last bit on typical shapes.

namespace detail {

// Columns laid out [Cin*kh*kw][Hout*Wout] for one sample.
inline void im2col(const double* src, std::size_t cin, std::size_t h, std::size_t w,
                   const ConvSpec& spec, std::size_t hout, std::size_t wout, double* col) {
    const int kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride, p = spec.padding;
    double* out = col;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* plane = src + ci * h * w;
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                for (std::size_t y = 0; y < hout; ++y) {
                    const long long sy = static_cast<long long>(y) * s - p + dy;
                    if (sy < 0 || sy >= static_cast<long long>(h)) {
                        std::memset(out, 0, wout * sizeof(double));
                        out += wout;
                        continue;
                    }
                    const double* row = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t x = 0; x < wout; ++x) {
                        const long long sx = static_cast<long long>(x) * s - p + dx;
                        out[x] = (sx < 0 || sx >= static_cast<long long>(w)) ? 0.0 : row[sx];
                    }
                    out += wout;
                }
            }
        }
    }
}

// Scatter-add of a column matrix back onto the (zero-initialised) image.
inline void col2im_add(const double* col, std::size_t cin, std::size_t h, std::size_t w,
                       const ConvSpec& spec, std::size_t hout, std::size_t wout, double* dst) {
    const int kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride, p = spec.padding;
    const double* in = col;
    for (std::size_t ci = 0; ci < cin; ++ci) {
        double* plane = dst + ci * h * w;
        for (int dy = 0; dy < kh; ++dy) {
            for (int dx = 0; dx < kw; ++dx) {
                for (std::size_t y = 0; y < hout; ++y) {
                    const long long sy = static_cast<long long>(y) * s - p + dy;
                    if (sy < 0 || sy >= static_cast<long long>(h)) {
                        in += wout;
                        continue;
                    }
                    double* row = plane + static_cast<std::size_t>(sy) * w;
                    for (std::size_t x = 0; x < wout; ++x) {
                        const long long sx = static_cast<long long>(x) * s - p + dx;
                        if (sx >= 0 && sx < static_cast<long long>(w)) row[sx] += in[x];
                    }
                    in += wout;
                }
            }
        }
    }
}

} // namespace detail

inline void check_conv_args(const Tensor& input, const Tensor& weight, const Tensor* bias, const ConvSpec& spec) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    spec.validate();
    if (weight.dim(2) != static_cast<std::size_t>(spec.kernel_h) ||
        weight.dim(3) != static_cast<std::size_t>(spec.kernel_w))
        throw ShapeError("conv2d: weight kernel axes " + std::to_string(weight.dim(2)) + "x" +
                         std::to_string(weight.dim(3)) + " do not match spec kernel " +
                         std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w));
    if (input.dim(1) != weight.dim(1))
        throw ShapeError("conv2d: input channel axis (" + std::to_string(input.dim(1)) +
                         ") != weight in-channel axis (" + std::to_string(weight.dim(1)) + ")");
    if (bias) {
        require_rank(*bias, 1, "conv2d", "bias");
        if (bias->dim(0) != weight.dim(0))
            throw ShapeError("conv2d: bias axis (" + std::to_string(bias->dim(0)) +
                             ") != weight out-channel axis (" + std::to_string(weight.dim(0)) + ")");
    }
}

// out[n,co,y,x] = bias[co] + sum_{ci,dy,dx} input[n,ci,y*s-p+dy,x*s-p+dx] * weight[co,ci,dy,dx]
// (cross-correlation; out-of-bounds input reads as zero).
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvSpec& spec) {
    check_conv_args(input, weight, &bias, spec);
    const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cout = weight.dim(0);
    const std::size_t hout = spec.out_dim(h, spec.kernel_h), wout = spec.out_dim(w, spec.kernel_w);
    const std::size_t ck = cin * spec.kernel_h * spec.kernel_w;
    const std::size_t hw = hout * wout;

    Tensor out({n, cout, hout, wout});
    std::vector<double> col(ck * hw);
    for (std::size_t i = 0; i < n; ++i) {
        detail::im2col(input.data() + i * cin * h * w, cin, h, w, spec, hout, wout, col.data());
        double* dst = out.data() + i * cout * hw;
        for (std::size_t co = 0; co < cout; ++co) {
            double* orow = dst + co * hw;
            const double* wrow = weight.data() + co * ck;
            std::fill(orow, orow + hw, bias[co]);
            for (std::size_t k = 0; k < ck; ++k) {
                const double wv = wrow[k];
                const double* crow = col.data() + k * hw;
                for (std::size_t j = 0; j < hw; ++j) orow[j] += wv * crow[j];
            }
        }
    }
    return out;
}

struct ConvGrads {
    Tensor grad_input;
    Tensor grad_weight;
    Tensor grad_bias;
};

// Exact gradients of conv2d_forward with respect to input, weight and bias.
inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const ConvSpec& spec,
                                 const Tensor& grad_out) {
    check_conv_args(input, weight, nullptr, spec);
    const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t cout = weight.dim(0);
    const std::size_t hout = spec.out_dim(h, spec.kernel_h), wout = spec.out_dim(w, spec.kernel_w);
    require_rank(grad_out, 4, "conv2d_backward", "grad_out");
    if (grad_out.shape() != Shape{n, cout, hout, wout})
        throw ShapeError("conv2d_backward: grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match forward output " + shape_str({n, cout, hout, wout}));

    const std::size_t ck = cin * spec.kernel_h * spec.kernel_w;
    const std::size_t hw = hout * wout;

    ConvGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor({cout})};
    std::vector<double> col(ck * hw);
    std::vector<double> gcol(ck * hw);
    for (std::size_t i = 0; i < n; ++i) {
        detail::im2col(input.data() + i * cin * h * w, cin, h, w, spec, hout, wout, col.data());
        const double* go = grad_out.data() + i * cout * hw;

        for (std::size_t co = 0; co < cout; ++co) {
            const double* grow = go + co * hw;
            double acc = 0.0;
            for (std::size_t j = 0; j < hw; ++j) acc += grow[j];
            g.grad_bias[co] += acc;

            double* gwrow = g.grad_weight.data() + co * ck;
            for (std::size_t k = 0; k < ck; ++k) {
                const double* crow = col.data() + k * hw;
                double s = 0.0;
                for (std::size_t j = 0; j < hw; ++j) s += grow[j] * crow[j];
                gwrow[k] += s;
            }
        }

        std::fill(gcol.begin(), gcol.end(), 0.0);
        for (std::size_t k = 0; k < ck; ++k) {
            double* grow = gcol.data() + k * hw;
            for (std::size_t co = 0; co < cout; ++co) {
                const double wv = weight.data()[co * ck + k];
                const double* gorow = go + co * hw;
                for (std::size_t j = 0; j < hw; ++j) grow[j] += wv * gorow[j];
            }
        }
        detail::col2im_add(gcol.data(), cin, h, w, spec, hout, wout, g.grad_input.data() + i * cin * h * w);
    }
    return g;
}

inline void check_pool_args(std::size_t h, std::size_t w, int wh, int ww, int sh, int sw) {
    if (wh < 1 || ww < 1 || sh < 1 || sw < 1)
        throw ConfigError("avg_pool2d: window and stride must be positive");
    if (static_cast<std::size_t>(wh) > h || static_cast<std::size_t>(ww) > w)
        throw ShapeError("avg_pool2d: window " + std::to_string(wh) + "x" + std::to_string(ww) +
                         " larger than input " + std::to_string(h) + "x" + std::to_string(w));
}

// Each output cell is the arithmetic mean of its window; trailing rows/cols
// that do not fill a window are dropped (floor rule).
inline Tensor avg_pool2d_forward(const Tensor& input, int wh, int ww, int sh, int sw) {
    require_rank(input, 4, "avg_pool2d_forward", "input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    check_pool_args(h, w, wh, ww, sh, sw);
    const std::size_t hout = (h - wh) / sh + 1, wout = (w - ww) / sw + 1;
    const double inv_area = 1.0 / (static_cast<double>(wh) * ww);

    Tensor out({n, c, hout, wout});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* plane = input.data() + (i * c + ch) * h * w;
            double* oplane = out.data() + (i * c + ch) * hout * wout;
            for (std::size_t y = 0; y < hout; ++y)
                for (std::size_t x = 0; x < wout; ++x) {
                    double s = 0.0;
                    for (int dy = 0; dy < wh; ++dy) {
                        const double* row = plane + (y * sh + dy) * w + x * sw;
                        for (int dx = 0; dx < ww; ++dx) s += row[dx];
                    }
                    oplane[y * wout + x] = s * inv_area;
                }
        }
    return out;
}

// Distributes each grad_out cell equally (1/window area) over its source cells.
inline Tensor avg_pool2d_backward(const Shape& input_shape, int wh, int ww, int sh, int sw,
                                  const Tensor& grad_out) {
    if (input_shape.size() != 4)
        throw ShapeError("avg_pool2d_backward: input_shape must have rank 4, got " + shape_str(input_shape));
    const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
    check_pool_args(h, w, wh, ww, sh, sw);
    const std::size_t hout = (h - wh) / sh + 1, wout = (w - ww) / sw + 1;
    if (grad_out.shape() != Shape{n, c, hout, wout})
        throw ShapeError("avg_pool2d_backward: grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match pooled output " + shape_str({n, c, hout, wout}));
    const double inv_area = 1.0 / (static_cast<double>(wh) * ww);

    Tensor gin(input_shape);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* plane = gin.data() + (i * c + ch) * h * w;
            const double* gplane = grad_out.data() + (i * c + ch) * hout * wout;
            for (std::size_t y = 0; y < hout; ++y)
                for (std::size_t x = 0; x < wout; ++x) {
                    const double gv = gplane[y * wout + x] * inv_area;
                    for (int dy = 0; dy < wh; ++dy) {
                        double* row = plane + (y * sh + dy) * w + x * sw;
                        for (int dx = 0; dx < ww; ++dx) row[dx] += gv;
                    }
                }
        }
    return gin;
}

// out[n,m] = bias[m] + sum_d input[n,d] * weight[d,m]
inline Tensor affine_forward(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require_rank(input, 2, "affine_forward", "input");
    require_rank(weight, 2, "affine_forward", "weight");
    require_rank(bias, 1, "affine_forward", "bias");
    const std::size_t n = input.dim(0), d = input.dim(1), m = weight.dim(1);
    if (weight.dim(0) != d)
        throw ShapeError("affine: input feature axis (" + std::to_string(d) + ") != weight rows (" +
                         std::to_string(weight.dim(0)) + ")");
    if (bias.dim(0) != m)
        throw ShapeError("affine: bias axis (" + std::to_string(bias.dim(0)) + ") != weight cols (" +
                         std::to_string(m) + ")");

    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.data() + i * m;
        std::memcpy(orow, bias.data(), m * sizeof(double));
        const double* irow = input.data() + i * d;
        for (std::size_t k = 0; k < d; ++k) {
            const double iv = irow[k];
            const double* wrow = weight.data() + k * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += iv * wrow[j];
        }
    }
    return out;
}

struct AffineGrads {
    Tensor grad_input;
    Tensor grad_weight;
    Tensor grad_bias;
};

inline AffineGrads affine_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out) {
    require_rank(grad_out, 2, "affine_backward", "grad_out");
    const std::size_t n = input.dim(0), d = input.dim(1), m = weight.dim(1);
    if (grad_out.dim(0) != n || grad_out.dim(1) != m)
        throw ShapeError("affine_backward: grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match output " + shape_str({n, m}));

    AffineGrads g{Tensor({n, d}), Tensor({d, m}), Tensor({m})};
    for (std::size_t i = 0; i < n; ++i) {
        const double* grow = grad_out.data() + i * m;
        const double* irow = input.data() + i * d;
        double* girow = g.grad_input.data() + i * d;
        for (std::size_t j = 0; j < m; ++j) g.grad_bias[j] += grow[j];
        for (std::size_t k = 0; k < d; ++k) {
            const double* wrow = weight.data() + k * m;
            double* gwrow = g.grad_weight.data() + k * m;
            const double iv = irow[k];
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                acc += grow[j] * wrow[j];
                gwrow[j] += iv * grow[j];
            }
            girow[k] = acc;
        }
    }
    return g;
}

inline Tensor relu_forward(const Tensor& x) {
    Tensor out(x.shape());
    const double* in = x.data();
    double* o = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
    return out;
}

// Subgradient 0 at x == 0.
inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
    if (!x.same_shape(grad_out))
        throw ShapeError("relu_backward: x shape " + shape_str(x.shape()) + " != grad_out shape " +
                         shape_str(grad_out.shape()));
    Tensor gin(x.shape());
    const double* in = x.data();
    const double* g = grad_out.data();
    double* o = gin.data();
    for (std::size_t i = 0; i < x.size(); ++i) o[i] = in[i] > 0.0 ? g[i] : 0.0;
    return gin;
}

// Row-wise softmax with max subtraction; rows of the result are positive and
// sum to 1.
inline Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax", "logits");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (k < 2) throw ShapeError("softmax: need at least 2 classes, got " + std::to_string(k));

    Tensor out({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        double* orow = out.data() + i * k;
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            orow[j] = std::exp(row[j] - mx);
            s += orow[j];
        }
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < k; ++j) orow[j] *= inv;
    }
    return out;
}

} // namespace resdens
