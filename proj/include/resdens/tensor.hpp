#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "resdens/errors.hpp"

namespace resdens {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

// Dense N-dimensional array of 64-bit floats, row-major.
// 4-D activations are laid out (batch, channel, height, width); conv weights
// (out_channel, in_channel, kh, kw). No strided views: product(shape) always
// equals the flat data length.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), 0.0);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size())
            throw ShapeError("Tensor: shape " + shape_str(shape_) + " does not match data length " +
                             std::to_string(data_.size()));
    }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Checked 4-D accessors; hot loops index the flat array directly.
    double& at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    double at4(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::size_t count(const Shape& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

inline void require_rank(const Tensor& t, std::size_t r, const char* who, const char* arg) {
    if (t.rank() != r)
        throw ShapeError(std::string(who) + ": " + arg + " must have rank " + std::to_string(r) +
                         ", got shape " + shape_str(t.shape()));
}

// Convolution geometry: symmetric zero padding, one stride for both axes.
struct ConvSpec {
    int stride = 1;
    int padding = 0;
    int kernel_h = 3;
    int kernel_w = 3;

    void validate() const {
        if (stride < 1) throw ConfigError("ConvSpec: stride must be positive, got " + std::to_string(stride));
        if (padding < 0) throw ConfigError("ConvSpec: padding must be non-negative, got " + std::to_string(padding));
        if (kernel_h < 1 || kernel_w < 1)
            throw ConfigError("ConvSpec: kernel dims must be positive, got " + std::to_string(kernel_h) + "x" +
                              std::to_string(kernel_w));
    }

    // floor((in + 2*padding - kernel)/stride) + 1
    std::size_t out_dim(std::size_t in, int kernel) const {
        long long span = static_cast<long long>(in) + 2LL * padding - kernel;
        if (span < 0)
            throw ShapeError("ConvSpec: kernel " + std::to_string(kernel) + " exceeds padded input extent " +
                             std::to_string(in + 2 * static_cast<std::size_t>(padding)));
        return static_cast<std::size_t>(span / stride) + 1;
    }
};

} // namespace resdens
