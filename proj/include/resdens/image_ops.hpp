#pragma once

#include <algorithm>
#include <cmath>

#include "resdens/errors.hpp"
#include "resdens/image.hpp"

namespace resdens {

// Bilinear resize with half-pixel sample centers (align-corners off):
// source coordinate = (dst + 0.5) * (src_extent / dst_extent) - 0.5, with
// edge clamping. Resizing to the identical size copies bit-exactly.
inline Image resize(const Image& src, std::size_t out_h, std::size_t out_w) {
    require_nonempty(src, "resize");
    if (out_h < 1 || out_w < 1) throw ConfigError("resize: target dimensions must be >= 1");
    Image dst(out_h, out_w);
    const double sy_scale = static_cast<double>(src.h) / static_cast<double>(out_h);
    const double sx_scale = static_cast<double>(src.w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double sy = (static_cast<double>(y) + 0.5) * sy_scale - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(src.h - 1));
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, src.h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            double sx = (static_cast<double>(x) + 0.5) * sx_scale - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(src.w - 1));
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, src.w - 1);
            const double fx = sx - static_cast<double>(x0);
            const double top = src.at(y0, x0) * (1.0 - fx) + src.at(y0, x1) * fx;
            const double bot = src.at(y1, x0) * (1.0 - fx) + src.at(y1, x1) * fx;
            dst.at(y, x) = top * (1.0 - fy) + bot * fy;
        }
    }
    return dst;
}

inline Image hflip(const Image& src) {
    require_nonempty(src, "hflip");
    Image dst(src.h, src.w);
    for (std::size_t y = 0; y < src.h; ++y)
        for (std::size_t x = 0; x < src.w; ++x) dst.at(y, x) = src.at(y, src.w - 1 - x);
    return dst;
}

inline Image vflip(const Image& src) {
    require_nonempty(src, "vflip");
    Image dst(src.h, src.w);
    for (std::size_t y = 0; y < src.h; ++y)
        for (std::size_t x = 0; x < src.w; ++x) dst.at(y, x) = src.at(src.h - 1 - y, x);
    return dst;
}

namespace detail {

// Sample with zero fill outside the source support.
inline double bilinear_zero(const Image& src, double sy, double sx) {
    const double y0f = std::floor(sy), x0f = std::floor(sx);
    const long long y0 = static_cast<long long>(y0f), x0 = static_cast<long long>(x0f);
    const double fy = sy - y0f, fx = sx - x0f;
    auto px = [&](long long y, long long x) -> double {
        if (y < 0 || x < 0 || y >= static_cast<long long>(src.h) || x >= static_cast<long long>(src.w))
            return 0.0;
        return src.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
    };
    const double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
    const double bot = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

} // namespace detail

// Rotation about the image center; positive angles turn the content
// clockwise (with y growing downward). Output dimensions are unchanged and
// samples falling outside the source are zero. Multiples of 90 degrees on
// square images reduce to exact index permutations.
inline Image rotate(const Image& src, double angle_degrees) {
    require_nonempty(src, "rotate");
    double a = std::fmod(angle_degrees, 360.0);
    if (a < 0) a += 360.0;

    if (src.h == src.w && std::fmod(a, 90.0) == 0.0) {
        const std::size_t n = src.h;
        const int quarter = static_cast<int>(a / 90.0) % 4;
        Image dst(n, n);
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                switch (quarter) {
                case 0: dst.at(y, x) = src.at(y, x); break;
                case 1: dst.at(y, x) = src.at(n - 1 - x, y); break;
                case 2: dst.at(y, x) = src.at(n - 1 - y, n - 1 - x); break;
                default: dst.at(y, x) = src.at(x, n - 1 - y); break;
                }
            }
        return dst;
    }

    const double rad = a * (3.14159265358979323846 / 180.0);
    const double c = std::cos(rad), s = std::sin(rad);
    const double cy = (static_cast<double>(src.h) - 1.0) / 2.0;
    const double cx = (static_cast<double>(src.w) - 1.0) / 2.0;
    Image dst(src.h, src.w);
    for (std::size_t y = 0; y < src.h; ++y)
        for (std::size_t x = 0; x < src.w; ++x) {
            const double dx = static_cast<double>(x) - cx;
            const double dy = static_cast<double>(y) - cy;
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;
            dst.at(y, x) = detail::bilinear_zero(src, sy, sx);
        }
    return dst;
}

struct AugTag {
    double angle = 0.0;
    bool hflip = false;
    bool vflip = false;

    bool is_identity() const { return angle == 0.0 && !hflip && !vflip; }
    bool operator==(const AugTag&) const = default;
};

// Rotation first, then flips.
inline Image augment(const Image& src, const AugTag& tag) {
    Image out = tag.angle == 0.0 ? src : rotate(src, tag.angle);
    if (tag.hflip) out = hflip(out);
    if (tag.vflip) out = vflip(out);
    return out;
}

} // namespace resdens
