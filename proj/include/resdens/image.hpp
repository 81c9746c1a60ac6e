#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "resdens/errors.hpp"

namespace resdens {

// Grayscale raster with values in [0,1], row-major.
struct Image {
    std::size_t h = 0;
    std::size_t w = 0;
    std::vector<double> px;

    Image() = default;
    Image(std::size_t h_, std::size_t w_) : h(h_), w(w_), px(h_ * w_, 0.0) {}

    double& at(std::size_t y, std::size_t x) { return px[y * w + x]; }
    double at(std::size_t y, std::size_t x) const { return px[y * w + x]; }
    std::size_t size() const { return px.size(); }

    bool same_content(const Image& o) const { return h == o.h && w == o.w && px == o.px; }
};

inline void require_nonempty(const Image& img, const std::string& who) {
    if (img.h == 0 || img.w == 0 || img.px.size() != img.h * img.w)
        throw UsageError(who + ": image is empty or inconsistent");
}

} // namespace resdens
