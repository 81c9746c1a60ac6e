#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resdens/errors.hpp"

namespace resdens {

struct MetricsRow {
    std::uint64_t iteration = 0;
    std::uint64_t epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double wall_ms = 0.0;
};

inline const std::string kMetricsHeader = "iteration,epoch,train_loss,train_acc,val_loss,val_acc,wall_ms";

inline std::vector<MetricsRow> load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("metrics: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("metrics: '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader)
        throw ConfigError("metrics: '" + path + "' has unexpected header '" + line + "'");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        f.push_back(cur);
        if (f.size() != 7) throw ConfigError("metrics: bad row '" + line + "' in '" + path + "'");
        // strtod handles the "nan" markers an empty validation split emits
        auto num = [&](const std::string& s) {
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (end != s.c_str() + s.size() || s.empty())
                throw ConfigError("metrics: bad field '" + s + "' in '" + path + "'");
            return v;
        };
        MetricsRow r;
        r.iteration = static_cast<std::uint64_t>(num(f[0]));
        r.epoch = static_cast<std::uint64_t>(num(f[1]));
        r.train_loss = num(f[2]);
        r.train_acc = num(f[3]);
        r.val_loss = num(f[4]);
        r.val_acc = num(f[5]);
        r.wall_ms = num(f[6]);
        rows.push_back(r);
    }
    return rows;
}

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// One polyline through the finite points of a series (non-finite values,
// e.g. from an empty validation split, break the line).
inline void svg_polyline(std::ostream& out, const std::vector<MetricsRow>& rows,
                         double (*pick)(const MetricsRow&), double x0, double y0, double plot_w,
                         double plot_h, double it_min, double it_max, double v_min, double v_max,
                         const std::string& color) {
    std::ostringstream pts;
    bool open = false;
    auto flush = [&]() {
        if (open) out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
                      << pts.str() << "\"/>\n";
        pts.str("");
        open = false;
    };
    const double it_span = it_max > it_min ? it_max - it_min : 1.0;
    const double v_span = v_max > v_min ? v_max - v_min : 1.0;
    for (const auto& r : rows) {
        const double v = pick(r);
        if (!std::isfinite(v)) {
            flush();
            continue;
        }
        const double x = x0 + (static_cast<double>(r.iteration) - it_min) / it_span * plot_w;
        const double y = y0 + plot_h - (v - v_min) / v_span * plot_h;
        if (open) pts << " ";
        pts << svg_num(x) << "," << svg_num(y);
        open = true;
    }
    flush();
}

} // namespace detail

// Fixed 800x500 chart of the four training curves. Accuracies use the left
// axis (0..1); losses are scaled to their own max, labeled on the right.
inline void write_curves_svg(const std::string& path, const std::vector<MetricsRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("svg: cannot write '" + path + "'");

    const double width = 800, height = 500;
    const double x0 = 60, y0 = 40, plot_w = width - 140, plot_h = height - 100;

    double it_min = 0, it_max = 1, loss_max = 1e-9;
    if (!rows.empty()) {
        it_min = static_cast<double>(rows.front().iteration);
        it_max = static_cast<double>(rows.back().iteration);
        for (const auto& r : rows) {
            if (std::isfinite(r.train_loss)) loss_max = std::max(loss_max, r.train_loss);
            if (std::isfinite(r.val_loss)) loss_max = std::max(loss_max, r.val_loss);
        }
    }

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\">\n";
    out << "  <rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
    out << "  <rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\"" << plot_h
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    out << "  <text x=\"" << (x0 + plot_w / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
        << "training curves</text>\n";

    // horizontal gridlines at accuracy quartiles
    for (int g = 1; g < 4; ++g) {
        const double y = y0 + plot_h - plot_h * g / 4.0;
        out << "  <line x1=\"" << x0 << "\" y1=\"" << detail::svg_num(y) << "\" x2=\"" << (x0 + plot_w)
            << "\" y2=\"" << detail::svg_num(y) << "\" stroke=\"#eee\"/>\n";
    }

    struct Series {
        const char* name;
        const char* color;
        double (*pick)(const MetricsRow&);
        bool is_loss;
    };
    const Series series[4] = {
        {"train loss", "#c0392b", [](const MetricsRow& r) { return r.train_loss; }, true},
        {"val loss", "#e67e22", [](const MetricsRow& r) { return r.val_loss; }, true},
        {"train acc", "#2980b9", [](const MetricsRow& r) { return r.train_acc; }, false},
        {"val acc", "#27ae60", [](const MetricsRow& r) { return r.val_acc; }, false},
    };
    for (const auto& s : series)
        detail::svg_polyline(out, rows, s.pick, x0, y0, plot_w, plot_h, it_min, it_max, 0.0,
                             s.is_loss ? loss_max : 1.0, s.color);

    // axes labels
    out << "  <text x=\"" << (x0 + plot_w / 2) << "\" y=\"" << (y0 + plot_h + 32)
        << "\" text-anchor=\"middle\" font-size=\"12\">iteration (" << detail::svg_num(it_min) << " .. "
        << detail::svg_num(it_max) << ")</text>\n";
    out << "  <text x=\"" << (x0 - 8) << "\" y=\"" << (y0 + plot_h) << "\" text-anchor=\"end\" font-size=\"11\">0</text>\n";
    out << "  <text x=\"" << (x0 - 8) << "\" y=\"" << (y0 + 10) << "\" text-anchor=\"end\" font-size=\"11\">1</text>\n";
    out << "  <text x=\"" << (x0 + plot_w + 8) << "\" y=\"" << (y0 + 10)
        << "\" text-anchor=\"start\" font-size=\"11\">loss max " << detail::svg_num(loss_max) << "</text>\n";

    // legend
    double ly = y0 + 10;
    for (const auto& s : series) {
        out << "  <rect x=\"" << (x0 + plot_w + 8) << "\" y=\"" << (ly + 18) << "\" width=\"12\" height=\"4\" fill=\""
            << s.color << "\"/>\n";
        out << "  <text x=\"" << (x0 + plot_w + 24) << "\" y=\"" << (ly + 24) << "\" font-size=\"11\">" << s.name
            << "</text>\n";
        ly += 20;
    }
    out << "</svg>\n";
    if (!out) throw ConfigError("svg: write failed for '" + path + "'");
}

inline void write_curves_svg_from_csv(const std::string& svg_path, const std::string& csv_path) {
    write_curves_svg(svg_path, load_metrics_csv(csv_path));
}

} // namespace resdens
