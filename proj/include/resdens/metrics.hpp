#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "resdens/errors.hpp"

namespace resdens {

inline std::vector<std::string> class_names_four() {
    return {"BI-RADS I", "BI-RADS II", "BI-RADS III", "BI-RADS IV"};
}

inline std::vector<std::string> class_names_two() {
    return {"scattered density", "heterogeneously dense"};
}

// Confusion matrix (rows = true class, cols = predicted) with per-class
// recall and overall accuracy = trace/total. Classes without support have
// no defined accuracy and are reported as N/A.
struct EvalReport {
    std::vector<std::string> class_names;
    std::vector<std::size_t> confusion;  // K*K, row-major
    std::size_t total = 0;

    std::size_t k() const { return class_names.size(); }
    std::size_t cell(std::size_t t, std::size_t p) const { return confusion[t * k() + p]; }

    std::size_t support(std::size_t c) const {
        std::size_t n = 0;
        for (std::size_t p = 0; p < k(); ++p) n += cell(c, p);
        return n;
    }

    std::size_t correct(std::size_t c) const { return cell(c, c); }

    std::size_t trace() const {
        std::size_t n = 0;
        for (std::size_t c = 0; c < k(); ++c) n += cell(c, c);
        return n;
    }

    // NaN when the class has zero support.
    double class_accuracy(std::size_t c) const {
        const std::size_t s = support(c);
        if (s == 0) return std::nan("");
        return static_cast<double>(cell(c, c)) / static_cast<double>(s);
    }

    double overall_accuracy() const {
        if (total == 0) return std::nan("");
        return static_cast<double>(trace()) / static_cast<double>(total);
    }
};

inline EvalReport make_report(const std::vector<int>& labels, const std::vector<int>& preds,
                              const std::vector<std::string>& class_names) {
    if (labels.size() != preds.size())
        throw ShapeError("make_report: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(preds.size()) + " predictions");
    const int k = static_cast<int>(class_names.size());
    EvalReport r;
    r.class_names = class_names;
    r.confusion.assign(static_cast<std::size_t>(k) * k, 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= k)
            throw LabelError("make_report: label " + std::to_string(labels[i]) + " outside 0.." +
                             std::to_string(k - 1));
        if (preds[i] < 0 || preds[i] >= k)
            throw LabelError("make_report: prediction " + std::to_string(preds[i]) + " outside 0.." +
                             std::to_string(k - 1));
        ++r.confusion[static_cast<std::size_t>(labels[i]) * k + static_cast<std::size_t>(preds[i])];
        ++r.total;
    }
    return r;
}

namespace detail {

inline std::string percent_or_na(double v) {
    if (std::isnan(v)) return "N/A";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", v * 100.0);
    return buf;
}

} // namespace detail

// Per-class rows followed by the ALL(accuracy) summary row, echoing the
// published table layout; the raw confusion matrix follows.
inline void print_report(std::ostream& out, const EvalReport& r) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-24s %8s %8s %10s", "class", "correct", "total", "accuracy");
    out << buf << "\n";
    for (std::size_t c = 0; c < r.k(); ++c) {
        std::snprintf(buf, sizeof(buf), "%-24s %8zu %8zu %10s", r.class_names[c].c_str(), r.correct(c),
                      r.support(c), detail::percent_or_na(r.class_accuracy(c)).c_str());
        out << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%-24s %8zu %8zu %10s", "ALL(accuracy)", r.trace(), r.total,
                  detail::percent_or_na(r.overall_accuracy()).c_str());
    out << buf << "\n\n";

    out << "confusion matrix (rows = true, cols = predicted):\n";
    for (std::size_t t = 0; t < r.k(); ++t) {
        for (std::size_t p = 0; p < r.k(); ++p) {
            std::snprintf(buf, sizeof(buf), "%8zu", r.cell(t, p));
            out << buf;
        }
        out << "\n";
    }
}

inline void write_report_csv(const std::string& path, const EvalReport& r) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ConfigError("report: cannot write '" + path + "'");
    out << "class,correct,total,accuracy\n";
    for (std::size_t c = 0; c < r.k(); ++c) {
        const double a = r.class_accuracy(c);
        out << r.class_names[c] << "," << r.correct(c) << "," << r.support(c) << ","
            << (std::isnan(a) ? "N/A" : std::to_string(a)) << "\n";
    }
    out << "ALL(accuracy)," << r.trace() << "," << r.total << ",";
    const double o = r.overall_accuracy();
    out << (std::isnan(o) ? "N/A" : std::to_string(o)) << "\n";
    if (!out) throw ConfigError("report: write failed for '" + path + "'");
}

} // namespace resdens
