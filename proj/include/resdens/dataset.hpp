#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "resdens/config.hpp"
#include "resdens/image_ops.hpp"
#include "resdens/rng.hpp"

namespace resdens {

enum class Split { none, train, val, test };

inline std::string split_name(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    default: return "none";
    }
}

inline Split split_from(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("manifest: unknown split '" + s + "'");
}

inline int to_two_class(int label4) {
    if (label4 < 0 || label4 > 3)
        throw LabelError("to_two_class: label " + std::to_string(label4) + " outside 0..3");
    return label4 < 2 ? 0 : 1;
}

struct LabeledImage {
    Image pixels;
    int label = 0;
    std::string source_id;
    AugTag tag;
};

// One dataset row. `path` is stored as written in the CSV (usually
// relative to the manifest file); `angle`/`hflip`/`vflip` describe the
// augmentation of this record relative to the pristine source image.
struct ManifestRecord {
    std::string path;
    int label = 0;
    Split split = Split::none;
    std::string source_id;
    double angle = 0.0;
    bool hflip = false;
    bool vflip = false;

    AugTag tag() const { return AugTag{angle, hflip, vflip}; }
};

enum class Ordering { leakfree, paper };

inline std::string ordering_name(Ordering o) { return o == Ordering::paper ? "paper" : "leakfree"; }

inline Ordering ordering_from(const std::string& s) {
    if (s == "paper") return Ordering::paper;
    if (s == "leakfree") return Ordering::leakfree;
    throw ConfigError("ordering must be paper|leakfree, got '" + s + "'");
}

struct ManifestMeta {
    std::uint64_t seed = 0;
    Ordering ordering = Ordering::leakfree;
    bool expanded = false;
    bool rebalanced = false;
    std::size_t resize_h = 0;  // 0 = native size kept
    std::size_t resize_w = 0;
};

struct DatasetManifest {
    std::vector<ManifestRecord> records;
    ManifestMeta meta;

    std::vector<std::size_t> split_counts() const {
        std::vector<std::size_t> n(4, 0);
        for (const auto& r : records) ++n[static_cast<std::size_t>(r.split)];
        return n;  // indexed by Split
    }

    std::size_t count(Split s) const { return split_counts()[static_cast<std::size_t>(s)]; }

    std::size_t count(Split s, int label) const {
        std::size_t n = 0;
        for (const auto& r : records)
            if (r.split == s && r.label == label) ++n;
        return n;
    }
};

inline const std::string kManifestHeader = "path,label,split,source_id,angle,hflip,vflip";

namespace detail {

inline std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline int parse_label(const std::string& s, std::size_t line_no) {
    if (s.size() != 1 || s[0] < '0' || s[0] > '3')
        throw LabelError("manifest line " + std::to_string(line_no) + ": label '" + s + "' outside 0..3");
    return s[0] - '0';
}

inline double parse_angle(const std::string& s, std::size_t line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("manifest line " + std::to_string(line_no) + ": bad angle '" + s + "'");
    }
}

inline bool parse_flag(const std::string& s, std::size_t line_no) {
    if (s == "0") return false;
    if (s == "1") return true;
    throw ConfigError("manifest line " + std::to_string(line_no) + ": flag must be 0|1, got '" + s + "'");
}

inline std::string format_angle(double a) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", a);
    return buf;
}

} // namespace detail

// Reads either the full manifest (7-column header above) or the bare
// ingestion form `path,label`. Bare records come back with split `none`,
// identity augmentation, and source_id derived from the file stem.
inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("manifest: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("manifest: '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const bool bare = (line == "path,label");
    if (!bare && line != kManifestHeader)
        throw ConfigError("manifest: '" + path + "' has unknown header '" + line + "'");

    DatasetManifest m;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::csv_fields(line);
        ManifestRecord r;
        if (bare) {
            if (f.size() != 2)
                throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 2 fields, got " +
                                  std::to_string(f.size()));
            r.path = f[0];
            r.label = detail::parse_label(f[1], line_no);
            r.source_id = std::filesystem::path(f[0]).stem().string();
        } else {
            if (f.size() != 7)
                throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 7 fields, got " +
                                  std::to_string(f.size()));
            r.path = f[0];
            r.label = detail::parse_label(f[1], line_no);
            r.split = split_from(f[2]);
            r.source_id = f[3];
            r.angle = detail::parse_angle(f[4], line_no);
            r.hflip = detail::parse_flag(f[5], line_no);
            r.vflip = detail::parse_flag(f[6], line_no);
        }
        if (r.path.empty())
            throw ConfigError("manifest line " + std::to_string(line_no) + ": empty path");
        m.records.push_back(std::move(r));
    }

    const std::string meta_path = std::filesystem::path(path).replace_extension(".meta").string();
    if (std::filesystem::exists(meta_path)) {
        const KeyValueFile kv = KeyValueFile::load(meta_path);
        m.meta.seed = static_cast<std::uint64_t>(kv.get_int("dataset.seed", 0));
        m.meta.ordering = ordering_from(kv.get_string("dataset.ordering", "leakfree"));
        m.meta.expanded = kv.get_bool("dataset.expanded", false);
        m.meta.rebalanced = kv.get_bool("dataset.rebalanced", false);
        m.meta.resize_h = static_cast<std::size_t>(kv.get_int("dataset.resize_height", 0));
        m.meta.resize_w = static_cast<std::size_t>(kv.get_int("dataset.resize_width", 0));
    }
    return m;
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
    {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw ConfigError("manifest: cannot write '" + path + "'");
        out << kManifestHeader << "\n";
        for (const auto& r : m.records) {
            out << r.path << "," << r.label << "," << split_name(r.split) << "," << r.source_id << ","
                << detail::format_angle(r.angle) << "," << (r.hflip ? 1 : 0) << "," << (r.vflip ? 1 : 0)
                << "\n";
        }
        if (!out) throw ConfigError("manifest: write failed for '" + path + "'");
    }
    KeyValueFile kv;
    kv.set("dataset.seed", std::to_string(m.meta.seed));
    kv.set("dataset.ordering", ordering_name(m.meta.ordering));
    kv.set("dataset.expanded", m.meta.expanded ? "true" : "false");
    kv.set("dataset.rebalanced", m.meta.rebalanced ? "true" : "false");
    kv.set("dataset.resize_height", std::to_string(m.meta.resize_h));
    kv.set("dataset.resize_width", std::to_string(m.meta.resize_w));
    const std::string meta_path = std::filesystem::path(path).replace_extension(".meta").string();
    std::ofstream meta(meta_path, std::ios::trunc);
    if (!meta) throw ConfigError("manifest: cannot write '" + meta_path + "'");
    meta << kv.canonical_text();
    if (!meta) throw ConfigError("manifest: write failed for '" + meta_path + "'");
}

// Resolves a record path against the directory containing the manifest.
inline std::string resolve_path(const std::string& manifest_path, const std::string& record_path) {
    const std::filesystem::path rp(record_path);
    if (rp.is_absolute()) return record_path;
    return (std::filesystem::path(manifest_path).parent_path() / rp).string();
}

// How many records to allocate to each of train/val/test. Exactly one of
// counts/ratios is used; ratios must sum to 1 and are resolved to counts by
// largest-remainder apportionment (ties favor the earlier split).
struct SplitSpec {
    std::vector<std::size_t> counts;  // {train, val, test}
    std::vector<double> ratios;

    std::vector<std::size_t> resolve(std::size_t n) const {
        if (!counts.empty() && !ratios.empty())
            throw ConfigError("split: give counts or ratios, not both");
        if (!counts.empty()) {
            if (counts.size() != 3) throw ConfigError("split: expected 3 counts (train,val,test)");
            const std::size_t total = counts[0] + counts[1] + counts[2];
            if (total != n)
                throw ConfigError("split: counts sum to " + std::to_string(total) + " but dataset has " +
                                  std::to_string(n) + " records");
            return counts;
        }
        if (ratios.empty()) throw ConfigError("split: no counts or ratios given");
        if (ratios.size() != 3) throw ConfigError("split: expected 3 ratios (train,val,test)");
        double sum = 0.0;
        for (double r : ratios) {
            if (r < 0.0) throw ConfigError("split: negative ratio");
            sum += r;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ConfigError("split: ratios sum to " + std::to_string(sum) + ", expected 1.0");
        std::vector<std::size_t> out(3);
        std::vector<double> frac(3);
        std::size_t assigned = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            const double exact = ratios[i] * static_cast<double>(n);
            out[i] = static_cast<std::size_t>(std::floor(exact));
            frac[i] = exact - std::floor(exact);
            assigned += out[i];
        }
        while (assigned < n) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < 3; ++i)
                if (frac[i] > frac[best]) best = i;
            ++out[best];
            frac[best] = -1.0;
            ++assigned;
        }
        return out;
    }
};

// Seeded random partition into train/val/test. Pure assignment: no
// rebalancing or expansion happens here.
inline void assign_splits(std::vector<ManifestRecord>& records, const SplitSpec& spec, std::uint64_t seed) {
    const auto counts = spec.resolve(records.size());
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).derive("split");
    shuffle(order, rng);
    for (std::size_t i = 0; i < order.size(); ++i) {
        Split s = Split::test;
        if (i < counts[0])
            s = Split::train;
        else if (i < counts[0] + counts[1])
            s = Split::val;
        records[order[i]].split = s;
    }
}

// Four-fold rotation family for the minority class: every class-3 record
// gains rotated copies at +90/+180/+270 degrees (original kept). The copies
// inherit label, split, and source_id.
inline std::vector<ManifestRecord> rebalance_minority(const std::vector<ManifestRecord>& records) {
    std::vector<ManifestRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(r);
        if (r.label != 3) continue;
        for (double extra : {90.0, 180.0, 270.0}) {
            ManifestRecord c = r;
            c.angle = std::fmod(r.angle + extra, 360.0);
            out.push_back(c);
        }
    }
    return out;
}

// Replaces every train/val record with exactly 32 derived records: 8 angles
// drawn from Uniform[0,360) composed onto the record's existing rotation,
// crossed with both flips. Test records pass through untouched. Each
// record's angle stream is derived from (seed, source_id, ordinal) where
// ordinal numbers the records sharing a source_id in manifest order, so
// expansion is independent of scheduling.
inline DatasetManifest expand_training_set(const DatasetManifest& manifest, std::uint64_t seed) {
    if (manifest.meta.expanded)
        throw UsageError("expand_training_set: manifest is already expanded");
    Rng root(seed);
    std::map<std::string, std::uint64_t> ordinal;
    DatasetManifest out;
    out.meta = manifest.meta;
    out.meta.expanded = true;
    for (const auto& r : manifest.records) {
        if (r.split != Split::train && r.split != Split::val) {
            out.records.push_back(r);
            continue;
        }
        Rng rng = root.derive("aug:" + r.source_id, ordinal[r.source_id]++);
        for (int k = 0; k < 8; ++k) {
            const double theta = rng.uniform(0.0, 360.0);
            for (bool hf : {false, true})
                for (bool vf : {false, true}) {
                    ManifestRecord c = r;
                    c.angle = std::fmod(r.angle + theta, 360.0);
                    c.hflip = hf;
                    c.vflip = vf;
                    out.records.push_back(std::move(c));
                }
        }
    }
    return out;
}

inline void check_leak_free(const DatasetManifest& m) {
    std::map<std::string, Split> seen;
    for (const auto& r : m.records) {
        auto [it, inserted] = seen.emplace(r.source_id, r.split);
        if (!inserted && it->second != r.split)
            throw UsageError("leak-free violation: source '" + r.source_id + "' appears in splits " +
                             split_name(it->second) + " and " + split_name(r.split));
    }
}

// Orchestrates the ordering policies. `paper` reproduces the published
// sequence (rebalance -> split -> expand), which can leak rotated
// near-duplicates into val/test; `leakfree` (default) splits first, then
// rebalances the train split only and expands train/val, so source_ids
// never cross splits.
inline DatasetManifest split_dataset(const std::vector<ManifestRecord>& base, const SplitSpec& spec,
                                     std::uint64_t seed, Ordering ordering, bool do_rebalance = true,
                                     bool do_expand = true) {
    DatasetManifest m;
    m.meta.seed = seed;
    m.meta.ordering = ordering;
    m.meta.rebalanced = do_rebalance;
    if (ordering == Ordering::paper) {
        std::vector<ManifestRecord> records = do_rebalance ? rebalance_minority(base) : base;
        assign_splits(records, spec, seed);
        m.records = std::move(records);
    } else {
        std::vector<ManifestRecord> records = base;
        assign_splits(records, spec, seed);
        if (do_rebalance) {
            std::vector<ManifestRecord> train, rest;
            for (auto& r : records) (r.split == Split::train ? train : rest).push_back(std::move(r));
            train = rebalance_minority(train);
            m.records = std::move(train);
            m.records.insert(m.records.end(), rest.begin(), rest.end());
        } else {
            m.records = std::move(records);
        }
    }
    if (do_expand) m = expand_training_set(m, seed);
    if (ordering == Ordering::leakfree) check_leak_free(m);
    return m;
}

// ---- synthetic dataset -------------------------------------------------

inline double measure_bright_fraction(const Image& img) {
    require_nonempty(img, "measure_bright_fraction");
    std::size_t bright = 0;
    for (double v : img.px)
        if (v > 0.5) ++bright;
    return static_cast<double>(bright) / static_cast<double>(img.size());
}

namespace detail {

// A smooth random field: a handful of Gaussian blobs plus a tiny jitter
// that breaks ranking ties.
inline std::vector<double> blob_field(std::size_t size, Rng& rng) {
    const int nblobs = 3 + static_cast<int>(rng.below(4));
    struct Blob {
        double cy, cx, inv2s2, amp;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < nblobs; ++b) {
        const double cy = rng.uniform(0.0, static_cast<double>(size));
        const double cx = rng.uniform(0.0, static_cast<double>(size));
        const double sigma = rng.uniform(0.12, 0.35) * static_cast<double>(size);
        const double amp = rng.uniform(0.5, 1.0);
        blobs.push_back({cy, cx, 1.0 / (2.0 * sigma * sigma), amp});
    }
    std::vector<double> field(size * size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double v = 0.0;
            for (const auto& b : blobs) {
                const double dy = static_cast<double>(y) - b.cy;
                const double dx = static_cast<double>(x) - b.cx;
                v += b.amp * std::exp(-(dy * dy + dx * dx) * b.inv2s2);
            }
            field[y * size + x] = v + rng.uniform() * 1e-9;
        }
    return field;
}

// Maps the values of one group linearly into [lo,hi] (midpoint when the
// group is flat).
inline void map_group(std::vector<double>& px, const std::vector<std::size_t>& idx, std::size_t begin,
                      std::size_t end, const std::vector<double>& field, double lo, double hi) {
    if (begin >= end) return;
    double mn = field[idx[begin]], mx = mn;
    for (std::size_t i = begin; i < end; ++i) {
        mn = std::min(mn, field[idx[i]]);
        mx = std::max(mx, field[idx[i]]);
    }
    const double span = mx - mn;
    for (std::size_t i = begin; i < end; ++i) {
        const double t = span < 1e-12 ? 0.5 : (field[idx[i]] - mn) / span;
        px[idx[i]] = lo + t * (hi - lo);
    }
}

} // namespace detail

// Density bands by class: 0-25 / 26-50 / 51-75 / 76-100 percent bright
// tissue. The target fraction is drawn from the band interior (0.01 in
// from each edge) and hit exactly by thresholding the blob field at its
// round(f*n)-th largest value. Bright pixels land in [0.55,1] and dark in
// [0,0.45], so the measured fraction survives 8-bit PGM quantization.
inline Image synth_image(int label, std::size_t size, Rng& rng) {
    if (label < 0 || label > 3) throw LabelError("synth_image: label outside 0..3");
    static const double lo_band[4] = {0.0, 0.26, 0.51, 0.76};
    static const double hi_band[4] = {0.25, 0.50, 0.75, 1.0};
    const double f = rng.uniform(lo_band[label] + 0.01, hi_band[label] - 0.01);
    const std::vector<double> field = detail::blob_field(size, rng);
    const std::size_t n = field.size();
    const std::size_t m = static_cast<std::size_t>(std::nearbyint(f * static_cast<double>(n)));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (field[a] != field[b]) return field[a] > field[b];
        return a < b;
    });

    Image img(size, size);
    detail::map_group(img.px, idx, 0, m, field, 0.55, 1.0);
    detail::map_group(img.px, idx, m, n, field, 0.0, 0.45);
    return img;
}

// n_per_class images per class, deterministic per seed: image (c,i) is a
// pure function of (seed, c, i).
inline std::vector<LabeledImage> generate_synthetic(std::size_t n_per_class, std::size_t size,
                                                    std::uint64_t seed) {
    if (n_per_class < 1) throw ConfigError("generate_synthetic: n_per_class must be >= 1");
    if (size < 4) throw ConfigError("generate_synthetic: size must be >= 4");
    Rng root(seed);
    std::vector<LabeledImage> out;
    out.reserve(n_per_class * 4);
    for (int c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Rng rng = root.derive("synth:" + std::to_string(c), i);
            LabeledImage li;
            li.pixels = synth_image(c, size, rng);
            li.label = c;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "synth_c%d_%04zu", c, i);
            li.source_id = buf;
            out.push_back(std::move(li));
        }
    return out;
}

} // namespace resdens
