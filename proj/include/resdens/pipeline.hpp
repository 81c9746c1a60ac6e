#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "resdens/dataset.hpp"
#include "resdens/pgm.hpp"
#include "resdens/tensor.hpp"

namespace resdens {

struct PrepareOptions {
    std::string manifest_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    Ordering ordering = Ordering::leakfree;
    SplitSpec split;
    std::size_t resize_h = 0;  // 0 = keep native size
    std::size_t resize_w = 0;
    bool rebalance = true;
    bool expand = true;
};

inline void print_split_table(std::ostream& out, const DatasetManifest& m) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-8s %10s %10s %10s %10s %10s", "split", "I", "II", "III", "IV",
                  "total");
    out << buf << "\n";
    std::size_t grand = 0;
    for (Split s : {Split::train, Split::val, Split::test}) {
        std::size_t row = 0;
        std::size_t n[4];
        for (int c = 0; c < 4; ++c) {
            n[c] = m.count(s, c);
            row += n[c];
        }
        grand += row;
        std::snprintf(buf, sizeof(buf), "%-8s %10zu %10zu %10zu %10zu %10zu", split_name(s).c_str(), n[0],
                      n[1], n[2], n[3], row);
        out << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%-8s %54zu", "total", grand);
    out << buf << "\n";
}

// Splits, rebalances, expands, and materializes per the ordering policy:
// every record of the plan is rendered from its source image (augmented,
// then resized when requested) into <out>/images/ and the full manifest is
// written to <out>/manifest.csv with its .meta sidecar. Inputs are
// validated before anything is written.
inline DatasetManifest run_prepare(const PrepareOptions& opt, std::ostream& log) {
    const DatasetManifest input = load_manifest(opt.manifest_path);
    if (input.meta.expanded)
        throw UsageError("prepare: input manifest '" + opt.manifest_path + "' is already expanded");
    if (input.records.empty())
        throw ConfigError("prepare: input manifest '" + opt.manifest_path + "' has no records");

    std::vector<ManifestRecord> base = input.records;
    for (auto& r : base) r.split = Split::none;

    if (opt.ordering == Ordering::leakfree) {
        std::set<std::string> seen;
        for (const auto& r : base)
            if (!seen.insert(r.source_id).second)
                throw ConfigError("prepare: duplicate source_id '" + r.source_id +
                                  "' in input; leak-free splitting needs unique sources");
    }

    // Resolve and check every source image before producing any output.
    std::map<std::string, std::string> resolved;  // record path -> filesystem path
    for (const auto& r : base) {
        if (resolved.count(r.path)) continue;
        const std::string full = resolve_path(opt.manifest_path, r.path);
        if (!std::filesystem::exists(full))
            throw ConfigError("prepare: source image '" + full + "' does not exist");
        resolved.emplace(r.path, full);
    }

    DatasetManifest plan = split_dataset(base, opt.split, opt.seed, opt.ordering, opt.rebalance, opt.expand);
    plan.meta.resize_h = opt.resize_h;
    plan.meta.resize_w = opt.resize_w;

    const std::filesystem::path out_dir(opt.out_dir);
    std::filesystem::create_directories(out_dir / "images");

    // Materialize grouped by source so each image loads once.
    std::map<std::string, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < plan.records.size(); ++i) by_source[plan.records[i].path].push_back(i);

    for (const auto& [src_path, indices] : by_source) {
        const Image src = read_pgm(resolved.at(src_path));
        for (std::size_t i : indices) {
            ManifestRecord& r = plan.records[i];
            Image img = augment(src, r.tag());
            if (opt.resize_h > 0 && opt.resize_w > 0 && (img.h != opt.resize_h || img.w != opt.resize_w))
                img = resize(img, opt.resize_h, opt.resize_w);
            char name[64];
            std::snprintf(name, sizeof(name), "images/img_%06zu.pgm", i);
            write_pgm((out_dir / name).string(), img);
            r.path = name;
        }
    }

    save_manifest((out_dir / "manifest.csv").string(), plan);
    print_split_table(log, plan);
    return plan;
}

// Pixel access for one split of a manifest, in manifest order. Small
// datasets are preloaded; large ones are re-read from disk per access.
// Every image must match the expected input size exactly.
class ImageStore {
public:
    ImageStore(const std::string& manifest_path, const DatasetManifest& manifest, Split split,
               std::size_t expect_h, std::size_t expect_w, std::size_t preload_cap_bytes = 1500000000ull)
        : h_(expect_h), w_(expect_w) {
        for (const auto& r : manifest.records) {
            if (r.split != split) continue;
            paths_.push_back(resolve_path(manifest_path, r.path));
            labels_.push_back(r.label);
        }
        const std::size_t bytes = paths_.size() * h_ * w_ * sizeof(double);
        preloaded_ = bytes <= preload_cap_bytes;
        if (preloaded_) {
            pixels_.reserve(paths_.size() * h_ * w_);
            for (const auto& p : paths_) {
                const Image img = load_checked(p);
                pixels_.insert(pixels_.end(), img.px.begin(), img.px.end());
            }
        }
    }

    std::size_t size() const { return paths_.size(); }
    int label(std::size_t i) const { return labels_[i]; }

    void fill_row(std::size_t i, double* dst) const {
        if (preloaded_) {
            const double* src = pixels_.data() + i * h_ * w_;
            std::copy(src, src + h_ * w_, dst);
        } else {
            const Image img = load_checked(paths_[i]);
            std::copy(img.px.begin(), img.px.end(), dst);
        }
    }

    // Batch tensor [n,1,H,W] plus labels for the given sample indices.
    std::pair<Tensor, std::vector<int>> batch(const std::vector<std::size_t>& indices) const {
        Tensor x({indices.size(), 1, h_, w_});
        std::vector<int> y;
        y.reserve(indices.size());
        for (std::size_t b = 0; b < indices.size(); ++b) {
            fill_row(indices[b], x.data() + b * h_ * w_);
            y.push_back(labels_[indices[b]]);
        }
        return {std::move(x), std::move(y)};
    }

private:
    Image load_checked(const std::string& path) const {
        Image img = read_pgm(path);
        if (img.h != h_ || img.w != w_)
            throw ConfigError("dataset image '" + path + "' is " + std::to_string(img.h) + "x" +
                              std::to_string(img.w) + " but the network expects " + std::to_string(h_) +
                              "x" + std::to_string(w_));
        return img;
    }

    std::size_t h_, w_;
    std::vector<std::string> paths_;
    std::vector<int> labels_;
    bool preloaded_ = false;
    std::vector<double> pixels_;
};

// Writes a synthetic dataset: PGM images plus a trainable manifest. When a
// split spec is given the images are partitioned with it; otherwise every
// record lands in train.
inline DatasetManifest run_synth(std::size_t n_per_class, std::size_t size, std::uint64_t seed,
                                 const std::string& out_dir, const SplitSpec* split, std::ostream& log) {
    const std::vector<LabeledImage> images = generate_synthetic(n_per_class, size, seed);

    const std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out / "images");

    DatasetManifest m;
    m.meta.seed = seed;
    for (const auto& li : images) {
        ManifestRecord r;
        r.path = "images/" + li.source_id + ".pgm";
        r.label = li.label;
        r.split = Split::train;
        r.source_id = li.source_id;
        write_pgm((out / r.path).string(), li.pixels);
        m.records.push_back(std::move(r));
    }
    if (split) assign_splits(m.records, *split, seed);
    save_manifest((out / "manifest.csv").string(), m);
    print_split_table(log, m);
    return m;
}

} // namespace resdens
