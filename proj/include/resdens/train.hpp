#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "resdens/checkpoint.hpp"
#include "resdens/gradcheck.hpp"
#include "resdens/metrics.hpp"
#include "resdens/pipeline.hpp"
#include "resdens/svg.hpp"

namespace resdens {

struct TrainRunConfig {
    std::string network_config_path;  // preset/config file; optional when resuming
    std::string manifest_path;
    std::string out_dir = "run";
    std::uint64_t seed = 0;
    std::size_t batch_size = 16;
    std::size_t max_iterations = 3200;
    std::size_t max_epochs = 0;  // 0 = iterations only
    double learning_rate = 1e-4;
    std::size_t log_interval = 50;
    std::size_t val_cap = 0;  // 0 = full validation set each log row
    bool timing = true;       // false writes wall_ms = 0 for byte-stable logs
    std::string class_mode = "four";
    std::string resume_path;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (max_iterations < 1) throw ConfigError("train: max_iterations must be >= 1");
        if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
        if (log_interval < 1) throw ConfigError("train: log_interval must be >= 1");
        if (class_mode != "four" && class_mode != "two")
            throw ConfigError("train: class_mode must be four|two, got '" + class_mode + "'");
        if (manifest_path.empty()) throw ConfigError("train: manifest path required");
        if (network_config_path.empty() && resume_path.empty())
            throw ConfigError("train: a network config (--preset) or --resume checkpoint is required");
    }
};

namespace detail {

inline int argmax_row(const double* row, std::size_t k) {
    int best = 0;
    for (std::size_t j = 1; j < k; ++j)
        if (row[j] > row[best]) best = static_cast<int>(j);
    return best;
}

// Sample index order for one epoch: a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).derive("epoch", epoch);
    shuffle(order, rng);
    return order;
}

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

struct EvalOutcome {
    double mean_loss = std::nan("");
    double accuracy = std::nan("");
    std::vector<int> labels;
    std::vector<int> preds;
};

// Eval-mode pass over the given sample indices. Labels are collapsed to
// two classes when the network itself is two-class.
inline EvalOutcome evaluate_indices(Network& net, const ImageStore& store,
                                    const std::vector<std::size_t>& indices, std::size_t batch_size,
                                    bool collapse_labels) {
    EvalOutcome out;
    if (indices.empty()) return out;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t at = 0; at < indices.size(); at += batch_size) {
        const std::size_t take = std::min(batch_size, indices.size() - at);
        std::vector<std::size_t> chunk(indices.begin() + at, indices.begin() + at + take);
        auto [x, y] = store.batch(chunk);
        if (collapse_labels)
            for (int& label : y) label = to_two_class(label);
        const Tensor probs = net.forward(x, Mode::eval).probs;
        const auto ce = cross_entropy(probs, y);
        for (double l : ce.loss.per_sample) loss_sum += l;
        const std::size_t k = probs.dim(1);
        for (std::size_t i = 0; i < take; ++i) {
            const int pred = detail::argmax_row(probs.data() + i * k, k);
            out.labels.push_back(y[i]);
            out.preds.push_back(pred);
            if (pred == y[i]) ++correct;
        }
    }
    out.mean_loss = loss_sum / static_cast<double>(indices.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return out;
}

inline EvalOutcome evaluate_all(Network& net, const ImageStore& store, std::size_t batch_size,
                                bool collapse_labels) {
    std::vector<std::size_t> indices(store.size());
    std::iota(indices.begin(), indices.end(), 0);
    return evaluate_indices(net, store, indices, batch_size, collapse_labels);
}

struct TrainResult {
    std::uint64_t iterations = 0;
    double final_train_loss = std::nan("");
    double final_train_acc = std::nan("");
    double final_val_loss = std::nan("");
    double final_val_acc = std::nan("");
    std::string metrics_path;
    std::string checkpoint_path;
    std::string svg_path;
};

// Minibatch Adam training with deterministic epoch shuffles, periodic
// metrics logging, epoch-boundary checkpoints, and bitwise-reproducible
// resume. Batch composition at iteration k is a pure function of
// (seed, k, |train|), so a restored checkpoint continues the exact run.
inline TrainResult run_train(const TrainRunConfig& cfg, std::ostream& log) {
    cfg.validate();

    Network net;
    AdamState adam;
    std::uint64_t start_iter = 0;
    std::uint64_t run_seed = cfg.seed;
    if (!cfg.resume_path.empty()) {
        const Checkpoint ckpt = load_checkpoint(cfg.resume_path);
        net = restore_network(ckpt);
        if (!cfg.network_config_path.empty()) {
            const NetworkConfig wanted = NetworkConfig::load(cfg.network_config_path);
            if (wanted.hash() != net.config_hash)
                throw ConfigError("train: --preset config does not match the resume checkpoint");
        }
        adam = restore_adam(ckpt, net);
        start_iter = ckpt.iteration;
        run_seed = ckpt.seed;  // hyperparameters and seed continue the original run
    } else {
        net = build_network(NetworkConfig::load(cfg.network_config_path), cfg.seed);
        adam.cfg.lr = cfg.learning_rate;
    }

    const bool two_mode = cfg.class_mode == "two";
    const int wanted_classes = two_mode ? 2 : 4;
    if (net.config.classes != wanted_classes)
        throw ConfigError("train: class_mode " + cfg.class_mode + " needs a " +
                          std::to_string(wanted_classes) + "-class network, but config has " +
                          std::to_string(net.config.classes));
    if (start_iter >= cfg.max_iterations)
        throw ConfigError("train: checkpoint is already at iteration " + std::to_string(start_iter) +
                          " >= max_iterations " + std::to_string(cfg.max_iterations));

    const DatasetManifest manifest = load_manifest(cfg.manifest_path);
    const ImageStore train_store(cfg.manifest_path, manifest, Split::train, net.config.input_h,
                                 net.config.input_w);
    const ImageStore val_store(cfg.manifest_path, manifest, Split::val, net.config.input_h,
                               net.config.input_w);
    if (train_store.size() == 0)
        throw ConfigError("train: manifest '" + cfg.manifest_path + "' has no train records");
    const std::size_t n_train = train_store.size();

    std::uint64_t stop_iter = cfg.max_iterations;
    if (cfg.max_epochs > 0) {
        const std::uint64_t by_epochs =
            (cfg.max_epochs * n_train + cfg.batch_size - 1) / cfg.batch_size;
        stop_iter = std::min<std::uint64_t>(stop_iter, std::max<std::uint64_t>(by_epochs, 1));
    }

    std::filesystem::create_directories(cfg.out_dir);
    const std::string metrics_path = (std::filesystem::path(cfg.out_dir) / "metrics.csv").string();
    const std::string ckpt_path = (std::filesystem::path(cfg.out_dir) / "checkpoint.rdck").string();
    const std::string svg_path = (std::filesystem::path(cfg.out_dir) / "curves.svg").string();

    const bool append = !cfg.resume_path.empty() && std::filesystem::exists(metrics_path);
    std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw ConfigError("train: cannot write '" + metrics_path + "'");
    if (!append) metrics << kMetricsHeader << "\n";

    log << "training: " << net.config.name << " | " << n_train << " train / " << val_store.size()
        << " val samples | batch " << cfg.batch_size << " | iterations " << (start_iter + 1) << ".."
        << stop_iter << " | lr " << adam.cfg.lr << "\n";

    const auto t0 = std::chrono::steady_clock::now();
    std::uint64_t cached_epoch = ~0ull;
    std::vector<std::size_t> order;
    TrainResult result;
    result.metrics_path = metrics_path;
    result.checkpoint_path = ckpt_path;
    result.svg_path = svg_path;

    for (std::uint64_t iter = start_iter + 1; iter <= stop_iter; ++iter) {
        std::vector<std::size_t> batch_indices;
        batch_indices.reserve(cfg.batch_size);
        for (std::uint64_t p = (iter - 1) * cfg.batch_size; p < iter * cfg.batch_size; ++p) {
            const std::uint64_t e = p / n_train;
            if (e != cached_epoch) {
                order = detail::epoch_order(run_seed, e, n_train);
                cached_epoch = e;
            }
            batch_indices.push_back(order[p % n_train]);
        }

        auto [x, y] = train_store.batch(batch_indices);
        if (two_mode)
            for (int& label : y) label = to_two_class(label);

        auto fwd = net.forward(x, Mode::train);
        const auto ce = cross_entropy(fwd.probs, y);
        if (!std::isfinite(ce.loss.mean))
            throw NumericError("train: loss is non-finite at iteration " + std::to_string(iter));

        std::size_t correct = 0;
        const std::size_t k = fwd.probs.dim(1);
        for (std::size_t i = 0; i < y.size(); ++i)
            if (detail::argmax_row(fwd.probs.data() + i * k, k) == y[i]) ++correct;
        const double train_acc = static_cast<double>(correct) / static_cast<double>(y.size());

        net.backward(fwd.cache, ce.grad_logits);
        adam_step(net, adam);

        const std::uint64_t epoch_before = (iter - 1) * cfg.batch_size / n_train;
        const std::uint64_t epoch_after = iter * cfg.batch_size / n_train;

        if (iter % cfg.log_interval == 0 || iter == stop_iter) {
            double val_loss = std::nan(""), val_acc = std::nan("");
            if (val_store.size() > 0) {
                std::vector<std::size_t> val_indices(val_store.size());
                std::iota(val_indices.begin(), val_indices.end(), 0);
                if (cfg.val_cap > 0 && val_indices.size() > cfg.val_cap) {
                    Rng rng = Rng(run_seed).derive("valsub", iter);
                    shuffle(val_indices, rng);
                    val_indices.resize(cfg.val_cap);
                }
                const EvalOutcome v = evaluate_indices(net, val_store, val_indices, cfg.batch_size, two_mode);
                val_loss = v.mean_loss;
                val_acc = v.accuracy;
            }
            double wall_ms = 0.0;
            if (cfg.timing) {
                const auto now = std::chrono::steady_clock::now();
                wall_ms = std::chrono::duration<double, std::milli>(now - t0).count();
            }
            metrics << iter << "," << epoch_after << "," << detail::fmt_g17(ce.loss.mean) << ","
                    << detail::fmt_g17(train_acc) << "," << detail::fmt_g17(val_loss) << ","
                    << detail::fmt_g17(val_acc) << "," << detail::fmt_g17(wall_ms) << "\n";
            metrics.flush();
            result.final_val_loss = val_loss;
            result.final_val_acc = val_acc;
        }

        if (epoch_after > epoch_before || iter == stop_iter)
            save_checkpoint(ckpt_path, net, adam, Rng(run_seed).state(), iter);

        result.iterations = iter;
        result.final_train_loss = ce.loss.mean;
        result.final_train_acc = train_acc;
    }

    metrics.close();
    write_curves_svg_from_csv(svg_path, metrics_path);
    log << "done: iteration " << result.iterations << " | train loss "
        << detail::fmt_g17(result.final_train_loss) << " | train acc "
        << detail::fmt_g17(result.final_train_acc) << "\n";
    return result;
}

struct EvaluateOptions {
    std::string checkpoint_path;
    std::string manifest_path;
    std::string split = "test";
    std::string class_mode = "four";
    std::string out_csv;  // optional
};

// Eval-mode prediction over one split, reported in the per-class +
// ALL(accuracy) table shape. In two-class mode four-class labels and
// predictions are collapsed with to_two_class.
inline EvalReport run_evaluate(const EvaluateOptions& opt, std::ostream& log) {
    if (opt.class_mode != "four" && opt.class_mode != "two")
        throw ConfigError("evaluate: class_mode must be four|two, got '" + opt.class_mode + "'");
    const Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
    Network net = restore_network(ckpt);

    const Split split = split_from(opt.split);
    const DatasetManifest manifest = load_manifest(opt.manifest_path);
    const ImageStore store(opt.manifest_path, manifest, split, net.config.input_h, net.config.input_w);
    if (store.size() == 0)
        throw ConfigError("evaluate: split '" + opt.split + "' is absent from '" + opt.manifest_path + "'");

    const bool two_mode = opt.class_mode == "two";
    if (!two_mode && net.config.classes != 4)
        throw ConfigError("evaluate: class_mode four needs a 4-class network");

    const bool net_is_two = net.config.classes == 2;
    EvalOutcome outcome = evaluate_all(net, store, 32, net_is_two);

    std::vector<int> labels = outcome.labels;
    std::vector<int> preds = outcome.preds;
    if (two_mode && !net_is_two) {
        for (int& v : labels) v = to_two_class(v);
        for (int& v : preds) v = to_two_class(v);
    }

    const EvalReport report =
        make_report(labels, preds, two_mode ? class_names_two() : class_names_four());
    log << "evaluate: " << net.config.name << " | split " << opt.split << " | " << store.size()
        << " samples | mode " << opt.class_mode << "\n\n";
    print_report(log, report);
    if (!opt.out_csv.empty()) write_report_csv(opt.out_csv, report);
    return report;
}

} // namespace resdens
