#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "resdens/gradcheck.hpp"
#include "resdens/pipeline.hpp"
#include "resdens/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitGradcheck = 3;

// A preset argument is either a config file path or a bare preset name
// resolved inside the preset directory.
std::string resolve_preset(const std::string& value, const std::string& preset_dir) {
    const bool has_ext = value.size() > 4 && value.substr(value.size() - 4) == ".cfg";
    if (value.find('/') != std::string::npos || has_ext) return value;
    return (std::filesystem::path(preset_dir) / (value + ".cfg")).string();
}

resdens::SplitSpec split_from_counts(const std::vector<std::size_t>& counts) {
    resdens::SplitSpec s;
    s.counts = counts;
    return s;
}

resdens::SplitSpec split_from_ratios(const std::vector<double>& ratios) {
    resdens::SplitSpec s;
    s.ratios = ratios;
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"resdens: residual-network mammographic density classifier"};
    app.require_subcommand(1);

    // ---- prepare ----
    auto* prepare = app.add_subcommand("prepare", "split, rebalance, augment, and materialize a dataset");
    std::string prep_config, prep_manifest, prep_out, prep_ordering = "leakfree";
    std::uint64_t prep_seed = 0;
    std::vector<std::size_t> prep_counts;
    std::vector<double> prep_ratios;
    std::size_t prep_resize = 0;
    bool prep_no_expand = false, prep_no_rebalance = false;
    prepare->add_option("--config", prep_config, "key-value config file ([prepare] section)");
    prepare->add_option("--manifest", prep_manifest, "input manifest CSV (path,label)");
    prepare->add_option("--out", prep_out, "output directory");
    prepare->add_option("--seed", prep_seed, "pipeline seed");
    prepare->add_option("--ordering", prep_ordering, "paper|leakfree (default leakfree)");
    prepare->add_option("--split", prep_counts, "split counts train,val,test")->delimiter(',');
    prepare->add_option("--split-ratio", prep_ratios, "split ratios train,val,test")->delimiter(',');
    prepare->add_option("--resize", prep_resize, "square resize target (0 = keep native size)");
    prepare->add_flag("--no-expand", prep_no_expand, "skip the 32x train/val expansion");
    prepare->add_flag("--no-rebalance", prep_no_rebalance, "skip the class-IV rotation rebalance");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a network on a prepared manifest");
    std::string train_config, train_preset, train_preset_dir = "presets";
    resdens::TrainRunConfig tcfg;
    std::string train_timing = "wall";
    train->add_option("--config", train_config, "key-value config file ([train] section)");
    train->add_option("--preset", train_preset, "network preset name or config path");
    train->add_option("--preset-dir", train_preset_dir, "directory holding preset configs");
    train->add_option("--manifest", tcfg.manifest_path, "prepared manifest CSV");
    train->add_option("--out", tcfg.out_dir, "output directory (metrics, checkpoint, chart)");
    train->add_option("--seed", tcfg.seed, "run seed");
    train->add_option("--batch-size", tcfg.batch_size, "minibatch size (default 16)");
    train->add_option("--max-iterations", tcfg.max_iterations, "iteration budget (default 3200)");
    train->add_option("--max-epochs", tcfg.max_epochs, "optional epoch cap (0 = off)");
    train->add_option("--lr", tcfg.learning_rate, "Adam learning rate (default 1e-4)");
    train->add_option("--log-interval", tcfg.log_interval, "iterations between metric rows");
    train->add_option("--val-cap", tcfg.val_cap, "validation subsample per log row (0 = full)");
    train->add_option("--timing", train_timing, "wall|off: wall_ms column source");
    train->add_option("--class-mode", tcfg.class_mode, "four|two");
    train->add_option("--resume", tcfg.resume_path, "checkpoint to resume from");

    // ---- evaluate ----
    auto* evaluate = app.add_subcommand("evaluate", "run a checkpoint over one split");
    resdens::EvaluateOptions ecfg;
    evaluate->add_option("--checkpoint", ecfg.checkpoint_path, "checkpoint file")->required();
    evaluate->add_option("--manifest", ecfg.manifest_path, "manifest CSV")->required();
    evaluate->add_option("--split", ecfg.split, "train|val|test (default test)");
    evaluate->add_option("--class-mode", ecfg.class_mode, "four|two");
    evaluate->add_option("--out", ecfg.out_csv, "write the report as CSV here");

    // ---- gradcheck ----
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_preset = "tiny", gc_preset_dir = "presets";
    resdens::GradCheckOptions gc_opt;
    gradcheck->add_option("--preset", gc_preset, "network preset for the end-to-end check");
    gradcheck->add_option("--preset-dir", gc_preset_dir, "directory holding preset configs");
    gradcheck->add_option("--threshold", gc_opt.threshold, "worst relative error allowed (default 1e-5)");
    gradcheck->add_option("--seed", gc_opt.seed, "seed for shapes and probes");
    gradcheck->add_option("--sample-coords", gc_opt.sample_coords,
                          "coordinates sampled per tensor end-to-end (0 = all)");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic density dataset");
    std::size_t sy_n = 10, sy_size = 32;
    std::uint64_t sy_seed = 0;
    std::string sy_out;
    std::vector<std::size_t> sy_counts;
    synth->add_option("--n-per-class", sy_n, "images per class (default 10)");
    synth->add_option("--size", sy_size, "square image size (default 32)");
    synth->add_option("--seed", sy_seed, "generator seed");
    synth->add_option("--out", sy_out, "output directory")->required();
    synth->add_option("--split", sy_counts, "optional split counts train,val,test")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (prepare->parsed()) {
            resdens::PrepareOptions opt;
            if (!prep_config.empty()) {
                const resdens::KeyValueFile kv = resdens::KeyValueFile::load(prep_config);
                opt.manifest_path = kv.get_string("prepare.manifest", "");
                opt.out_dir = kv.get_string("prepare.out", "");
                opt.seed = static_cast<std::uint64_t>(kv.get_int("prepare.seed", 0));
                opt.ordering = resdens::ordering_from(kv.get_string("prepare.ordering", "leakfree"));
                opt.resize_h = opt.resize_w = static_cast<std::size_t>(kv.get_int("prepare.resize", 0));
                opt.expand = kv.get_bool("prepare.expand", true);
                opt.rebalance = kv.get_bool("prepare.rebalance", true);
                if (kv.has("prepare.split"))
                    for (long long c : kv.get_int_list("prepare.split"))
                        opt.split.counts.push_back(static_cast<std::size_t>(c));
            }
            if (prepare->count("--manifest")) opt.manifest_path = prep_manifest;
            if (prepare->count("--out")) opt.out_dir = prep_out;
            if (prepare->count("--seed")) opt.seed = prep_seed;
            if (prepare->count("--ordering")) opt.ordering = resdens::ordering_from(prep_ordering);
            if (prepare->count("--split")) opt.split = split_from_counts(prep_counts);
            if (prepare->count("--split-ratio")) opt.split = split_from_ratios(prep_ratios);
            if (prepare->count("--resize")) opt.resize_h = opt.resize_w = prep_resize;
            if (prep_no_expand) opt.expand = false;
            if (prep_no_rebalance) opt.rebalance = false;
            if (opt.manifest_path.empty()) throw resdens::ConfigError("prepare: --manifest is required");
            if (opt.out_dir.empty()) throw resdens::ConfigError("prepare: --out is required");
            resdens::run_prepare(opt, std::cout);
            return kExitOk;
        }

        if (train->parsed()) {
            if (!train_config.empty()) {
                const resdens::KeyValueFile kv = resdens::KeyValueFile::load(train_config);
                if (!train->count("--preset") && kv.has("train.preset"))
                    train_preset = kv.get_string("train.preset");
                if (!train->count("--preset-dir") && kv.has("train.preset_dir"))
                    train_preset_dir = kv.get_string("train.preset_dir");
                if (!train->count("--manifest")) tcfg.manifest_path = kv.get_string("train.manifest", "");
                if (!train->count("--out")) tcfg.out_dir = kv.get_string("train.out", tcfg.out_dir);
                if (!train->count("--seed"))
                    tcfg.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 0));
                if (!train->count("--batch-size"))
                    tcfg.batch_size = static_cast<std::size_t>(kv.get_int("train.batch_size", 16));
                if (!train->count("--max-iterations"))
                    tcfg.max_iterations = static_cast<std::size_t>(kv.get_int("train.max_iterations", 3200));
                if (!train->count("--max-epochs"))
                    tcfg.max_epochs = static_cast<std::size_t>(kv.get_int("train.max_epochs", 0));
                if (!train->count("--lr")) tcfg.learning_rate = kv.get_double("train.learning_rate", 1e-4);
                if (!train->count("--log-interval"))
                    tcfg.log_interval = static_cast<std::size_t>(kv.get_int("train.log_interval", 50));
                if (!train->count("--val-cap"))
                    tcfg.val_cap = static_cast<std::size_t>(kv.get_int("train.val_cap", 0));
                if (!train->count("--timing")) train_timing = kv.get_string("train.timing", "wall");
                if (!train->count("--class-mode")) tcfg.class_mode = kv.get_string("train.class_mode", "four");
                if (!train->count("--resume")) tcfg.resume_path = kv.get_string("train.resume", "");
            }
            if (train_timing == "wall")
                tcfg.timing = true;
            else if (train_timing == "off")
                tcfg.timing = false;
            else
                throw resdens::ConfigError("train: --timing must be wall|off, got '" + train_timing + "'");
            if (!train_preset.empty())
                tcfg.network_config_path = resolve_preset(train_preset, train_preset_dir);
            resdens::run_train(tcfg, std::cout);
            return kExitOk;
        }

        if (evaluate->parsed()) {
            resdens::run_evaluate(ecfg, std::cout);
            return kExitOk;
        }

        if (gradcheck->parsed()) {
            const std::string path = resolve_preset(gc_preset, gc_preset_dir);
            const resdens::NetworkConfig config = resdens::NetworkConfig::load(path);
            const resdens::GradCheckReport report = resdens::run_gradcheck(config, gc_opt);
            resdens::print_gradcheck_report(std::cout, report);
            return report.all_pass() ? kExitOk : kExitGradcheck;
        }

        if (synth->parsed()) {
            resdens::SplitSpec spec;
            const bool have_split = synth->count("--split") > 0;
            if (have_split) spec = split_from_counts(sy_counts);
            resdens::run_synth(sy_n, sy_size, sy_seed, sy_out, have_split ? &spec : nullptr, std::cout);
            return kExitOk;
        }
    } catch (const resdens::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const resdens::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const resdens::LabelError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
