// Acceptance gate for the full pipeline. Each numbered criterion prints a
// single [PASS]/[FAIL] line with the measured values; the process exits
// nonzero if any line failed. Everything runs in a throwaway directory
// under the system temp path.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "resdens/checkpoint.hpp"
#include "resdens/gradcheck.hpp"
#include "resdens/pipeline.hpp"
#include "resdens/train.hpp"

#include "oracles.hpp"

using namespace resdens;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void check(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name;
    if (!detail.empty()) std::cout << " — " << detail;
    std::cout << "\n";
    std::cout.flush();
    if (!ok) ++g_failures;
}

void fail_with_exception(const std::string& name, const std::exception& e) {
    check(name, false, std::string("exception: ") + e.what());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path g_work;
std::string work(const std::string& name) { return (g_work / name).string(); }

std::string preset(const std::string& name) {
    return std::string(RESDENS_PRESET_DIR) + "/" + name + ".cfg";
}

// ---- 1. gradient gate -----------------------------------------------------

void criterion_gradients() {
    const std::string name = "gradient gate (all layer groups + end-to-end <= 1e-5, under 60 s)";
    try {
        const auto t0 = std::chrono::steady_clock::now();
        const GradCheckReport r = run_gradcheck(NetworkConfig::load(preset("tiny")));
        const double secs = seconds_since(t0);
        double worst = 0.0;
        for (const auto& g : r.groups) worst = std::max(worst, g.worst_rel);
        check(name, r.all_pass() && r.groups.size() == 6 && secs < 60.0,
              "worst rel err " + fmt(worst) + " over " + std::to_string(r.groups.size()) +
                  " groups in " + fmt(secs) + " s");
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 2. oracle equivalence --------------------------------------------------

void criterion_oracles() {
    const std::string name = "oracle equivalence (conv/pool/affine vs definitional loops, >= 100 shapes)";
    try {
        Rng rng(6021);
        double worst = 0.0;
        std::size_t shapes = 0;

        for (int c = 0; c < 40; ++c) {
            const std::size_t n = 1 + rng.below(3), cin = 1 + rng.below(3), cout = 1 + rng.below(4);
            const std::size_t k = rng.below(2) ? 3 : 1;
            const ConvSpec spec{static_cast<int>(1 + rng.below(2)), static_cast<int>(rng.below(2)),
                                static_cast<int>(k), static_cast<int>(k)};
            const std::size_t h = k + rng.below(5), w = k + rng.below(5);
            const Tensor x = oracle::rand_tensor({n, cin, h, w}, rng);
            const Tensor wt = oracle::rand_tensor({cout, cin, k, k}, rng);
            const Tensor b = oracle::rand_tensor({cout}, rng);
            worst = std::max(worst, oracle::max_abs_diff(conv2d_forward(x, wt, b, spec),
                                                         oracle::conv2d(x, wt, b, spec)));
            ++shapes;
        }
        for (int c = 0; c < 35; ++c) {
            const std::size_t wh = 1 + rng.below(3), ww = 1 + rng.below(3);
            const std::size_t h = wh + rng.below(6), w = ww + rng.below(6);
            const Tensor x = oracle::rand_tensor({1 + rng.below(3), 1 + rng.below(4), h, w}, rng);
            const std::size_t sh = 1 + rng.below(2), sw = 1 + rng.below(2);
            worst = std::max(worst, oracle::max_abs_diff(avg_pool2d_forward(x, wh, ww, sh, sw),
                                                         oracle::avg_pool(x, wh, ww, sh, sw)));
            ++shapes;
        }
        for (int c = 0; c < 35; ++c) {
            const std::size_t n = 1 + rng.below(5), d = 1 + rng.below(8), m = 1 + rng.below(6);
            const Tensor x = oracle::rand_tensor({n, d}, rng);
            const Tensor wt = oracle::rand_tensor({d, m}, rng);
            const Tensor b = oracle::rand_tensor({m}, rng);
            worst = std::max(worst,
                             oracle::max_abs_diff(affine_forward(x, wt, b), oracle::affine(x, wt, b)));
            ++shapes;
        }
        check(name, shapes >= 100 && worst <= 1e-12,
              "max |diff| " + fmt(worst) + " across " + std::to_string(shapes) + " shapes");
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 3. overfit ------------------------------------------------------------

void criterion_overfit() {
    const std::string name = "overfit (16 images, batch 16, lr 1e-4: 100% train acc and loss < 0.01 within 500 iters, under 2 min)";
    try {
        const auto t0 = std::chrono::steady_clock::now();
        std::ostringstream log;
        SplitSpec spec;
        spec.counts = {16, 0, 0};
        run_synth(4, 32, 501, work("overfit_data"), &spec, log);

        TrainRunConfig cfg;
        cfg.network_config_path = preset("tiny");
        cfg.manifest_path = work("overfit_data/manifest.csv");
        cfg.out_dir = work("overfit_run");
        cfg.seed = 17;
        cfg.batch_size = 16;
        cfg.max_iterations = 500;
        cfg.learning_rate = 1e-4;
        cfg.log_interval = 1;
        cfg.timing = false;
        run_train(cfg, log);

        const auto rows = load_metrics_csv(work("overfit_run/metrics.csv"));
        std::uint64_t hit = 0;
        for (const auto& r : rows)
            if (r.train_acc == 1.0 && r.train_loss < 0.01) {
                hit = r.iteration;
                break;
            }
        const double secs = seconds_since(t0);
        check(name, hit > 0 && hit <= 500 && secs < 120.0,
              hit > 0 ? "reached at iteration " + std::to_string(hit) + " in " + fmt(secs) + " s"
                      : "never reached in 500 iterations (" + fmt(secs) + " s)");
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 4. synthetic four-class -----------------------------------------------

void criterion_synthetic() {
    const std::string name = "synthetic four-class (200/40/40: test acc >= 90%, two-class >= four-class, under 10 min)";
    try {
        const auto t0 = std::chrono::steady_clock::now();
        std::ostringstream log;
        SplitSpec spec;
        spec.counts = {200, 40, 40};
        run_synth(70, 32, 502, work("synth_data"), &spec, log);

        TrainRunConfig cfg;
        cfg.network_config_path = preset("tiny");
        cfg.manifest_path = work("synth_data/manifest.csv");
        cfg.out_dir = work("synth_run");
        cfg.seed = 42;
        cfg.batch_size = 16;
        cfg.max_iterations = 1000;
        cfg.learning_rate = 1e-4;
        cfg.log_interval = 100;
        cfg.timing = false;
        const TrainResult res = run_train(cfg, log);

        EvaluateOptions four;
        four.checkpoint_path = res.checkpoint_path;
        four.manifest_path = cfg.manifest_path;
        four.split = "test";
        four.class_mode = "four";
        const double acc4 = run_evaluate(four, log).overall_accuracy();

        EvaluateOptions two = four;
        two.class_mode = "two";
        const double acc2 = run_evaluate(two, log).overall_accuracy();

        const double secs = seconds_since(t0);
        check(name, acc4 >= 0.90 && acc2 >= acc4 && secs < 600.0,
              "four-class " + fmt(acc4 * 100.0) + "%, two-class " + fmt(acc2 * 100.0) + "% after " +
                  std::to_string(res.iterations) + " iterations in " + fmt(secs) + " s");
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 5. architecture accounting ----------------------------------------------

void criterion_architecture() {
    const std::string name = "architecture accounting (36L=33+3, 48L=45+3, 70L=67+3)";
    try {
        std::ostringstream got;
        bool ok = true;
        const struct {
            const char* preset_name;
            std::size_t conv, fc;
        } expect[] = {{"36L", 33, 3}, {"48L", 45, 3}, {"70L", 67, 3}};
        for (const auto& e : expect) {
            std::size_t conv = 0, fc = 0;
            {
                // scoped so only one full-size parameter set is live at a time
                Network net = build_network(NetworkConfig::load(preset(e.preset_name)), 1);
                conv = net.conv_layer_count();
                fc = net.fc_layer_count();
            }
            ok = ok && conv == e.conv && fc == e.fc;
            got << e.preset_name << "=" << conv << "+" << fc << " ";
        }
        check(name, ok, got.str());
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 6. augmentation arithmetic ----------------------------------------------

void criterion_augmentation() {
    const std::string name = "augmentation arithmetic (349/77 base -> 11168/2464 records, 28 class-IV -> 112)";
    try {
        // 437 sources with the published class mix; rebalancing adds 84
        // class-IV copies, and 349+77+95 covers the 521 records exactly.
        const std::size_t per_class[4] = {150, 150, 109, 28};
        fs::create_directories(work("aug_base/raw"));
        std::ofstream list(work("aug_base/base.csv"));
        list << "path,label\n";
        Rng rng(601);
        std::size_t serial = 0;
        for (int label = 0; label < 4; ++label)
            for (std::size_t i = 0; i < per_class[label]; ++i) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "raw/src%04zu.pgm", serial++);
                write_pgm(work("aug_base/") + buf, synth_image(label, 8, rng));
                list << buf << "," << label << "\n";
            }
        list.close();

        PrepareOptions opt;
        opt.manifest_path = work("aug_base/base.csv");
        opt.out_dir = work("aug_prepared");
        opt.seed = 29;
        opt.ordering = Ordering::paper;
        opt.split.counts = {349, 77, 95};
        std::ostringstream log;
        const DatasetManifest plan = run_prepare(opt, log);

        const std::size_t train = plan.count(Split::train);
        const std::size_t val = plan.count(Split::val);
        const std::size_t test = plan.count(Split::test);

        const DatasetManifest base = load_manifest(work("aug_base/base.csv"));
        const auto rebalanced = rebalance_minority(base.records);
        std::size_t class4 = 0;
        for (const auto& r : rebalanced)
            if (r.label == 3) ++class4;

        check(name, train == 11168 && val == 2464 && test == 95 && class4 == 112,
              "train " + std::to_string(train) + ", val " + std::to_string(val) + ", test " +
                  std::to_string(test) + ", rebalanced class-IV " + std::to_string(class4));
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 7. determinism and resume -----------------------------------------------

void criterion_determinism() {
    const std::string name = "determinism and resume (byte-identical metrics; resumed run == uninterrupted run)";
    try {
        std::ostringstream log;
        SplitSpec spec;
        spec.counts = {12, 2, 2};
        run_synth(4, 32, 503, work("det_data"), &spec, log);

        TrainRunConfig base;
        base.network_config_path = preset("tiny");
        base.manifest_path = work("det_data/manifest.csv");
        base.seed = 31;
        base.batch_size = 4;
        base.max_iterations = 6;
        base.log_interval = 1;
        base.timing = false;

        TrainRunConfig a = base;
        a.out_dir = work("det_a");
        run_train(a, log);
        TrainRunConfig b = base;
        b.out_dir = work("det_b");
        run_train(b, log);
        const bool repeat_ok = slurp(work("det_a/metrics.csv")) == slurp(work("det_b/metrics.csv"));

        TrainRunConfig leg1 = base;
        leg1.out_dir = work("det_resume");
        leg1.max_iterations = 3;
        const TrainResult r1 = run_train(leg1, log);
        TrainRunConfig leg2 = base;
        leg2.network_config_path.clear();
        leg2.out_dir = work("det_resume");
        leg2.resume_path = r1.checkpoint_path;
        run_train(leg2, log);
        const bool metrics_ok = slurp(work("det_a/metrics.csv")) == slurp(work("det_resume/metrics.csv"));
        const bool ckpt_ok =
            slurp(work("det_a/checkpoint.rdck")) == slurp(work("det_resume/checkpoint.rdck"));

        check(name, repeat_ok && metrics_ok && ckpt_ok,
              std::string("repeat metrics ") + (repeat_ok ? "equal" : "DIFFER") + ", resumed metrics " +
                  (metrics_ok ? "equal" : "DIFFER") + ", resumed checkpoint " +
                  (ckpt_ok ? "equal" : "DIFFER"));
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 8. Adam hand cases --------------------------------------------------------

void criterion_adam() {
    const std::string name = "Adam hand cases (single/two-step within 1e-15, zero gradient is a no-op)";
    try {
        AdamState st;
        st.cfg = AdamConfig{0.1, 0.9, 0.999, 1e-8};
        Tensor theta({1});
        Tensor grad({1});
        grad[0] = 1.0;
        ++st.t;
        adam_update_tensor("w", theta, grad, st);
        // bias corrections cancel at t=1, leaving theta = -lr / (1 + eps)
        const double want1 = -0.1 / (1.0 + 1e-8);
        const double err1 = std::abs(theta[0] - want1);

        grad[0] = 0.5;
        ++st.t;
        adam_update_tensor("w", theta, grad, st);
        const double m2 = 0.9 * 1.0 * 0.1 + 0.1 * 0.5;   // m1 = 0.1 after step 1
        const double v2 = 0.999 * 1.0 * 0.001 + 0.001 * 0.25;
        const double mhat = m2 / (1.0 - std::pow(0.9, 2));
        const double vhat = v2 / (1.0 - std::pow(0.999, 2));
        const double want2 = want1 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
        const double err2 = std::abs(theta[0] - want2);

        AdamState st0;
        Tensor p({3});
        p.fill(0.75);
        Tensor zero({3});
        bool noop = true;
        for (int i = 0; i < 4; ++i) {
            ++st0.t;
            adam_update_tensor("p", p, zero, st0);
            for (std::size_t j = 0; j < p.size(); ++j) noop = noop && p[j] == 0.75;
        }

        check(name, err1 <= 1e-15 && err2 <= 1e-15 && noop,
              "step-1 err " + fmt(err1) + ", step-2 err " + fmt(err2) + ", zero-grad " +
                  (noop ? "unchanged" : "MOVED"));
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

// ---- 9. report shape ------------------------------------------------------------

void criterion_report_shape() {
    const std::string name = "report shape (per-class rows + ALL(accuracy) in four- and two-class modes)";
    try {
        auto table_ok = [](const EvalReport& r) {
            std::ostringstream out;
            print_report(out, r);
            std::istringstream in(out.str());
            std::string line;
            std::getline(in, line);  // header
            std::size_t class_rows = 0;
            bool all_row = false;
            while (std::getline(in, line)) {
                if (line.rfind("ALL(accuracy)", 0) == 0) {
                    all_row = true;
                    break;
                }
                if (!line.empty()) ++class_rows;
            }
            return all_row && class_rows == r.k();
        };
        const EvalReport four = make_report({0, 1, 2, 3, 3}, {0, 1, 2, 3, 0}, class_names_four());
        const EvalReport two = make_report({0, 1, 1}, {0, 1, 0}, class_names_two());
        check(name, table_ok(four) && table_ok(two), "4 rows + ALL and 2 rows + ALL present");
    } catch (const std::exception& e) {
        fail_with_exception(name, e);
    }
}

} // namespace

int main() {
    g_work = fs::temp_directory_path() / ("resdens_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    criterion_gradients();
    criterion_oracles();
    criterion_overfit();
    criterion_synthetic();
    criterion_architecture();
    criterion_augmentation();
    criterion_determinism();
    criterion_adam();
    criterion_report_shape();

    fs::remove_all(g_work);
    if (g_failures > 0) {
        std::cout << g_failures << " criterion(s) failed\n";
        return 1;
    }
    std::cout << "all acceptance criteria satisfied\n";
    return 0;
}
