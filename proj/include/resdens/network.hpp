#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "resdens/config.hpp"
#include "resdens/optim.hpp"
#include "resdens/residual.hpp"

namespace resdens {

enum class ProjectionPolicy { automatic, always };

struct StageConfig {
    int blocks = 0;
    int channels = 0;
    int convs_per_block = 2;
    ProjectionPolicy projection = ProjectionPolicy::automatic;
};

// Declarative architecture description. The residual stages sit between a
// stem convolution and the fully connected head; 2x2/stride-2 average
// pooling follows every stage boundary (and optionally the stem and the
// last stage). The first FC width is derived from the flattened feature
// map, so the input size is part of the architecture.
struct NetworkConfig {
    std::string name;
    int classes = 4;
    std::size_t input_h = 224;
    std::size_t input_w = 224;
    int stem_channels = 64;
    int stem_kernel = 3;
    bool stem_pool = false;
    std::vector<StageConfig> stages;
    bool final_pool = true;
    std::vector<int> fc_widths;  // last entry == classes

    void validate() const {
        if (classes != 2 && classes != 4)
            throw ConfigError("NetworkConfig: classes must be 2 or 4, got " + std::to_string(classes));
        if (input_h < 1 || input_w < 1) throw ConfigError("NetworkConfig: input size must be positive");
        if (stem_channels < 1) throw ConfigError("NetworkConfig: stem channels must be positive");
        if (stem_kernel < 1 || stem_kernel % 2 == 0)
            throw ConfigError("NetworkConfig: stem kernel must be odd and positive, got " +
                              std::to_string(stem_kernel));
        if (stages.empty()) throw ConfigError("NetworkConfig: at least one stage required");
        for (std::size_t s = 0; s < stages.size(); ++s) {
            if (stages[s].blocks < 1 || stages[s].channels < 1)
                throw ConfigError("NetworkConfig: stage " + std::to_string(s + 1) +
                                  " blocks/channels must be positive");
            if (stages[s].convs_per_block < 2 || stages[s].convs_per_block > 3)
                throw ConfigError("NetworkConfig: stage " + std::to_string(s + 1) +
                                  " convs_per_block must be 2 or 3");
        }
        if (fc_widths.empty())
            throw ConfigError("NetworkConfig: fc widths missing");
        if (fc_widths.back() != classes)
            throw ConfigError("NetworkConfig: fc tail (" + std::to_string(fc_widths.back()) +
                              ") != classes (" + std::to_string(classes) + ")");
        for (int wdt : fc_widths)
            if (wdt < 1) throw ConfigError("NetworkConfig: fc widths must be positive");
    }

    static NetworkConfig from_kv(const KeyValueFile& kv) {
        NetworkConfig c;
        c.name = kv.get_string("network.name", "");
        c.classes = static_cast<int>(kv.get_int("network.classes", 4));
        c.input_h = static_cast<std::size_t>(kv.get_int("network.input_height", 224));
        c.input_w = static_cast<std::size_t>(kv.get_int("network.input_width", 224));
        c.stem_channels = static_cast<int>(kv.get_int("stem.channels", 64));
        c.stem_kernel = static_cast<int>(kv.get_int("stem.kernel", 3));
        c.stem_pool = kv.get_bool("stem.pool", false);
        for (int s = 1;; ++s) {
            const std::string sec = "stage" + std::to_string(s);
            if (!kv.has(sec + ".blocks")) break;
            StageConfig sc;
            sc.blocks = static_cast<int>(kv.get_int(sec + ".blocks"));
            sc.channels = static_cast<int>(kv.get_int(sec + ".channels"));
            sc.convs_per_block = static_cast<int>(kv.get_int(sec + ".convs_per_block", 2));
            const std::string proj = kv.get_string(sec + ".projection", "auto");
            if (proj == "auto")
                sc.projection = ProjectionPolicy::automatic;
            else if (proj == "always")
                sc.projection = ProjectionPolicy::always;
            else
                throw ConfigError("NetworkConfig: " + sec + ".projection must be auto|always, got '" + proj + "'");
            c.stages.push_back(sc);
        }
        c.final_pool = kv.get_bool("head.final_pool", true);
        for (long long wdt : kv.get_int_list("head.fc")) c.fc_widths.push_back(static_cast<int>(wdt));
        c.validate();
        return c;
    }

    static NetworkConfig load(const std::string& path) { return from_kv(KeyValueFile::load(path)); }

    KeyValueFile to_kv() const {
        KeyValueFile kv;
        kv.set("network.name", name);
        kv.set("network.classes", std::to_string(classes));
        kv.set("network.input_height", std::to_string(input_h));
        kv.set("network.input_width", std::to_string(input_w));
        kv.set("stem.channels", std::to_string(stem_channels));
        kv.set("stem.kernel", std::to_string(stem_kernel));
        kv.set("stem.pool", stem_pool ? "true" : "false");
        for (std::size_t s = 0; s < stages.size(); ++s) {
            const std::string sec = "stage" + std::to_string(s + 1);
            kv.set(sec + ".blocks", std::to_string(stages[s].blocks));
            kv.set(sec + ".channels", std::to_string(stages[s].channels));
            kv.set(sec + ".convs_per_block", std::to_string(stages[s].convs_per_block));
            kv.set(sec + ".projection", stages[s].projection == ProjectionPolicy::always ? "always" : "auto");
        }
        kv.set("head.final_pool", final_pool ? "true" : "false");
        std::string fcs;
        for (std::size_t i = 0; i < fc_widths.size(); ++i)
            fcs += (i ? "," : "") + std::to_string(fc_widths[i]);
        kv.set("head.fc", fcs);
        return kv;
    }

    std::uint64_t hash() const { return to_kv().hash(); }
};

enum class ParamKind { conv_weight, fc_weight, bias, bn_gamma, bn_beta, bn_running_mean, bn_running_var };

inline bool is_learnable(ParamKind k) {
    return k != ParamKind::bn_running_mean && k != ParamKind::bn_running_var;
}

struct ParamView {
    std::string name;
    ParamKind kind;
    Tensor* value;
    Tensor* grad;  // nullptr for non-learnable state tensors
    bool learnable;
};

struct FcLayer {
    Tensor weight;  // [D, M]
    Tensor bias;    // [M]
};

struct NetCache {
    Mode mode = Mode::eval;
    Tensor input;
    BatchNormCache stem_bn_cache;
    Tensor stem_bn_out;
    Shape stem_pool_in;
    std::vector<std::vector<BlockCache>> blocks;
    std::vector<Shape> stage_pool_in;  // one entry per pool actually applied
    Shape flatten_in;
    std::vector<Tensor> fc_inputs;
    std::vector<Tensor> fc_pre_relu;  // all but the last affine
    Tensor logits;
};

struct ForwardResult {
    Tensor probs;
    NetCache cache;
};

// The assembled model: structure, parameters, their gradients, and the
// ordered named registry over them (the parameter set handed to the
// optimizer and the checkpoint writer).
class Network {
public:
    NetworkConfig config;
    ConvUnit stem;
    std::vector<std::vector<ResidualBlock>> stages;
    std::vector<FcLayer> fcs;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;

    // Walks parameters in canonical order: stem, stages/blocks (convs, then
    // projection), fc layers. BN running stats are walked as non-learnable.
    template <typename F>
    void for_each_param(F&& f) {
        visit_conv_unit("stem", stem, true, f);
        for (std::size_t s = 0; s < stages.size(); ++s)
            for (std::size_t b = 0; b < stages[s].size(); ++b) {
                const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
                ResidualBlock& blk = stages[s][b];
                for (std::size_t c = 0; c < blk.convs.size(); ++c)
                    visit_conv_unit(prefix + ".conv" + std::to_string(c + 1), blk.convs[c], true, f,
                                    prefix + ".bn" + std::to_string(c + 1));
                if (blk.projection) {
                    f(ParamView{prefix + ".proj.weight", ParamKind::conv_weight, &blk.projection->weight,
                                grad_ptr(prefix + ".proj.weight"), true});
                    f(ParamView{prefix + ".proj.bias", ParamKind::bias, &blk.projection->bias,
                                grad_ptr(prefix + ".proj.bias"), true});
                }
            }
        for (std::size_t i = 0; i < fcs.size(); ++i) {
            const std::string prefix = "fc" + std::to_string(i + 1);
            f(ParamView{prefix + ".weight", ParamKind::fc_weight, &fcs[i].weight, grad_ptr(prefix + ".weight"),
                        true});
            f(ParamView{prefix + ".bias", ParamKind::bias, &fcs[i].bias, grad_ptr(prefix + ".bias"), true});
        }
    }

    std::vector<ParamView> params() {
        std::vector<ParamView> out;
        for_each_param([&](const ParamView& v) { out.push_back(v); });
        return out;
    }

    Tensor& grad(const std::string& name) {
        auto it = grads_.find(name);
        if (it == grads_.end()) throw UsageError("Network: unknown parameter '" + name + "'");
        return it->second;
    }

    void zero_grads() {
        for (auto& [name, g] : grads_) g.fill(0.0);
    }

    std::size_t conv_layer_count() const {
        std::size_t n = 1;  // stem
        for (const auto& stage : stages)
            for (const auto& blk : stage) n += blk.convs.size() + (blk.projection ? 1 : 0);
        return n;
    }
    std::size_t fc_layer_count() const { return fcs.size(); }
    std::size_t weight_layer_count() const { return conv_layer_count() + fc_layer_count(); }

    // Spatial size of the feature map entering the flatten, per config.
    std::pair<std::size_t, std::size_t> feature_map_size() const {
        std::size_t h = config.input_h, w = config.input_w;
        auto pool = [](std::size_t d) {
            if (d < 2) throw ConfigError("NetworkConfig: feature map collapses below 2x2 before a pool");
            return (d - 2) / 2 + 1;
        };
        if (config.stem_pool) { h = pool(h); w = pool(w); }
        for (std::size_t s = 0; s < config.stages.size(); ++s) {
            const bool last = (s + 1 == config.stages.size());
            if (!last || config.final_pool) { h = pool(h); w = pool(w); }
        }
        return {h, w};
    }

    std::size_t flatten_dim() const {
        auto [h, w] = feature_map_size();
        return static_cast<std::size_t>(config.stages.back().channels) * h * w;
    }

    ForwardResult forward(const Tensor& batch, Mode mode) {
        require_rank(batch, 4, "Network::forward", "batch");
        if (batch.dim(1) != 1)
            throw ShapeError("Network::forward: expected single-channel input, got " +
                             std::to_string(batch.dim(1)) + " channels");
        if (batch.dim(2) != config.input_h || batch.dim(3) != config.input_w)
            throw ShapeError("Network::forward: input spatial size " + std::to_string(batch.dim(2)) + "x" +
                             std::to_string(batch.dim(3)) + " != configured " + std::to_string(config.input_h) +
                             "x" + std::to_string(config.input_w));

        const bool train = (mode == Mode::train);
        ForwardResult r;
        r.cache.mode = mode;
        if (train) r.cache.input = batch;

        const ConvSpec stem_spec{1, (config.stem_kernel - 1) / 2, config.stem_kernel, config.stem_kernel};
        Tensor x = conv2d_forward(batch, stem.weight, stem.bias, stem_spec);
        auto bn = batchnorm_forward(x, stem.bn, mode);
        if (train) {
            r.cache.stem_bn_cache = std::move(bn.cache);
            r.cache.stem_bn_out = bn.y;
        }
        x = relu_forward(bn.y);
        if (config.stem_pool) {
            if (train) r.cache.stem_pool_in = x.shape();
            x = avg_pool2d_forward(x, 2, 2, 2, 2);
        }

        if (train) r.cache.blocks.resize(stages.size());
        for (std::size_t s = 0; s < stages.size(); ++s) {
            for (auto& blk : stages[s]) {
                auto br = residual_block_forward(x, blk, mode);
                x = std::move(br.y);
                if (train) r.cache.blocks[s].push_back(std::move(br.cache));
            }
            const bool last = (s + 1 == stages.size());
            if (!last || config.final_pool) {
                if (train) r.cache.stage_pool_in.push_back(x.shape());
                x = avg_pool2d_forward(x, 2, 2, 2, 2);
            }
        }

        if (train) r.cache.flatten_in = x.shape();
        const std::size_t n = x.dim(0);
        const std::size_t d = x.size() / n;
        Tensor flat({n, d});
        std::copy(x.data(), x.data() + x.size(), flat.data());

        for (std::size_t i = 0; i < fcs.size(); ++i) {
            if (train) r.cache.fc_inputs.push_back(flat);
            Tensor z = affine_forward(flat, fcs[i].weight, fcs[i].bias);
            if (i + 1 < fcs.size()) {
                if (train) r.cache.fc_pre_relu.push_back(z);
                flat = relu_forward(z);
            } else {
                flat = std::move(z);
            }
        }
        if (train) r.cache.logits = flat;
        r.probs = softmax(flat);
        return r;
    }

    // grad_logits: gradient of the loss w.r.t. the final affine output (the
    // softmax is fused into the loss; see cross_entropy). Writes every
    // parameter's gradient; gradients are assigned, not accumulated.
    void backward(const NetCache& cache, const Tensor& grad_logits) {
        if (cache.mode != Mode::train)
            throw UsageError("Network::backward: cache was produced in eval mode");
        if (!grad_logits.same_shape(cache.logits))
            throw ShapeError("Network::backward: grad_logits shape " + shape_str(grad_logits.shape()) +
                             " != logits shape " + shape_str(cache.logits.shape()));

        Tensor grad = grad_logits;
        for (std::size_t i = fcs.size(); i-- > 0;) {
            const std::string prefix = "fc" + std::to_string(i + 1);
            if (i + 1 < fcs.size()) grad = relu_backward(cache.fc_pre_relu[i], grad);
            auto fg = affine_backward(cache.fc_inputs[i], fcs[i].weight, grad);
            grads_[prefix + ".weight"] = std::move(fg.grad_weight);
            grads_[prefix + ".bias"] = std::move(fg.grad_bias);
            grad = std::move(fg.grad_input);
        }

        Tensor gx(cache.flatten_in);
        std::copy(grad.data(), grad.data() + grad.size(), gx.data());

        std::size_t pool_idx = cache.stage_pool_in.size();
        for (std::size_t s = stages.size(); s-- > 0;) {
            const bool last = (s + 1 == stages.size());
            if (!last || config.final_pool)
                gx = avg_pool2d_backward(cache.stage_pool_in[--pool_idx], 2, 2, 2, 2, gx);
            for (std::size_t b = stages[s].size(); b-- > 0;) {
                const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
                auto bg = residual_block_backward(stages[s][b], cache.blocks[s][b], gx);
                for (std::size_t c = 0; c < bg.convs.size(); ++c) {
                    const std::string ci = std::to_string(c + 1);
                    grads_[prefix + ".conv" + ci + ".weight"] = std::move(bg.convs[c].grad_weight);
                    grads_[prefix + ".conv" + ci + ".bias"] = std::move(bg.convs[c].grad_bias);
                    grads_[prefix + ".bn" + ci + ".gamma"] = std::move(bg.convs[c].grad_gamma);
                    grads_[prefix + ".bn" + ci + ".beta"] = std::move(bg.convs[c].grad_beta);
                }
                if (stages[s][b].projection) {
                    grads_[prefix + ".proj.weight"] = std::move(bg.grad_proj_weight);
                    grads_[prefix + ".proj.bias"] = std::move(bg.grad_proj_bias);
                }
                gx = std::move(bg.grad_x);
            }
        }

        if (config.stem_pool) gx = avg_pool2d_backward(cache.stem_pool_in, 2, 2, 2, 2, gx);
        gx = relu_backward(cache.stem_bn_out, gx);
        auto bng = batchnorm_backward(cache.stem_bn_cache, gx);
        grads_["stem.bn.gamma"] = std::move(bng.grad_gamma);
        grads_["stem.bn.beta"] = std::move(bng.grad_beta);
        const ConvSpec stem_spec{1, (config.stem_kernel - 1) / 2, config.stem_kernel, config.stem_kernel};
        auto cg = conv2d_backward(cache.input, stem.weight, stem_spec, bng.grad_x);
        grads_["stem.conv.weight"] = std::move(cg.grad_weight);
        grads_["stem.conv.bias"] = std::move(cg.grad_bias);
    }

    std::vector<int> predict(const Tensor& batch) {
        Tensor probs = forward(batch, Mode::eval).probs;
        const std::size_t n = probs.dim(0), k = probs.dim(1);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = probs.data() + i * k;
            int best = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (row[j] > row[best]) best = static_cast<int>(j);  // ties keep the lowest index
            labels[i] = best;
        }
        return labels;
    }

    friend Network build_network(const NetworkConfig& config, std::uint64_t seed);

private:
    template <typename F>
    void visit_conv_unit(const std::string& prefix, ConvUnit& u, bool with_bn, F&& f,
                         const std::string& bn_prefix_in = "") {
        const std::string conv_prefix = prefix == "stem" ? "stem.conv" : prefix;
        const std::string bn_prefix = bn_prefix_in.empty() ? (prefix == "stem" ? "stem.bn" : prefix + ".bn")
                                                           : bn_prefix_in;
        f(ParamView{conv_prefix + ".weight", ParamKind::conv_weight, &u.weight, grad_ptr(conv_prefix + ".weight"),
                    true});
        f(ParamView{conv_prefix + ".bias", ParamKind::bias, &u.bias, grad_ptr(conv_prefix + ".bias"), true});
        if (with_bn) {
            f(ParamView{bn_prefix + ".gamma", ParamKind::bn_gamma, &u.bn.gamma, grad_ptr(bn_prefix + ".gamma"),
                        true});
            f(ParamView{bn_prefix + ".beta", ParamKind::bn_beta, &u.bn.beta, grad_ptr(bn_prefix + ".beta"), true});
            f(ParamView{bn_prefix + ".running_mean", ParamKind::bn_running_mean, &u.bn.running_mean, nullptr,
                        false});
            f(ParamView{bn_prefix + ".running_var", ParamKind::bn_running_var, &u.bn.running_var, nullptr, false});
        }
    }

    Tensor* grad_ptr(const std::string& name) {
        auto it = grads_.find(name);
        return it == grads_.end() ? nullptr : &it->second;
    }

    std::map<std::string, Tensor> grads_;
};

// Builds the model structure and initializes parameters: weights from the
// fan-based uniform rule, biases and BN betas zero, BN gammas and running
// variances one. Each tensor draws from a substream keyed by its name, so
// the result is a pure function of (config, seed).
inline Network build_network(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Network net;
    net.config = config;
    net.seed = seed;
    net.config_hash = config.hash();

    net.stem.weight = Tensor({static_cast<std::size_t>(config.stem_channels), 1,
                              static_cast<std::size_t>(config.stem_kernel),
                              static_cast<std::size_t>(config.stem_kernel)});
    net.stem.bias = Tensor({static_cast<std::size_t>(config.stem_channels)});
    net.stem.bn = BatchNormState(config.stem_channels);

    std::size_t in_ch = static_cast<std::size_t>(config.stem_channels);
    for (const auto& sc : config.stages) {
        std::vector<ResidualBlock> blocks;
        for (int b = 0; b < sc.blocks; ++b) {
            const bool first = (b == 0);
            const bool force = first && sc.projection == ProjectionPolicy::always;
            blocks.push_back(ResidualBlock::make(first ? in_ch : sc.channels, sc.channels, sc.convs_per_block,
                                                 3, force));
        }
        net.stages.push_back(std::move(blocks));
        in_ch = static_cast<std::size_t>(sc.channels);
    }

    std::size_t d = net.flatten_dim();
    for (int width : config.fc_widths) {
        FcLayer fc;
        fc.weight = Tensor({d, static_cast<std::size_t>(width)});
        fc.bias = Tensor({static_cast<std::size_t>(width)});
        net.fcs.push_back(std::move(fc));
        d = static_cast<std::size_t>(width);
    }

    // Allocate gradient tensors mirroring every learnable parameter, then
    // initialize values.
    Rng root(seed);
    net.for_each_param([&](const ParamView& v) {
        if (v.learnable) net.grads_.emplace(v.name, Tensor(v.value->shape()));
    });
    net.for_each_param([&](const ParamView& v) {
        switch (v.kind) {
        case ParamKind::conv_weight: {
            const Shape& s = v.value->shape();
            init_uniform_fan(*v.value, s[1] * s[2] * s[3], s[0] * s[2] * s[3], root.derive(v.name));
            break;
        }
        case ParamKind::fc_weight: {
            const Shape& s = v.value->shape();
            init_uniform_fan(*v.value, s[0], s[1], root.derive(v.name));
            break;
        }
        case ParamKind::bias:
        case ParamKind::bn_beta:
        case ParamKind::bn_running_mean:
            v.value->fill(0.0);
            break;
        case ParamKind::bn_gamma:
        case ParamKind::bn_running_var:
            v.value->fill(1.0);
            break;
        }
    });
    return net;
}

inline void adam_step(Network& net, AdamState& st) {
    ++st.t;
    net.for_each_param([&](const ParamView& v) {
        if (!v.learnable) return;
        adam_update_tensor(v.name, *v.value, *v.grad, st);
    });
}

} // namespace resdens
