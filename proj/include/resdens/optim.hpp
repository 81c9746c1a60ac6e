#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "resdens/ops.hpp"
#include "resdens/rng.hpp"

namespace resdens {

struct LossValue {
    double mean = 0.0;
    std::vector<double> per_sample;
};

struct CrossEntropyResult {
    LossValue loss;
    Tensor grad_logits;  // gradient w.r.t. pre-softmax logits, already / N
};

// Mean categorical cross-entropy over the batch. The returned gradient is
// taken with respect to the logits that produced `probs` (softmax and loss
// fused), which is the numerically stable route: (probs - onehot) / N.
// Probabilities are floored at 1e-12 inside the log so confident wrong
// predictions stay finite.
inline CrossEntropyResult cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    require_rank(probs, 2, "cross_entropy", "probs");
    const std::size_t n = probs.dim(0), k = probs.dim(1);
    if (labels.size() != n)
        throw ShapeError("cross_entropy: batch axis (" + std::to_string(n) + ") != label count (" +
                         std::to_string(labels.size()) + ")");

    CrossEntropyResult r;
    r.loss.per_sample.resize(n);
    r.grad_logits = Tensor({n, k});
    const double floor = 1e-12;
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= k)
            throw LabelError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                             std::to_string(k) + ") at sample " + std::to_string(i));
        const double* prow = probs.data() + i * k;
        double* grow = r.grad_logits.data() + i * k;
        const double p = prow[label] < floor ? floor : prow[label];
        r.loss.per_sample[i] = -std::log(p);
        total += r.loss.per_sample[i];
        for (std::size_t j = 0; j < k; ++j) grow[j] = prow[j] * inv_n;
        grow[label] -= inv_n;
    }
    r.loss.mean = total * inv_n;
    return r;
}

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
};

// Adam with bias correction. The step counter advances once per adam_step
// call (one optimizer step covers every parameter tensor).
struct AdamState {
    AdamConfig cfg;
    long long t = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;

    Tensor& moment(std::map<std::string, Tensor>& store, const std::string& name, const Shape& shape) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, Tensor(shape)).first;
        if (it->second.shape() != shape)
            throw ShapeError("adam: moment shape " + shape_str(it->second.shape()) + " != parameter shape " +
                             shape_str(shape) + " for " + name);
        return it->second;
    }
};

// In-place Adam update of one named tensor:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps_hat)
// with m_hat = m/(1-b1^t), v_hat = v/(1-b2^t). The caller advances t.
inline void adam_update_tensor(const std::string& name, Tensor& value, const Tensor& grad, AdamState& st) {
    if (!value.same_shape(grad))
        throw ShapeError("adam: grad shape " + shape_str(grad.shape()) + " != parameter shape " +
                         shape_str(value.shape()) + " for " + name);
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw NumericError("adam_step: non-finite gradient in parameter '" + name + "'");

    Tensor& m = st.moment(st.m, name, value.shape());
    Tensor& v = st.moment(st.v, name, value.shape());
    const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / corr1;
        const double vhat = v[i] / corr2;
        value[i] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps_hat);
    }
}

// ParamRange yields views with members: name (string), value (Tensor&),
// grad (const Tensor&), learnable (bool).
template <typename ParamRange>
void adam_step(ParamRange&& params, AdamState& st) {
    ++st.t;
    for (auto&& p : params) {
        if (!p.learnable) continue;
        adam_update_tensor(p.name, *p.value, *p.grad, st);
    }
}

// Fan-based uniform init: Uniform(-b, b) with b = sqrt(6/(fan_in+fan_out)).
inline void init_uniform_fan(Tensor& w, std::size_t fan_in, std::size_t fan_out, Rng rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
}

inline double fan_uniform_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

} // namespace resdens
