/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "driftbench/corpus.hpp"
#include "driftbench/detail/text.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/rng.hpp"

namespace driftbench {

struct Architecture {
    enum class Kind { Linear, Mlp };

    Kind kind = Kind::Linear;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;  // MLP only
    std::size_t num_classes = 0;

    static Architecture linear(std::size_t d, std::size_t c) { return {Kind::Linear, d, 0, c}; }
    static Architecture mlp(std::size_t d, std::size_t h, std::size_t c) { return {Kind::Mlp, d, h, c}; }

    // Flat parameter count. Linear: W (C x d), b (C). MLP: W1 (h x d), b1 (h), W2 (C x h), b2 (C).
    std::size_t parameter_count() const {
        if (kind == Kind::Linear) return num_classes * input_dim + num_classes;
        return hidden * input_dim + hidden + num_classes * hidden + num_classes;
    }

    void validate() const {
        if (input_dim < 1 || num_classes < 1)
            throw std::invalid_argument("architecture: input_dim and num_classes must be >= 1");
        if (kind == Kind::Mlp && hidden < 1) throw std::invalid_argument("architecture: hidden must be >= 1");
    }

    bool operator==(const Architecture&) const = default;
};

// Shape-free architecture spec as written in configs: `linear` or `mlp:<hidden>`.
struct ArchitectureSpec {
    Architecture::Kind kind = Architecture::Kind::Linear;
    std::size_t hidden = 64;

    Architecture resolve(std::size_t input_dim, std::size_t num_classes) const {
        return kind == Architecture::Kind::Linear ? Architecture::linear(input_dim, num_classes)
                                                  : Architecture::mlp(input_dim, hidden, num_classes);
    }

    bool operator==(const ArchitectureSpec&) const = default;
};

inline ArchitectureSpec parse_architecture(std::string_view text) {
    text = detail::trim(text);
    if (text == "linear") return {Architecture::Kind::Linear, 0};
    if (text.starts_with("mlp:")) {
        const auto h = detail::parse_number<std::size_t>(text.substr(4));
        if (!h || *h == 0) throw std::invalid_argument("architecture 'mlp:<hidden>' needs hidden >= 1");
        return {Architecture::Kind::Mlp, *h};
    }
    throw std::invalid_argument("architecture '" + std::string(text) + "' must be linear or mlp:<hidden>");
}

inline std::string to_string(const ArchitectureSpec& a) {
    return a.kind == Architecture::Kind::Linear ? "linear" : "mlp:" + std::to_string(a.hidden);
}

struct Hyperparams {
    double learning_rate = 1.0;
    double momentum = 0.9;
    double weight_decay = 0.0;
    std::size_t batch_size = 256;
    std::size_t epochs = 100;
    std::size_t decay_epoch = 60;
    double decay_factor = 0.1;
    std::uint64_t seed = 0;

    // Linear probes start at lr 1.0, MLPs at 0.1; everything else is shared.
    static Hyperparams defaults_for(Architecture::Kind kind) {
        Hyperparams hp;
        hp.learning_rate = kind == Architecture::Kind::Linear ? 1.0 : 0.1;
        return hp;
    }

    void validate() const {
        if (!(std::isfinite(learning_rate) && learning_rate >= 0.0))
            throw std::invalid_argument("hyperparams: lr must be finite and >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("hyperparams: momentum must lie in [0, 1)");
        if (!(std::isfinite(weight_decay) && weight_decay >= 0.0))
            throw std::invalid_argument("hyperparams: weight_decay must be >= 0");
        if (batch_size < 1) throw std::invalid_argument("hyperparams: batch must be >= 1");
        if (epochs < 1) throw std::invalid_argument("hyperparams: epochs must be >= 1");
        if (decay_epoch < 1 || decay_epoch > epochs)
            throw std::invalid_argument("hyperparams: decay_epoch must lie in [1, epochs]");
        if (!(decay_factor > 0.0 && decay_factor <= 1.0))
            throw std::invalid_argument("hyperparams: decay_factor must lie in (0, 1]");
    }

    bool operator==(const Hyperparams&) const = default;
};

struct LearnerState {
    Architecture arch;
    std::vector<double> params;
    std::vector<double> velocity;

    bool operator==(const LearnerState&) const = default;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, zero momentum.
inline LearnerState init_learner(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    LearnerState state{arch, std::vector<double>(arch.parameter_count(), 0.0),
                       std::vector<double>(arch.parameter_count(), 0.0)};
    Rng rng(seed);
    auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < count; ++i) state.params[offset + i] = rng.uniform(-bound, bound);
    };
    const std::size_t d = arch.input_dim, c = arch.num_classes;
    if (arch.kind == Architecture::Kind::Linear) {
        fill(0, c * d, d);
    } else {
        const std::size_t h = arch.hidden;
        fill(0, h * d, d);
        fill(h * d + h, c * h, h);
    }
    return state;
}

namespace detail {

struct Workspace {
    std::vector<double> hidden;  // post-ReLU activations (MLP)
    std::vector<double> logits;
};

inline void check_finite(std::span<const double> x) {
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError("non-finite feature value");
}

inline void forward(const LearnerState& s, std::span<const double> x, Workspace& ws) {
    const auto& a = s.arch;
    const std::size_t d = a.input_dim, c = a.num_classes;
    const double* p = s.params.data();
    ws.logits.assign(c, 0.0);
    if (a.kind == Architecture::Kind::Linear) {
        const double* bias = p + c * d;
        for (std::size_t k = 0; k < c; ++k) {
            double z = bias[k];
            for (std::size_t j = 0; j < d; ++j) z += p[k * d + j] * x[j];
            ws.logits[k] = z;
        }
        return;
    }
    const std::size_t h = a.hidden;
    const double* b1 = p + h * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + c * h;
    ws.hidden.assign(h, 0.0);
    for (std::size_t u = 0; u < h; ++u) {
        double z = b1[u];
        for (std::size_t j = 0; j < d; ++j) z += p[u * d + j] * x[j];
        ws.hidden[u] = z > 0.0 ? z : 0.0;
    }
    for (std::size_t k = 0; k < c; ++k) {
        double z = b2[k];
        for (std::size_t u = 0; u < h; ++u) z += w2[k * h + u] * ws.hidden[u];
        ws.logits[k] = z;
    }
}

// Converts logits to softmax probabilities in place; returns -log p[label].
inline double softmax_xent(std::vector<double>& logits, std::size_t label) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    const double shifted_label = logits[label] - peak;
    double sum = 0.0;
    for (double& z : logits) {
        z = std::exp(z - peak);
        sum += z;
    }
    const double log_sum = std::log(sum);
    const double nll = log_sum - shifted_label;
    for (double& z : logits) z /= sum;
    return nll;
}

inline void check_batch(const LearnerState& s, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    for (const auto& smp : batch) {
        if (smp.features.size() != s.arch.input_dim)
            throw std::invalid_argument("sample " + std::to_string(smp.id) + ": dimension mismatch");
        if (smp.label >= s.arch.num_classes)
            throw std::invalid_argument("sample " + std::to_string(smp.id) + ": label out of range");
        check_finite(smp.features);
    }
}

// Mean cross-entropy over the batch; accumulates d(loss)/d(params) into grad when non-empty.
inline double loss_and_grad(const LearnerState& s, std::span<const Sample> batch, std::span<double> grad) {
    const auto& a = s.arch;
    const std::size_t d = a.input_dim, c = a.num_classes;
    const double scale = 1.0 / static_cast<double>(batch.size());
    const bool want_grad = !grad.empty();
    Workspace ws;
    std::vector<double> dhidden;
    double total = 0.0;

    for (const auto& smp : batch) {
        forward(s, smp.features, ws);
        total += softmax_xent(ws.logits, smp.label);
        if (!want_grad) continue;
        // ws.logits now holds probabilities; dL/dz = p - onehot.
        ws.logits[smp.label] -= 1.0;
        const auto& x = smp.features;
        if (a.kind == Architecture::Kind::Linear) {
            for (std::size_t k = 0; k < c; ++k) {
                const double dz = ws.logits[k] * scale;
                for (std::size_t j = 0; j < d; ++j) grad[k * d + j] += dz * x[j];
                grad[c * d + k] += dz;
            }
            continue;
        }
        const std::size_t h = a.hidden;
        const std::size_t off_b1 = h * d, off_w2 = off_b1 + h, off_b2 = off_w2 + c * h;
        const double* w2 = s.params.data() + off_w2;
        dhidden.assign(h, 0.0);
        for (std::size_t k = 0; k < c; ++k) {
            const double dz = ws.logits[k] * scale;
            for (std::size_t u = 0; u < h; ++u) {
                grad[off_w2 + k * h + u] += dz * ws.hidden[u];
                dhidden[u] += dz * w2[k * h + u];
            }
            grad[off_b2 + k] += dz;
        }
        for (std::size_t u = 0; u < h; ++u) {
            // ReLU subgradient at 0 is 0; hidden > 0 iff pre-activation > 0.
            if (ws.hidden[u] <= 0.0) continue;
            const double dz = dhidden[u];
            for (std::size_t j = 0; j < d; ++j) grad[u * d + j] += dz * x[j];
            grad[off_b1 + u] += dz;
        }
    }
    return total * scale;
}

}  // namespace detail

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;  // same flat layout as LearnerState::params
};

inline LossGrad forward_loss_grad(const LearnerState& state, std::span<const Sample> batch) {
    detail::check_batch(state, batch);
    LossGrad out{0.0, std::vector<double>(state.params.size(), 0.0)};
    out.loss = detail::loss_and_grad(state, batch, out.grad);
    return out;
}

inline double mean_loss(const LearnerState& state, std::span<const Sample> data) {
    detail::check_batch(state, data);
    return detail::loss_and_grad(state, data, {});
}

// Invoked after every epoch with (epoch index, state).
using EpochCallback = std::function<void(std::size_t, const LearnerState&)>;

// Momentum SGD: v <- momentum * v + g, theta <- theta - lr * v, with g including
// weight_decay * theta. Each epoch reshuffles; the short last batch is kept.
// lr is multiplied by decay_factor from epoch decay_epoch onwards.
inline LearnerState train(LearnerState state, std::span<const Sample> dataset, const Hyperparams& hp,
                          const EpochCallback& on_epoch = {}) {
    hp.validate();
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    detail::check_batch(state, dataset);

    Rng rng(hp.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Sample> batch;
    batch.reserve(hp.batch_size);
    std::vector<double> grad(state.params.size());

    for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
        const double lr = epoch >= hp.decay_epoch ? hp.learning_rate * hp.decay_factor : hp.learning_rate;
        rng.shuffle(std::span(order));
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            const std::size_t stop = std::min(order.size(), start + hp.batch_size);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(dataset[order[i]]);
            std::fill(grad.begin(), grad.end(), 0.0);
            detail::loss_and_grad(state, batch, grad);
            for (std::size_t p = 0; p < grad.size(); ++p) {
                const double g = grad[p] + hp.weight_decay * state.params[p];
                state.velocity[p] = hp.momentum * state.velocity[p] + g;
                state.params[p] -= lr * state.velocity[p];
            }
        }
        if (on_epoch) on_epoch(epoch, state);
    }
    for (double v : state.params)
        if (!std::isfinite(v)) throw NumericError("training diverged: non-finite parameter");
    return state;
}

// Argmax of the logits; ties go to the lowest class index.
inline std::size_t predict(const LearnerState& state, std::span<const double> features) {
    if (features.size() != state.arch.input_dim) throw std::invalid_argument("predict: dimension mismatch");
    detail::check_finite(features);
    detail::Workspace ws;
    detail::forward(state, features, ws);
    std::size_t best = 0;
    for (std::size_t k = 1; k < ws.logits.size(); ++k)
        if (ws.logits[k] > ws.logits[best]) best = k;
    return best;
}

enum class Strategy { Napping, FromScratch, Finetuning, GDumbLike };

inline std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::Napping: return "napping";
        case Strategy::FromScratch: return "from_scratch";
        case Strategy::Finetuning: return "finetuning";
        case Strategy::GDumbLike: return "gdumb";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view text) {
    text = detail::trim(text);
    for (auto s : {Strategy::Napping, Strategy::FromScratch, Strategy::Finetuning, Strategy::GDumbLike})
        if (text == to_string(s)) return s;
    throw std::invalid_argument("strategy '" + std::string(text) +
                                "' must be one of napping, from_scratch, finetuning, gdumb");
}

// Init seed is decorrelated from the shuffle seed in hp.
inline std::uint64_t init_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ULL; }

// One timestamp of a continual learner. `prev` is the previous step's output.
//   Napping:     train at the first index only; afterwards return prev unchanged.
//   FromScratch: fresh init, then train.
//   Finetuning:  train starting from prev (fresh init at the first index).
//   GDumbLike:   fresh init, then train; the caller passes the buffer snapshot.
inline LearnerState strategy_step(Strategy strategy, const LearnerState* prev, std::size_t timestamp_index,
                                  std::span<const Sample> train_data, const Architecture& arch,
                                  const Hyperparams& hp) {
    switch (strategy) {
        case Strategy::Napping:
            if (timestamp_index == 0) return train(init_learner(arch, init_seed(hp.seed)), train_data, hp);
            if (!prev) throw std::invalid_argument("napping: previous learner required after the first index");
            return *prev;
        case Strategy::Finetuning:
            if (prev) return train(*prev, train_data, hp);
            if (timestamp_index > 0)
                throw std::invalid_argument("finetuning: previous learner required after the first index");
            return train(init_learner(arch, init_seed(hp.seed)), train_data, hp);
        case Strategy::FromScratch:
        case Strategy::GDumbLike:
            return train(init_learner(arch, init_seed(hp.seed)), train_data, hp);
    }
    throw std::invalid_argument("unknown strategy");
}

}  // namespace driftbench
