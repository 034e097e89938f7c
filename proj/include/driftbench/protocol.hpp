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
#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "driftbench/corpus.hpp"
#include "driftbench/learner.hpp"
#include "driftbench/matrix.hpp"
#include "driftbench/rng.hpp"
#include "driftbench/sampler.hpp"

namespace driftbench {

struct RunConfig {
    ProtocolKind protocol = ProtocolKind::Streaming;
    Strategy strategy = Strategy::Finetuning;
    ArchitectureSpec architecture{};
    Hyperparams hyperparams{};
    AlphaPolicy alpha = AlphaPolicy::fixed(1.0);
    std::size_t buffer_capacity = 1;
    double train_fraction = 0.7;  // iid only
    std::size_t n_seeds = 5;
    std::uint64_t base_seed = 0;

    void validate() const {
        if (n_seeds < 1) throw std::invalid_argument("n_seeds must be >= 1");
        if (buffer_capacity < 1) throw std::invalid_argument("buffer_capacity must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction < 1.0))
            throw std::invalid_argument("train_fraction must lie in (0, 1)");
        hyperparams.validate();
    }
};

// Component seeds for one run. Each randomness source is offset from the run
// seed so that ablations can vary one source at a time.
struct RunSeeds {
    std::uint64_t split;
    std::uint64_t sampler;
    std::uint64_t learner;

    static RunSeeds from(std::uint64_t run_seed) { return {run_seed, run_seed + 1000, run_seed + 2000}; }
};

// splitmix64 finalizer applied to (seed, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct ProtocolEvent {
    enum class Kind { Ingest, Train, Evaluate };

    Kind kind = Kind::Train;
    std::size_t step = 0;                // learner index i
    std::vector<std::size_t> buckets;    // buckets touched, ascending
    std::vector<std::uint64_t> ids;      // sample ids touched, in data order
};

inline std::string_view to_string(ProtocolEvent::Kind k) {
    switch (k) {
        case ProtocolEvent::Kind::Ingest: return "ingest";
        case ProtocolEvent::Kind::Train: return "train";
        case ProtocolEvent::Kind::Evaluate: return "evaluate";
    }
    return "?";
}

using EventLog = std::vector<ProtocolEvent>;

// `seq<TAB>kind<TAB>step<TAB>b1,b2,...<TAB>sample_count`
inline void write_event_log(std::ostream& out, const EventLog& log) {
    for (std::size_t seq = 0; seq < log.size(); ++seq) {
        const auto& e = log[seq];
        out << seq << '\t' << to_string(e.kind) << '\t' << e.step << '\t';
        for (std::size_t b = 0; b < e.buckets.size(); ++b) out << (b ? "," : "") << e.buckets[b];
        out << '\t' << e.ids.size() << '\n';
    }
}

// Every evaluation on bucket j precedes every training event consuming bucket j.
// Returns a description of the first violation, or nullopt.
inline std::optional<std::string> audit_future_testing(const EventLog& log) {
    std::set<std::size_t> trained;
    for (std::size_t seq = 0; seq < log.size(); ++seq) {
        const auto& e = log[seq];
        if (e.kind == ProtocolEvent::Kind::Train) trained.insert(e.buckets.begin(), e.buckets.end());
        if (e.kind != ProtocolEvent::Kind::Evaluate) continue;
        for (auto b : e.buckets)
            if (trained.contains(b))
                return "event " + std::to_string(seq) + ": bucket " + std::to_string(b) +
                       " evaluated after it was trained on";
    }
    return std::nullopt;
}

// No evaluated sample id appears in any training event of the same run.
inline std::optional<std::string> audit_disjoint_ids(const EventLog& log) {
    std::unordered_set<std::uint64_t> trained;
    for (const auto& e : log)
        if (e.kind == ProtocolEvent::Kind::Train) trained.insert(e.ids.begin(), e.ids.end());
    for (std::size_t seq = 0; seq < log.size(); ++seq) {
        const auto& e = log[seq];
        if (e.kind != ProtocolEvent::Kind::Evaluate) continue;
        for (auto id : e.ids)
            if (trained.contains(id))
                return "event " + std::to_string(seq) + ": sample " + std::to_string(id) + " was also trained on";
    }
    return std::nullopt;
}

struct ProtocolRun {
    AccuracyMatrix matrix;
    EventLog events;
};

// Fraction of samples whose prediction matches the label.
inline double evaluate(const LearnerState& state, std::span<const Sample> test) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::size_t correct = 0;
    for (const auto& s : test)
        if (predict(state, s.features) == s.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace detail {

class ProtocolRecorder {
public:
    explicit ProtocolRecorder(const TemporalStream& stream) {
        for (const auto& b : stream.buckets)
            for (const auto& s : b.samples) bucket_of_[s.id] = b.index;
    }

    void record(ProtocolEvent::Kind kind, std::size_t step, std::span<const Sample> data) {
        ProtocolEvent e{kind, step, {}, {}};
        std::set<std::size_t> buckets;
        e.ids.reserve(data.size());
        for (const auto& s : data) {
            e.ids.push_back(s.id);
            buckets.insert(bucket_of_.at(s.id));
        }
        e.buckets.assign(buckets.begin(), buckets.end());
        log_.push_back(std::move(e));
    }

    EventLog take() { return std::move(log_); }

private:
    std::unordered_map<std::uint64_t, std::size_t> bucket_of_;
    EventLog log_;
};

inline void check_stream(const TemporalStream& stream) {
    if (stream.bucket_count() < 2) throw std::invalid_argument("protocol needs at least 2 buckets");
    for (const auto& b : stream.buckets)
        if (b.samples.empty()) throw std::invalid_argument("protocol: empty bucket");
}

// Runs one strategy step and records the training event if the learner changed.
inline LearnerState advance(const RunConfig& cfg, const Architecture& arch, std::uint64_t learner_seed,
                            const std::optional<LearnerState>& prev, std::size_t step,
                            std::span<const Sample> data, ProtocolRecorder& rec) {
    Hyperparams hp = cfg.hyperparams;
    hp.seed = derive_seed(learner_seed, step);
    const bool trains = !(cfg.strategy == Strategy::Napping && step > 0);
    if (trains) rec.record(ProtocolEvent::Kind::Train, step, data);
    return strategy_step(cfg.strategy, prev ? &*prev : nullptr, step, data, arch, hp);
}

}  // namespace detail

// Classic protocol: each bucket is split into train/test once per seed. Learner
// h_i is trained on the buffer after ingesting Tr_i (Napping: Tr_1 only) and
// evaluated on every Te_j.
inline ProtocolRun run_iid_protocol(const TemporalStream& stream, const RunConfig& cfg, std::uint64_t seed) {
    detail::check_stream(stream);
    cfg.validate();
    const auto seeds = RunSeeds::from(seed);
    const std::size_t n = stream.bucket_count();
    const Architecture arch = cfg.architecture.resolve(stream.dim, stream.num_classes);

    std::vector<IidSplit> splits;
    splits.reserve(n);
    for (std::size_t j = 0; j < n; ++j)
        splits.push_back(split_iid(stream.buckets[j], cfg.train_fraction, derive_seed(seeds.split, j)));

    detail::ProtocolRecorder rec(stream);
    ReplayBuffer buffer(cfg.buffer_capacity);
    Rng sampler_rng(seeds.sampler);
    AccuracyMatrix matrix(n, ProtocolKind::Iid);
    std::optional<LearnerState> learner;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& train_split = splits[i].train;
        rec.record(ProtocolEvent::Kind::Ingest, i, train_split);
        buffer.update(train_split, cfg.alpha, sampler_rng);
        if (cfg.strategy == Strategy::Napping && i == 0) {
            learner = detail::advance(cfg, arch, seeds.learner, learner, i, train_split, rec);
        } else {
            const auto data = buffer.snapshot();
            learner = detail::advance(cfg, arch, seeds.learner, learner, i, data, rec);
        }
        for (std::size_t j = 0; j < n; ++j) {
            rec.record(ProtocolEvent::Kind::Evaluate, i, splits[j].test);
            matrix.set(i, j, evaluate(*learner, splits[j].test));
        }
    }
    return {std::move(matrix), rec.take()};
}

// Streaming protocol: no held-out data. h_i is trained on the buffer after
// ingesting all of S_i (Napping: S_1 only) and evaluated on every later bucket.
// Bucket j is only ingested at step j, after all h_i (i < j) have been evaluated on it.
inline ProtocolRun run_streaming_protocol(const TemporalStream& stream, const RunConfig& cfg,
                                          std::uint64_t seed) {
    detail::check_stream(stream);
    cfg.validate();
    const auto seeds = RunSeeds::from(seed);
    const std::size_t n = stream.bucket_count();
    const Architecture arch = cfg.architecture.resolve(stream.dim, stream.num_classes);

    detail::ProtocolRecorder rec(stream);
    ReplayBuffer buffer(cfg.buffer_capacity);
    Rng sampler_rng(seeds.sampler);
    AccuracyMatrix matrix(n, ProtocolKind::Streaming);
    std::optional<LearnerState> learner;

    for (std::size_t i = 0; i < n; ++i) {
        const auto& bucket = stream.buckets[i].samples;
        rec.record(ProtocolEvent::Kind::Ingest, i, bucket);
        buffer.update(bucket, cfg.alpha, sampler_rng);
        if (cfg.strategy == Strategy::Napping && i == 0) {
            learner = detail::advance(cfg, arch, seeds.learner, learner, i, bucket, rec);
        } else {
            const auto data = buffer.snapshot();
            learner = detail::advance(cfg, arch, seeds.learner, learner, i, data, rec);
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            rec.record(ProtocolEvent::Kind::Evaluate, i, stream.buckets[j].samples);
            matrix.set(i, j, evaluate(*learner, stream.buckets[j].samples));
        }
    }
    return {std::move(matrix), rec.take()};
}

inline ProtocolRun run_protocol(const TemporalStream& stream, const RunConfig& cfg, std::uint64_t seed) {
    return cfg.protocol == ProtocolKind::Iid ? run_iid_protocol(stream, cfg, seed)
                                             : run_streaming_protocol(stream, cfg, seed);
}

}  // namespace driftbench
