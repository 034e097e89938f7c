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
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "driftbench/corpus.hpp"
#include "driftbench/detail/text.hpp"
#include "driftbench/rng.hpp"

namespace driftbench {

// Bias applied to the reservoir acceptance probability k/i.
// Fixed: alpha = value. Dynamic: alpha = value * i / k.
struct AlphaPolicy {
    enum class Kind { Fixed, Dynamic };

    Kind kind = Kind::Fixed;
    double value = 1.0;

    static AlphaPolicy fixed(double alpha) { return make(Kind::Fixed, alpha); }
    static AlphaPolicy dynamic(double coefficient) { return make(Kind::Dynamic, coefficient); }

    bool operator==(const AlphaPolicy&) const = default;

private:
    static AlphaPolicy make(Kind kind, double value) {
        if (!std::isfinite(value) || value <= 0.0)
            throw std::invalid_argument("alpha policy value must be finite and > 0");
        return AlphaPolicy{kind, value};
    }
};

// `fixed:<value>` or `dynamic:<coefficient>`.
inline AlphaPolicy parse_policy(std::string_view text) {
    text = detail::trim(text);
    const auto colon = text.find(':');
    if (colon == std::string_view::npos)
        throw std::invalid_argument("alpha policy '" + std::string(text) +
                                    "' must be fixed:<value> or dynamic:<coefficient>");
    const auto kind = text.substr(0, colon);
    const auto value = detail::parse_number<double>(text.substr(colon + 1));
    if (!value) throw std::invalid_argument("alpha policy '" + std::string(text) + "': bad number");
    if (kind == "fixed") return AlphaPolicy::fixed(*value);
    if (kind == "dynamic") return AlphaPolicy::dynamic(*value);
    throw std::invalid_argument("alpha policy kind '" + std::string(kind) + "' is not fixed or dynamic");
}

inline std::string to_string(const AlphaPolicy& p) {
    return std::string(p.kind == AlphaPolicy::Kind::Fixed ? "fixed:" : "dynamic:") +
           detail::format_double(p.value);
}

// min(1, alpha * k / i), with alpha resolved against the current i and k.
inline double acceptance_probability(const AlphaPolicy& policy, std::uint64_t seen,
                                     std::uint64_t capacity) {
    if (seen == 0 || capacity == 0)
        throw std::invalid_argument("acceptance_probability: i and k must be >= 1");
    // Dynamic alpha = c * i / k cancels to c; computing it directly keeps c = 1
    // exactly saturated instead of rounding to just below 1.
    if (policy.kind == AlphaPolicy::Kind::Dynamic) return std::min(1.0, policy.value);
    const double i = static_cast<double>(seen);
    const double k = static_cast<double>(capacity);
    return std::min(1.0, policy.value * k / i);
}

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be >= 1");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::uint64_t seen_count() const { return seen_; }
    std::span<const Sample> entries() const { return entries_; }

    // Copy of the current contents, in internal order.
    std::vector<Sample> snapshot() const { return entries_; }

    // One bucket step of biased reservoir sampling. All samples of the bucket
    // share one i = seen + |bucket|. Arrivals fill free slots directly; once
    // full, each arrival joins a pending set T with the acceptance
    // probability. Then |T| entries are evicted and T is appended.
    //
    // Eviction is uniformly random (shuffle, drop the first |T|) unless the
    // acceptance probability is saturated at 1, in which case entries are
    // evicted from the front. Saturated steps never reorder the buffer, so a
    // policy that is always saturated behaves as a FIFO of the last k.
    // If the result would exceed k, only the final k entries are kept.
    void update(const Bucket& bucket, const AlphaPolicy& policy, Rng& rng) {
        update(std::span<const Sample>(bucket.samples), policy, rng);
    }

    void update(std::span<const Sample> arrivals, const AlphaPolicy& policy, Rng& rng) {
        if (arrivals.empty()) throw std::invalid_argument("update_buffer: empty bucket");
        const std::size_t dim =
            entries_.empty() ? arrivals.front().features.size() : entries_.front().features.size();
        for (const auto& s : arrivals)
            if (s.features.size() != dim)
                throw std::invalid_argument("update_buffer: sample " + std::to_string(s.id) +
                                            " has dimension " + std::to_string(s.features.size()) +
                                            ", buffer holds " + std::to_string(dim));

        const std::uint64_t seen = seen_ + arrivals.size();
        const double p_accept = acceptance_probability(policy, seen, capacity_);
        const bool saturated = p_accept >= 1.0;

        std::vector<Sample> pending;
        for (const auto& s : arrivals) {
            if (entries_.size() < capacity_) {
                entries_.push_back(s);
                continue;
            }
            const double p = rng.uniform();
            if (p <= p_accept) pending.push_back(s);
        }

        const std::size_t evict = std::min(pending.size(), entries_.size());
        if (!saturated) rng.shuffle(std::span(entries_));
        entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(evict));
        entries_.insert(entries_.end(), std::make_move_iterator(pending.begin()),
                        std::make_move_iterator(pending.end()));
        if (entries_.size() > capacity_)
            entries_.erase(entries_.begin(),
                           entries_.end() - static_cast<std::ptrdiff_t>(capacity_));
        seen_ = seen;
    }

private:
    std::size_t capacity_;
    std::vector<Sample> entries_;
    std::uint64_t seen_ = 0;
};

// Value-semantics form of ReplayBuffer::update.
inline ReplayBuffer update_buffer(ReplayBuffer buffer, const Bucket& bucket, const AlphaPolicy& policy,
                                  Rng& rng) {
    buffer.update(bucket, policy, rng);
    return buffer;
}

inline std::vector<Sample> buffer_snapshot(const ReplayBuffer& buffer) { return buffer.snapshot(); }

}  // namespace driftbench
