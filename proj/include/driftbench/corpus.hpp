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
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "driftbench/detail/text.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/rng.hpp"

namespace driftbench {

struct Sample {
    std::uint64_t id = 0;
    std::int64_t timestamp = 0;
    std::vector<double> features;
    std::size_t label = 0;

    bool operator==(const Sample&) const = default;
};

struct Bucket {
    std::size_t index = 0;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
    bool operator==(const Bucket&) const = default;
};

struct TemporalStream {
    std::vector<Bucket> buckets;
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    // Trailing samples that did not fit into N equal buckets.
    std::size_t dropped = 0;

    std::size_t bucket_count() const { return buckets.size(); }
    bool operator==(const TemporalStream&) const = default;
};

// Rotating-means Gaussian stream. Class c in bucket t is centred at
// radius * (cos(2*pi*c/C + t*drift_rate), sin(...), 0, ..., 0).
struct DriftConfig {
    std::size_t num_classes = 4;
    std::size_t dim = 8;
    std::size_t num_buckets = 10;
    std::size_t n_per_class = 200;
    double radius = 1.0;
    double drift_rate = 0.0;
    double noise = 0.3;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 1 || num_buckets < 1 || n_per_class < 1)
            throw std::invalid_argument("drift config: counts must be >= 1");
        if (dim < 2) throw std::invalid_argument("drift config: dim must be >= 2");
        if (!std::isfinite(radius) || radius <= 0.0)
            throw std::invalid_argument("drift config: radius must be finite and > 0");
        if (!std::isfinite(drift_rate) || drift_rate < 0.0)
            throw std::invalid_argument("drift config: drift_rate must be finite and >= 0");
        if (!std::isfinite(noise) || noise <= 0.0)
            throw std::invalid_argument("drift config: noise must be finite and > 0");
    }
};

// Feature-file contents: samples plus the declared dimension and class count.
struct FeatureSet {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<Sample> samples;
};

inline void check_sample(const Sample& s, std::size_t dim, std::size_t num_classes) {
    if (s.features.size() != dim)
        throw std::invalid_argument("sample " + std::to_string(s.id) + ": dimension " +
                                    std::to_string(s.features.size()) + " != " + std::to_string(dim));
    if (s.label >= num_classes)
        throw std::invalid_argument("sample " + std::to_string(s.id) + ": label out of range");
    for (double f : s.features)
        if (!std::isfinite(f))
            throw std::invalid_argument("sample " + std::to_string(s.id) + ": non-finite feature");
}

// Sorts by (timestamp, id) and cuts the first floor(n/N)*N samples into N
// contiguous equal buckets. The remainder is dropped and counted.
inline TemporalStream bucketize(std::vector<Sample> samples, std::size_t num_buckets,
                                std::size_t num_classes) {
    if (num_buckets == 0) throw std::invalid_argument("bucketize: bucket count must be >= 1");
    if (samples.size() < num_buckets)
        throw std::invalid_argument("bucketize: fewer samples than buckets");

    const std::size_t dim = samples.front().features.size();
    std::unordered_set<std::uint64_t> ids;
    for (const auto& s : samples) {
        check_sample(s, dim, num_classes);
        if (!ids.insert(s.id).second)
            throw std::invalid_argument("bucketize: duplicate id " + std::to_string(s.id));
    }

    std::stable_sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) {
        return std::pair(a.timestamp, a.id) < std::pair(b.timestamp, b.id);
    });

    TemporalStream stream;
    stream.dim = dim;
    stream.num_classes = num_classes;
    const std::size_t per_bucket = samples.size() / num_buckets;
    stream.dropped = samples.size() - per_bucket * num_buckets;
    stream.buckets.reserve(num_buckets);
    for (std::size_t b = 0; b < num_buckets; ++b) {
        Bucket bucket;
        bucket.index = b;
        auto first = samples.begin() + static_cast<std::ptrdiff_t>(b * per_bucket);
        bucket.samples.assign(std::make_move_iterator(first),
                              std::make_move_iterator(first + static_cast<std::ptrdiff_t>(per_bucket)));
        stream.buckets.push_back(std::move(bucket));
    }
    return stream;
}

// Class count inferred as max label + 1.
inline TemporalStream bucketize(std::vector<Sample> samples, std::size_t num_buckets) {
    std::size_t num_classes = 0;
    for (const auto& s : samples) num_classes = std::max(num_classes, s.label + 1);
    return bucketize(std::move(samples), num_buckets, num_classes);
}

struct IidSplit {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// Seeded uniform permutation; the first ceil(fraction * n) samples train.
inline IidSplit split_iid(const Bucket& bucket, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split_iid: train_fraction must lie in (0, 1)");
    if (bucket.samples.empty()) throw std::invalid_argument("split_iid: empty bucket");

    std::vector<std::size_t> order(bucket.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span(order));

    // Guard the ceil against representation error, e.g. 0.7 * 3300 = 2310.0000000000005.
    const double raw = train_fraction * static_cast<double>(bucket.size());
    auto n_train = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    n_train = std::min(n_train, bucket.size());

    IidSplit split;
    split.train.reserve(n_train);
    split.test.reserve(bucket.size() - n_train);
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_train ? split.train : split.test).push_back(bucket.samples[order[i]]);
    return split;
}

inline TemporalStream generate_drift_stream(const DriftConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    TemporalStream stream;
    stream.dim = cfg.dim;
    stream.num_classes = cfg.num_classes;
    const std::size_t per_bucket = cfg.num_classes * cfg.n_per_class;

    std::uint64_t next_id = 0;
    for (std::size_t t = 0; t < cfg.num_buckets; ++t) {
        Bucket bucket;
        bucket.index = t;
        bucket.samples.reserve(per_bucket);
        for (std::size_t j = 0; j < cfg.n_per_class; ++j) {
            for (std::size_t c = 0; c < cfg.num_classes; ++c) {
                const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                                         static_cast<double>(cfg.num_classes) +
                                     static_cast<double>(t) * cfg.drift_rate;
                Sample s;
                s.id = next_id;
                s.timestamp = static_cast<std::int64_t>(next_id);
                ++next_id;
                s.label = c;
                s.features.resize(cfg.dim);
                for (std::size_t k = 0; k < cfg.dim; ++k) s.features[k] = cfg.noise * rng.normal();
                s.features[0] += cfg.radius * std::cos(angle);
                s.features[1] += cfg.radius * std::sin(angle);
                bucket.samples.push_back(std::move(s));
            }
        }
        stream.buckets.push_back(std::move(bucket));
    }
    return stream;
}

inline std::vector<Sample> flatten(const TemporalStream& stream) {
    std::vector<Sample> out;
    for (const auto& b : stream.buckets) out.insert(out.end(), b.samples.begin(), b.samples.end());
    return out;
}

inline double l2_norm(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

namespace detail {

// Parses "#key=value key=value" headers into (key, value) pairs.
inline std::vector<std::pair<std::string, std::string>> parse_header(std::string_view line) {
    std::vector<std::pair<std::string, std::string>> out;
    line.remove_prefix(1);
    std::istringstream in{std::string(line)};
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        out.emplace_back(token.substr(0, eq), token.substr(eq + 1));
    }
    return out;
}

}  // namespace detail

// Reads `#d=<d> C=<C>` then `id<TAB>timestamp<TAB>label<TAB>f1,...,fd` per line.
inline FeatureSet read_feature_file(std::istream& in, bool normalize,
                                    const std::string& source = "<stream>") {
    FeatureSet out;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::unordered_set<std::uint64_t> ids;

    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        if (!have_header) {
            if (text.front() != '#') throw ParseError(source, line_no, "missing '#d=<d> C=<C>' header");
            std::optional<std::size_t> d, c;
            for (const auto& [key, value] : detail::parse_header(text)) {
                if (key == "d") d = detail::parse_number<std::size_t>(value);
                if (key == "C") c = detail::parse_number<std::size_t>(value);
            }
            if (!d || !c || *d == 0 || *c == 0)
                throw ParseError(source, line_no, "header must declare d>=1 and C>=1");
            out.dim = *d;
            out.num_classes = *c;
            have_header = true;
            continue;
        }
        if (text.front() == '#') continue;

        const auto fields = detail::split(text, '\t');
        if (fields.size() != 4) throw ParseError(source, line_no, "expected 4 tab-separated fields");
        const auto id = detail::parse_number<std::uint64_t>(fields[0]);
        const auto ts = detail::parse_number<std::int64_t>(fields[1]);
        const auto label = detail::parse_number<std::size_t>(fields[2]);
        auto features = detail::parse_vector(fields[3]);
        if (!id) throw ParseError(source, line_no, "bad id");
        if (!ts) throw ParseError(source, line_no, "bad timestamp");
        if (!label || *label >= out.num_classes) throw ParseError(source, line_no, "bad label");
        if (!features) throw ParseError(source, line_no, "bad feature vector");
        if (features->size() != out.dim)
            throw ParseError(source, line_no, "dimension " + std::to_string(features->size()) +
                                                  " does not match header d=" + std::to_string(out.dim));
        for (double f : *features)
            if (!std::isfinite(f)) throw ParseError(source, line_no, "non-finite feature value");
        if (normalize) {
            const double norm = l2_norm(*features);
            if (norm == 0.0) throw ParseError(source, line_no, "zero vector cannot be normalized");
            for (double& f : *features) f /= norm;
        }
        if (!ids.insert(*id).second) throw ParseError(source, line_no, "duplicate id");
        out.samples.push_back(Sample{*id, *ts, std::move(*features), *label});
    }
    if (!have_header) throw ParseError(source, line_no, "empty file");
    return out;
}

inline FeatureSet load_feature_file(const std::string& path, bool normalize = false) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature file: " + path);
    return read_feature_file(in, normalize, path);
}

inline void write_feature_file(std::ostream& out, std::span<const Sample> samples, std::size_t dim,
                               std::size_t num_classes) {
    out << "#d=" << dim << " C=" << num_classes << '\n';
    for (const auto& s : samples) {
        out << s.id << '\t' << s.timestamp << '\t' << s.label << '\t';
        for (std::size_t k = 0; k < s.features.size(); ++k) {
            if (k) out << ',';
            out << detail::format_double(s.features[k]);
        }
        out << '\n';
    }
}

// One line per bucket: index, first timestamp, last timestamp, count.
inline void write_manifest(std::ostream& out, const TemporalStream& stream) {
    for (const auto& b : stream.buckets) {
        out << b.index << '\t';
        if (b.samples.empty()) {
            out << "NA\tNA\t0\n";
            continue;
        }
        out << b.samples.front().timestamp << '\t' << b.samples.back().timestamp << '\t'
            << b.size() << '\n';
    }
}

}  // namespace driftbench
