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
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "driftbench/corpus.hpp"
#include "driftbench/detail/text.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/rng.hpp"

namespace driftbench::curate {

struct EmbeddingRecord {
    std::uint64_t id = 0;
    std::vector<double> vector;  // unit L2 norm after ingestion
};

struct Query {
    std::string name;
    std::vector<double> vector;
};

struct CurationSpec {
    std::vector<Query> queries;
    std::size_t per_class_top = 600;
    std::size_t background_low_per_class = 60;
    std::size_t final_per_class = 300;
    std::int64_t bucket_timestamp = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (queries.empty()) throw std::invalid_argument("curation spec: no queries");
        if (per_class_top < 1 || background_low_per_class < 1 || final_per_class < 1)
            throw std::invalid_argument("curation spec: counts must be >= 1");
        if (final_per_class > per_class_top)
            throw std::invalid_argument("curation spec: final_per_class must not exceed per_class_top");
    }
};

struct ScoredId {
    std::uint64_t id = 0;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

// Descending by score; ties by ascending id.
using Ranking = std::vector<ScoredId>;

inline void normalize_in_place(std::vector<double>& v) {
    const double norm = l2_norm(v);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw std::invalid_argument("cannot normalize zero or non-finite vector");
    for (double& x : v) x /= norm;
}

inline Ranking cosine_rank(std::span<const EmbeddingRecord> embeddings, std::span<const double> query) {
    Ranking out;
    out.reserve(embeddings.size());
    for (const auto& e : embeddings) {
        if (e.vector.size() != query.size())
            throw std::invalid_argument("cosine_rank: embedding " + std::to_string(e.id) + " has dimension " +
                                        std::to_string(e.vector.size()) + ", query has " +
                                        std::to_string(query.size()));
        double dot = 0.0;
        for (std::size_t k = 0; k < query.size(); ++k) dot += e.vector[k] * query[k];
        out.push_back({e.id, dot});
    }
    std::sort(out.begin(), out.end(), [](const ScoredId& a, const ScoredId& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

using ClassSelection = std::vector<std::vector<std::uint64_t>>;  // per class, in rank order

// Takes the per_class_top head of each ranking. Any id picked by two or more
// classes is discarded from all of them, and the affected classes refill from
// their next-ranked ids. Repeats until no id is shared. Classes refill in
// spec order. The loop is bounded by the universe size.
inline ClassSelection select_labeled(std::span<const Ranking> rankings, const CurationSpec& spec) {
    spec.validate();
    if (rankings.size() != spec.queries.size())
        throw std::invalid_argument("select_labeled: one ranking per query required");
    const std::size_t classes = rankings.size();
    std::size_t universe = 0;
    for (const auto& r : rankings) universe = std::max(universe, r.size());

    ClassSelection picked(classes);
    std::vector<std::size_t> cursor(classes, 0);
    std::unordered_set<std::uint64_t> discarded;

    for (std::size_t round = 0; round <= universe; ++round) {
        for (std::size_t c = 0; c < classes; ++c) {
            auto& sel = picked[c];
            while (sel.size() < spec.per_class_top && cursor[c] < rankings[c].size()) {
                const auto id = rankings[c][cursor[c]++].id;
                if (!discarded.contains(id)) sel.push_back(id);
            }
            if (sel.size() < spec.per_class_top)
                throw ShortageError(spec.queries[c].name,
                                    "only " + std::to_string(sel.size()) + " of " +
                                        std::to_string(spec.per_class_top) + " unique candidates available");
        }

        std::unordered_map<std::uint64_t, std::size_t> owners;
        for (const auto& sel : picked)
            for (auto id : sel) ++owners[id];
        bool conflict = false;
        for (const auto& [id, count] : owners) {
            if (count < 2) continue;
            discarded.insert(id);
            conflict = true;
        }
        if (!conflict) return picked;
        for (auto& sel : picked)
            std::erase_if(sel, [&](std::uint64_t id) { return discarded.contains(id); });
    }
    throw std::runtime_error("select_labeled: discard-and-replace did not reach a fixpoint");
}

// Union over classes of the background_low_per_class lowest-scoring ids that
// are not in any labeled class. Returned ascending.
inline std::vector<std::uint64_t> assemble_background(std::span<const Ranking> rankings, const ClassSelection& labeled,
                                                      const CurationSpec& spec) {
    spec.validate();
    if (rankings.size() != spec.queries.size())
        throw std::invalid_argument("assemble_background: one ranking per query required");
    std::unordered_set<std::uint64_t> taken;
    for (const auto& sel : labeled) taken.insert(sel.begin(), sel.end());

    std::unordered_set<std::uint64_t> background;
    for (std::size_t c = 0; c < rankings.size(); ++c) {
        std::size_t got = 0;
        for (auto it = rankings[c].rbegin(); it != rankings[c].rend() && got < spec.background_low_per_class; ++it) {
            if (taken.contains(it->id)) continue;
            background.insert(it->id);
            ++got;
        }
        if (got < spec.background_low_per_class)
            throw ShortageError(spec.queries[c].name, "not enough unlabeled low-scoring candidates for background");
    }
    std::vector<std::uint64_t> out(background.begin(), background.end());
    std::sort(out.begin(), out.end());
    return out;
}

struct CuratedBucket {
    std::vector<std::string> class_names;  // labels 0..C-1 are queries, C is background
    std::vector<Sample> samples;           // grouped by label, ascending id within a label
};

// Seeded uniform subsample of final_per_class ids per class, background
// included as the last class. Ids listed in `rejected` are dropped first.
inline CuratedBucket finalize_bucket(const ClassSelection& labeled, std::span<const std::uint64_t> background,
                                     std::span<const EmbeddingRecord> embeddings, const CurationSpec& spec,
                                     const std::unordered_set<std::uint64_t>& rejected = {}) {
    spec.validate();
    std::unordered_map<std::uint64_t, const EmbeddingRecord*> by_id;
    for (const auto& e : embeddings) by_id[e.id] = &e;

    CuratedBucket out;
    for (const auto& q : spec.queries) out.class_names.push_back(q.name);
    out.class_names.emplace_back("background");

    Rng rng(spec.seed);
    auto take = [&](std::span<const std::uint64_t> pool, std::size_t label) {
        std::vector<std::uint64_t> ids;
        for (auto id : pool)
            if (!rejected.contains(id)) ids.push_back(id);
        if (ids.size() < spec.final_per_class)
            throw ShortageError(out.class_names[label], "only " + std::to_string(ids.size()) + " of " +
                                                            std::to_string(spec.final_per_class) +
                                                            " ids left for the final subsample");
        std::sort(ids.begin(), ids.end());
        rng.shuffle(std::span(ids));
        ids.resize(spec.final_per_class);
        std::sort(ids.begin(), ids.end());
        for (auto id : ids) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) throw std::invalid_argument("finalize_bucket: unknown id " + std::to_string(id));
            out.samples.push_back(Sample{id, spec.bucket_timestamp, it->second->vector, label});
        }
    };
    for (std::size_t c = 0; c < labeled.size(); ++c) take(labeled[c], c);
    take(background, labeled.size());
    return out;
}

// Full model-free pipeline: rank, select, assemble background, finalize.
inline CuratedBucket run_curation(std::span<const EmbeddingRecord> embeddings, const CurationSpec& spec,
                                  const std::unordered_set<std::uint64_t>& rejected = {}) {
    spec.validate();
    std::vector<Ranking> rankings;
    for (const auto& q : spec.queries) rankings.push_back(cosine_rank(embeddings, q.vector));
    const auto labeled = select_labeled(rankings, spec);
    const auto background = assemble_background(rankings, labeled, spec);
    return finalize_bucket(labeled, background, embeddings, spec, rejected);
}

// `#m=<m>` header, then `id<TAB>v1,...,vm`. Vectors are L2-normalized.
inline std::vector<EmbeddingRecord> read_embeddings(std::istream& in, const std::string& source = "<embeddings>") {
    std::vector<EmbeddingRecord> out;
    std::optional<std::size_t> dim;
    std::unordered_set<std::uint64_t> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        if (!dim) {
            if (!text.starts_with("#m=")) throw ParseError(source, line_no, "missing '#m=<m>' header");
            dim = detail::parse_number<std::size_t>(text.substr(3));
            if (!dim || *dim == 0) throw ParseError(source, line_no, "bad dimension in header");
            continue;
        }
        const auto fields = detail::split(text, '\t');
        if (fields.size() != 2) throw ParseError(source, line_no, "expected 'id<TAB>vector'");
        const auto id = detail::parse_number<std::uint64_t>(fields[0]);
        auto vec = detail::parse_vector(fields[1]);
        if (!id) throw ParseError(source, line_no, "bad id");
        if (!vec) throw ParseError(source, line_no, "bad vector");
        if (vec->size() != *dim) throw ParseError(source, line_no, "dimension does not match header");
        if (!ids.insert(*id).second) throw ParseError(source, line_no, "duplicate id");
        try {
            normalize_in_place(*vec);
        } catch (const std::invalid_argument& e) {
            throw ParseError(source, line_no, e.what());
        }
        out.push_back({*id, std::move(*vec)});
    }
    if (!dim) throw ParseError(source, line_no, "empty embedding file");
    return out;
}

// `class_name<TAB>v1,...,vm` per line. Vectors are L2-normalized.
inline std::vector<Query> read_queries(std::istream& in, const std::string& source = "<queries>") {
    std::vector<Query> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto fields = detail::split(text, '\t');
        if (fields.size() != 2) throw ParseError(source, line_no, "expected 'class_name<TAB>vector'");
        auto vec = detail::parse_vector(fields[1]);
        if (!vec) throw ParseError(source, line_no, "bad vector");
        if (!out.empty() && vec->size() != out.front().vector.size())
            throw ParseError(source, line_no, "query dimension differs from earlier queries");
        try {
            normalize_in_place(*vec);
        } catch (const std::invalid_argument& e) {
            throw ParseError(source, line_no, e.what());
        }
        out.push_back({std::string(detail::trim(fields[0])), std::move(*vec)});
    }
    if (out.empty()) throw ParseError(source, line_no, "no queries");
    return out;
}

// One id per line; '#' lines are comments.
inline std::unordered_set<std::uint64_t> read_rejections(std::istream& in, const std::string& source = "<rejections>") {
    std::unordered_set<std::uint64_t> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto id = detail::parse_number<std::uint64_t>(text);
        if (!id) throw ParseError(source, line_no, "bad id");
        out.insert(*id);
    }
    return out;
}

inline void write_class_table(std::ostream& out, const CuratedBucket& bucket) {
    for (std::size_t c = 0; c < bucket.class_names.size(); ++c) out << c << '\t' << bucket.class_names[c] << '\n';
}

}  // namespace driftbench::curate
