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
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "driftbench/corpus.hpp"
#include "driftbench/detail/text.hpp"
#include "driftbench/learner.hpp"
#include "driftbench/matrix.hpp"
#include "driftbench/protocol.hpp"
#include "driftbench/sampler.hpp"

namespace driftbench {

// All problems found in a config, one "line N: message" entry each.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> diagnostics)
        : std::runtime_error(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

    const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

private:
    static std::string join(const std::vector<std::string>& d) {
        std::string out;
        for (const auto& s : d) out += (out.empty() ? "" : "\n") + s;
        return out;
    }

    std::vector<std::string> diagnostics_;
};

struct StreamSource {
    enum class Kind { Synthetic, Features };

    Kind kind = Kind::Synthetic;
    DriftConfig drift{};
    std::string feature_file;
    bool normalize = false;
    std::size_t buckets = 10;  // feature source only
};

struct GridCell {
    std::string name;
    RunConfig run;
    // Buffer sized to one bucket of training data, resolved once the stream is known.
    bool buffer_is_one_bucket = false;
};

struct ExperimentGrid {
    StreamSource source;
    std::vector<GridCell> cells;
};

namespace detail {

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

struct KeyDoc {
    std::string_view key;
    std::string_view scope;  // "stream" or "cell"
    std::string_view default_value;
    std::string_view help;
};

inline constexpr KeyDoc kConfigKeys[] = {
    {"source", "stream", "synthetic", "synthetic | features"},
    {"feature_file", "stream", "", "path of the feature file (source = features)"},
    {"normalize", "stream", "false", "L2-normalize feature vectors on load"},
    {"buckets", "stream", "10", "number of equal time buckets N"},
    {"classes", "stream", "4", "synthetic: class count C"},
    {"dim", "stream", "8", "synthetic: feature dimension d (>= 2)"},
    {"n_per_class", "stream", "200", "synthetic: samples per class per bucket"},
    {"radius", "stream", "1.0", "synthetic: radius of the class-mean circle"},
    {"drift_rate", "stream", "0.0", "synthetic: mean rotation per bucket, radians"},
    {"noise", "stream", "0.3", "synthetic: isotropic noise standard deviation"},
    {"stream_seed", "stream", "0", "synthetic: generator seed"},
    {"protocol", "cell", "streaming", "iid | streaming"},
    {"strategy", "cell", "finetuning", "napping | from_scratch | finetuning | gdumb"},
    {"architecture", "cell", "linear", "linear | mlp:<hidden>"},
    {"alpha", "cell", "fixed:1.0", "fixed:<alpha> | dynamic:<coefficient>"},
    {"buffer", "cell", "bucket", "replay capacity k, or 'bucket' for one bucket of training data"},
    {"train_fraction", "cell", "0.7", "iid: train share of each bucket"},
    {"n_seeds", "cell", "5", "runs per cell"},
    {"base_seed", "cell", "0", "run r uses seed base_seed + r (env DRIFTBENCH_SEED overrides)"},
    {"lr", "cell", "1.0 linear / 0.1 mlp", "initial learning rate"},
    {"momentum", "cell", "0.9", "SGD momentum"},
    {"weight_decay", "cell", "0.0", "L2 penalty"},
    {"batch", "cell", "256", "minibatch size"},
    {"epochs", "cell", "100", "epochs per training call"},
    {"decay_epoch", "cell", "60", "epoch at which lr is multiplied by decay_factor"},
    {"decay_factor", "cell", "0.1", "learning-rate decay factor"},
};

inline const KeyDoc* find_key(std::string_view key) {
    for (const auto& k : kConfigKeys)
        if (k.key == key) return &k;
    return nullptr;
}

inline std::string closest_key(std::string_view key) {
    std::string best;
    std::size_t best_d = SIZE_MAX;
    for (const auto& k : kConfigKeys) {
        const auto d = edit_distance(key, k.key);
        if (d < best_d) {
            best_d = d;
            best = std::string(k.key);
        }
    }
    return best_d <= std::max<std::size_t>(2, key.size() / 3) ? best : std::string();
}

struct Entry {
    std::string value;
    std::size_t line = 0;
};

using Section = std::map<std::string, Entry>;

inline std::string unquote(std::string_view v) {
    v = trim(v);
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
        v = v.substr(1, v.size() - 2);
    return std::string(v);
}

class CellBuilder {
public:
    CellBuilder(std::vector<std::string>& diags) : diags_(diags) {}

    template <typename T>
    std::optional<T> number(const Section& s, std::string_view key) {
        const auto it = s.find(std::string(key));
        if (it == s.end()) return std::nullopt;
        auto v = parse_number<T>(it->second.value);
        if (!v) error(it->second.line, key, "expected a number, got '" + it->second.value + "'");
        return v;
    }

    std::optional<bool> boolean(const Section& s, std::string_view key) {
        const auto it = s.find(std::string(key));
        if (it == s.end()) return std::nullopt;
        if (it->second.value == "true") return true;
        if (it->second.value == "false") return false;
        error(it->second.line, key, "expected true or false");
        return std::nullopt;
    }

    std::optional<std::string> text(const Section& s, std::string_view key) {
        const auto it = s.find(std::string(key));
        if (it == s.end()) return std::nullopt;
        return it->second.value;
    }

    template <typename F>
    auto parsed(const Section& s, std::string_view key, F parse) -> std::optional<decltype(parse(""))> {
        const auto it = s.find(std::string(key));
        if (it == s.end()) return std::nullopt;
        try {
            return parse(it->second.value);
        } catch (const std::invalid_argument& e) {
            error(it->second.line, key, e.what());
            return std::nullopt;
        }
    }

    void range(const Section& s, std::string_view key, bool ok, const std::string& what) {
        if (ok) return;
        const auto it = s.find(std::string(key));
        error(it == s.end() ? 0 : it->second.line, key, what);
    }

    void error(std::size_t line, std::string_view key, const std::string& what) {
        diags_.push_back("line " + std::to_string(line) + ": " + std::string(key) + ": " + what);
    }

private:
    std::vector<std::string>& diags_;
};

}  // namespace detail

// `--help` text: every key with scope and default.
inline std::string config_key_help() {
    std::ostringstream out;
    out << "Config keys (key = value; '[cell <name>]' starts a cell section;\n"
           "cell keys outside any section are defaults for every cell):\n";
    for (const auto& k : detail::kConfigKeys)
        out << "  " << k.key << " [" << k.scope << ", default " << (k.default_value.empty() ? "none" : k.default_value)
            << "]  " << k.help << '\n';
    return out.str();
}

// Parses the flat key-value grid format. Unknown keys, malformed values and
// out-of-range values are all reported together in a ConfigError.
inline ExperimentGrid validate_config(std::string_view text, std::optional<std::uint64_t> seed_override = std::nullopt) {
    std::vector<std::string> diags;
    detail::Section global;
    std::vector<std::pair<std::string, detail::Section>> sections;
    std::vector<std::size_t> section_lines;

    std::size_t line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
        ++line_no;
        auto line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                diags.push_back("line " + std::to_string(line_no) + ": unterminated section header");
                continue;
            }
            auto inner = detail::trim(line.substr(1, line.size() - 2));
            if (!inner.starts_with("cell")) {
                diags.push_back("line " + std::to_string(line_no) + ": sections must be '[cell <name>]'");
                continue;
            }
            auto name = std::string(detail::trim(inner.substr(4)));
            if (name.empty()) name = "cell" + std::to_string(sections.size());
            for (const auto& [existing, _] : sections)
                if (existing == name) diags.push_back("line " + std::to_string(line_no) + ": duplicate cell '" + name + "'");
            if (name.find_first_of("/\\, \t") != std::string::npos)
                diags.push_back("line " + std::to_string(line_no) + ": cell name '" + name +
                                "' may not contain '/', '\\', ',' or whitespace");
            sections.emplace_back(name, detail::Section{});
            section_lines.push_back(line_no);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            diags.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
            continue;
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const auto* doc = detail::find_key(key);
        if (!doc) {
            const auto hint = detail::closest_key(key);
            diags.push_back("line " + std::to_string(line_no) + ": unknown key '" + key + "'" +
                            (hint.empty() ? "" : " (did you mean '" + hint + "'?)"));
            continue;
        }
        const bool in_cell = !sections.empty();
        if (in_cell && doc->scope == "stream") {
            diags.push_back("line " + std::to_string(line_no) + ": stream key '" + key +
                            "' must appear before the first [cell] section");
            continue;
        }
        auto& target = in_cell ? sections.back().second : global;
        if (target.contains(key)) diags.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        target[key] = detail::Entry{detail::unquote(line.substr(eq + 1)), line_no};
    }

    detail::CellBuilder b(diags);
    ExperimentGrid grid;

    // Stream source.
    auto& src = grid.source;
    if (auto s = b.text(global, "source")) {
        if (*s == "synthetic") src.kind = StreamSource::Kind::Synthetic;
        else if (*s == "features") src.kind = StreamSource::Kind::Features;
        else b.error(global.at("source").line, "source", "must be synthetic or features");
    }
    if (auto v = b.text(global, "feature_file")) src.feature_file = *v;
    if (auto v = b.boolean(global, "normalize")) src.normalize = *v;
    if (auto v = b.number<std::size_t>(global, "buckets")) src.buckets = *v;
    b.range(global, "buckets", src.buckets >= 2, "must be >= 2");
    src.drift.num_buckets = src.buckets;
    if (auto v = b.number<std::size_t>(global, "classes")) src.drift.num_classes = *v;
    if (auto v = b.number<std::size_t>(global, "dim")) src.drift.dim = *v;
    if (auto v = b.number<std::size_t>(global, "n_per_class")) src.drift.n_per_class = *v;
    if (auto v = b.number<double>(global, "radius")) src.drift.radius = *v;
    if (auto v = b.number<double>(global, "drift_rate")) src.drift.drift_rate = *v;
    if (auto v = b.number<double>(global, "noise")) src.drift.noise = *v;
    if (auto v = b.number<std::uint64_t>(global, "stream_seed")) src.drift.seed = *v;
    b.range(global, "classes", src.drift.num_classes >= 1, "must be >= 1");
    b.range(global, "dim", src.drift.dim >= 2, "must be >= 2");
    b.range(global, "n_per_class", src.drift.n_per_class >= 1, "must be >= 1");
    b.range(global, "radius", std::isfinite(src.drift.radius) && src.drift.radius > 0, "must be finite and > 0");
    b.range(global, "drift_rate", std::isfinite(src.drift.drift_rate) && src.drift.drift_rate >= 0,
            "must be finite and >= 0");
    b.range(global, "noise", std::isfinite(src.drift.noise) && src.drift.noise > 0, "must be finite and > 0");
    if (src.kind == StreamSource::Kind::Features && src.feature_file.empty())
        b.error(0, "feature_file", "required when source = features");

    if (sections.empty()) sections.emplace_back("default", detail::Section{});

    for (auto& [name, own] : sections) {
        detail::Section s = global;
        for (auto& [k, v] : own) s[k] = v;

        GridCell cell;
        cell.name = name;
        auto& run = cell.run;
        if (auto v = b.parsed(s, "protocol", parse_protocol)) run.protocol = *v;
        if (auto v = b.parsed(s, "strategy", parse_strategy)) run.strategy = *v;
        if (auto v = b.parsed(s, "architecture", parse_architecture)) run.architecture = *v;
        if (auto v = b.parsed(s, "alpha", parse_policy)) run.alpha = *v;

        run.hyperparams = Hyperparams::defaults_for(run.architecture.kind);
        auto& hp = run.hyperparams;
        if (auto v = b.number<double>(s, "lr")) hp.learning_rate = *v;
        if (auto v = b.number<double>(s, "momentum")) hp.momentum = *v;
        if (auto v = b.number<double>(s, "weight_decay")) hp.weight_decay = *v;
        if (auto v = b.number<std::size_t>(s, "batch")) hp.batch_size = *v;
        if (auto v = b.number<std::size_t>(s, "epochs")) hp.epochs = *v;
        if (auto v = b.number<std::size_t>(s, "decay_epoch")) hp.decay_epoch = *v;
        else hp.decay_epoch = std::min(hp.decay_epoch, hp.epochs);
        if (auto v = b.number<double>(s, "decay_factor")) hp.decay_factor = *v;
        b.range(s, "lr", std::isfinite(hp.learning_rate) && hp.learning_rate >= 0, "must be finite and >= 0");
        b.range(s, "momentum", hp.momentum >= 0 && hp.momentum < 1, "must lie in [0, 1)");
        b.range(s, "weight_decay", std::isfinite(hp.weight_decay) && hp.weight_decay >= 0, "must be >= 0");
        b.range(s, "batch", hp.batch_size >= 1, "must be >= 1");
        b.range(s, "epochs", hp.epochs >= 1, "must be >= 1");
        b.range(s, "decay_epoch", hp.decay_epoch >= 1 && hp.decay_epoch <= hp.epochs, "must lie in [1, epochs]");
        b.range(s, "decay_factor", hp.decay_factor > 0 && hp.decay_factor <= 1, "must lie in (0, 1]");

        if (auto v = b.text(s, "buffer"); v && *v != "bucket") {
            if (auto k = b.number<std::size_t>(s, "buffer")) run.buffer_capacity = *k;
            b.range(s, "buffer", run.buffer_capacity >= 1, "must be >= 1 or 'bucket'");
        } else {
            cell.buffer_is_one_bucket = true;
        }
        if (auto v = b.number<double>(s, "train_fraction")) run.train_fraction = *v;
        b.range(s, "train_fraction", run.train_fraction > 0 && run.train_fraction < 1, "must lie in (0, 1)");
        if (auto v = b.number<std::size_t>(s, "n_seeds")) run.n_seeds = *v;
        b.range(s, "n_seeds", run.n_seeds >= 1, "must be >= 1");
        if (auto v = b.number<std::uint64_t>(s, "base_seed")) run.base_seed = *v;
        if (seed_override) run.base_seed = *seed_override;
        grid.cells.push_back(std::move(cell));
    }

    if (!diags.empty()) throw ConfigError(std::move(diags));
    return grid;
}

}  // namespace driftbench
