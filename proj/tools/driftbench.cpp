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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "driftbench/driftbench.hpp"

namespace fs = std::filesystem;
using namespace driftbench;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("DRIFTBENCH_SEED");
    if (!v || !*v) return std::nullopt;
    auto parsed = detail::parse_number<std::uint64_t>(v);
    if (!parsed) throw std::invalid_argument(std::string("DRIFTBENCH_SEED is not an integer: ") + v);
    return parsed;
}

// Curation spec: key = value lines for the counts, seed, bucket timestamp
// and an optional rejection list path.
curate::CurationSpec read_curation_spec(const std::string& path, std::vector<curate::Query> queries,
                                        std::string& rejections_path) {
    curate::CurationSpec spec;
    spec.queries = std::move(queries);
    std::istringstream in(slurp(path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto text = detail::trim(line);
        if (text.empty() || text.front() == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string_view::npos) throw ParseError(path, line_no, "expected 'key = value'");
        const auto key = detail::trim(text.substr(0, eq));
        const auto value = detail::trim(text.substr(eq + 1));
        auto count = [&]() {
            auto v = detail::parse_number<std::size_t>(value);
            if (!v) throw ParseError(path, line_no, "expected an integer for " + std::string(key));
            return *v;
        };
        if (key == "per_class_top") spec.per_class_top = count();
        else if (key == "background_low_per_class") spec.background_low_per_class = count();
        else if (key == "final_per_class") spec.final_per_class = count();
        else if (key == "seed") spec.seed = count();
        else if (key == "bucket_timestamp") {
            auto v = detail::parse_number<std::int64_t>(value);
            if (!v) throw ParseError(path, line_no, "expected an integer for bucket_timestamp");
            spec.bucket_timestamp = *v;
        } else if (key == "rejections") rejections_path = std::string(value);
        else throw ParseError(path, line_no, "unknown key '" + std::string(key) + "'");
    }
    spec.validate();
    return spec;
}

int cmd_run(const std::string& config_path, const std::string& out, std::size_t jobs) {
    const auto grid = validate_config(slurp(config_path), env_seed());
    const auto result = run_experiment(grid, out, jobs);
    for (const auto& c : result.cells) {
        if (c.ok) std::cout << c.name << ": ok\n";
        else std::cerr << c.name << ": error: " << c.error << '\n';
    }
    std::cout << "summary written to " << (fs::path(out) / "summary.csv").string() << '\n';
    return result.ok() ? 0 : 1;
}

int cmd_curate(const std::string& emb_path, const std::string& query_path, const std::string& spec_path,
               const std::string& out) {
    std::ifstream emb_in(emb_path), query_in(query_path);
    if (!emb_in) throw std::runtime_error("cannot open " + emb_path);
    if (!query_in) throw std::runtime_error("cannot open " + query_path);
    const auto embeddings = curate::read_embeddings(emb_in, emb_path);
    std::string rejections_path;
    const auto spec = read_curation_spec(spec_path, curate::read_queries(query_in, query_path), rejections_path);
    std::unordered_set<std::uint64_t> rejected;
    if (!rejections_path.empty()) {
        std::ifstream rej_in(rejections_path);
        if (!rej_in) throw std::runtime_error("cannot open " + rejections_path);
        rejected = curate::read_rejections(rej_in, rejections_path);
    }
    const auto bucket = curate::run_curation(embeddings, spec, rejected);

    fs::create_directories(out);
    std::ofstream features(fs::path(out) / "curated.features");
    write_feature_file(features, bucket.samples, embeddings.front().vector.size(), bucket.class_names.size());
    std::ofstream classes(fs::path(out) / "classes.tsv");
    curate::write_class_table(classes, bucket);
    std::cout << bucket.samples.size() << " samples in " << bucket.class_names.size() << " classes written to "
              << out << '\n';
    return 0;
}

int cmd_metrics(const std::string& matrix_path) {
    std::istringstream in(slurp(matrix_path));
    write_report(std::cout, compute_metrics(read_matrix(in, matrix_path)));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftbench: continual-learning evaluation on temporally drifting streams"};
    app.require_subcommand(1);

    std::string config, out;
    std::size_t jobs = 1;
    auto* run = app.add_subcommand("run", "run an experiment grid");
    run->add_option("--config", config, "grid config file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "output directory")->required();
    run->add_option("--jobs", jobs, "cells to run concurrently")->check(CLI::PositiveNumber);
    run->footer(config_key_help() + "\nEnvironment: DRIFTBENCH_SEED overrides base_seed for every cell.");

    std::string embeddings, queries, spec, curate_out;
    auto* cur = app.add_subcommand("curate", "curate one labeled bucket from precomputed embeddings");
    cur->add_option("--embeddings", embeddings, "embedding file (#m=<m> header)")->required()->check(CLI::ExistingFile);
    cur->add_option("--queries", queries, "query file (class_name<TAB>vector)")->required()->check(CLI::ExistingFile);
    cur->add_option("--spec", spec, "curation spec (per_class_top, background_low_per_class, final_per_class, seed, "
                                    "bucket_timestamp, rejections)")
        ->required()
        ->check(CLI::ExistingFile);
    cur->add_option("--out", curate_out, "output directory")->required();

    std::string matrix;
    auto* met = app.add_subcommand("metrics", "summarize an accuracy matrix file");
    met->add_option("--matrix", matrix, "matrix file")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config, out, jobs);
        if (*cur) return cmd_curate(embeddings, queries, spec, curate_out);
        if (*met) return cmd_metrics(matrix);
    } catch (const ConfigError& e) {
        for (const auto& d : e.diagnostics()) std::cerr << config << ":" << d << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
