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

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "driftbench/config.hpp"
#include "driftbench/corpus.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/protocol.hpp"

namespace driftbench {

inline TemporalStream load_stream(const StreamSource& source) {
    if (source.kind == StreamSource::Kind::Synthetic) return generate_drift_stream(source.drift);
    auto set = load_feature_file(source.feature_file, source.normalize);
    return bucketize(std::move(set.samples), source.buckets, set.num_classes);
}

// Capacity of "one bucket of training data": the train split under iid, the
// whole bucket under streaming.
inline std::size_t one_bucket_capacity(const TemporalStream& stream, const RunConfig& run) {
    const std::size_t size = stream.buckets.front().size();
    if (run.protocol == ProtocolKind::Streaming) return size;
    const double raw = run.train_fraction * static_cast<double>(size);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw))));
}

struct CellOutcome {
    std::string name;
    bool ok = false;
    std::string error;
    std::optional<AggregateReport> report;
    std::vector<ProtocolRun> runs;
};

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << contents;
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Runs every seed of one cell sequentially and writes its artifacts into
// out_dir/<cell>/: seed_<r>.matrix, seed_<r>.events, report.txt. Errors stay
// inside the cell and are written to error.txt.
inline CellOutcome run_cell(const TemporalStream& stream, const GridCell& cell, const std::filesystem::path& out_dir) {
    CellOutcome outcome;
    outcome.name = cell.name;
    const auto dir = out_dir / cell.name;
    try {
        std::filesystem::create_directories(dir);
        RunConfig run = cell.run;
        if (cell.buffer_is_one_bucket) run.buffer_capacity = one_bucket_capacity(stream, run);

        std::vector<MetricReport> reports;
        for (std::size_t r = 0; r < run.n_seeds; ++r) {
            const std::uint64_t seed = run.base_seed + r;
            auto result = run_protocol(stream, run, seed);
            if (run.protocol == ProtocolKind::Streaming) {
                if (auto v = audit_future_testing(result.events))
                    throw std::logic_error("streaming ordering violated: " + *v);
            } else if (auto v = audit_disjoint_ids(result.events)) {
                throw std::logic_error("iid train/test overlap: " + *v);
            }
            std::ostringstream matrix, events;
            write_matrix(matrix, result.matrix);
            write_event_log(events, result.events);
            write_file(dir / ("seed_" + std::to_string(seed) + ".matrix"), matrix.str());
            write_file(dir / ("seed_" + std::to_string(seed) + ".events"), events.str());
            reports.push_back(compute_metrics(result.matrix));
            outcome.runs.push_back(std::move(result));
        }
        outcome.report = aggregate(reports);

        std::ostringstream report;
        report << "cell = " << cell.name << '\n'
               << "strategy = " << to_string(run.strategy) << '\n'
               << "architecture = " << to_string(run.architecture) << '\n'
               << "alpha = " << to_string(run.alpha) << '\n'
               << "buffer = " << run.buffer_capacity << '\n';
        write_report(report, *outcome.report);
        write_file(dir / "report.txt", report.str());
        outcome.ok = true;
    } catch (const std::exception& e) {
        outcome.error = e.what();
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        std::ofstream(dir / "error.txt") << e.what() << '\n';
    }
    return outcome;
}

struct ExperimentResult {
    std::vector<CellOutcome> cells;

    bool ok() const {
        return std::all_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.ok; });
    }
};

// Executes the grid. Cells are independent and may run on up to `jobs`
// threads; seeds within a cell run in order. Writes manifest.tsv and
// summary.csv (config,metric,mean,std for every successful cell) to out_dir.
inline ExperimentResult run_experiment(const ExperimentGrid& grid, const std::filesystem::path& out_dir,
                                       std::size_t jobs = 1) {
    std::filesystem::create_directories(out_dir);
    const TemporalStream stream = load_stream(grid.source);
    {
        std::ostringstream manifest;
        write_manifest(manifest, stream);
        write_file(out_dir / "manifest.tsv", manifest.str());
    }

    ExperimentResult result;
    result.cells.resize(grid.cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < grid.cells.size(); i = next++)
            result.cells[i] = run_cell(stream, grid.cells[i], out_dir);
    };
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, grid.cells.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    }

    std::ostringstream summary;
    summary << kSummaryCsvHeader << '\n';
    for (const auto& c : result.cells)
        if (c.ok) write_summary_rows(summary, c.name, *c.report);
    write_file(out_dir / "summary.csv", summary.str());
    return result;
}

}  // namespace driftbench
