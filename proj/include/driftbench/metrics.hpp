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

#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "driftbench/detail/text.hpp"
#include "driftbench/matrix.hpp"

namespace driftbench {

enum class Metric { Accuracy, BackwardTransfer, ForwardTransfer, InDomain, NextDomain };

inline constexpr std::array<Metric, 5> kAllMetrics = {Metric::Accuracy, Metric::BackwardTransfer,
                                                      Metric::ForwardTransfer, Metric::InDomain,
                                                      Metric::NextDomain};

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::Accuracy: return "accuracy";
        case Metric::BackwardTransfer: return "backward_transfer";
        case Metric::ForwardTransfer: return "forward_transfer";
        case Metric::InDomain: return "in_domain";
        case Metric::NextDomain: return "next_domain";
    }
    return "?";
}

// Streaming reports only carry next-domain accuracy and forward transfer.
inline bool reported_under(Metric m, ProtocolKind kind) {
    return kind == ProtocolKind::Iid || m == Metric::NextDomain || m == Metric::ForwardTransfer;
}

struct MetricReport {
    ProtocolKind protocol = ProtocolKind::Iid;
    std::optional<double> accuracy;
    std::optional<double> backward_transfer;
    std::optional<double> forward_transfer;
    std::optional<double> in_domain;
    std::optional<double> next_domain;

    std::optional<double> get(Metric m) const {
        switch (m) {
            case Metric::Accuracy: return accuracy;
            case Metric::BackwardTransfer: return backward_transfer;
            case Metric::ForwardTransfer: return forward_transfer;
            case Metric::InDomain: return in_domain;
            case Metric::NextDomain: return next_domain;
        }
        return std::nullopt;
    }

    bool operator==(const MetricReport&) const = default;
};

namespace detail {

// Mean of R(i, j) over cells selected by keep(i, j); absent if any selected cell is absent.
template <typename Pred>
std::optional<double> cell_mean(const AccuracyMatrix& r, Pred keep) {
    long double sum = 0.0L;
    std::size_t count = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (!keep(i, j)) continue;
            const auto& cell = r.at(i, j);
            if (!cell) return std::nullopt;
            sum += *cell;
            ++count;
        }
    }
    return static_cast<double>(sum / static_cast<long double>(count));
}

}  // namespace detail

// Accuracy: diagonal and below. BwT: strictly below. FwT: strictly above.
// In-domain: diagonal. Next-domain: superdiagonal. Row-major summation.
inline MetricReport compute_metrics(const AccuracyMatrix& r) {
    if (r.size() < 2) throw std::invalid_argument("compute_metrics: N must be >= 2");
    MetricReport out;
    out.protocol = r.kind();
    out.accuracy = detail::cell_mean(r, [](auto i, auto j) { return i >= j; });
    out.backward_transfer = detail::cell_mean(r, [](auto i, auto j) { return i > j; });
    out.forward_transfer = detail::cell_mean(r, [](auto i, auto j) { return i < j; });
    out.in_domain = detail::cell_mean(r, [](auto i, auto j) { return i == j; });
    out.next_domain = detail::cell_mean(r, [](auto i, auto j) { return j == i + 1; });
    if (r.kind() == ProtocolKind::Streaming) {
        out.accuracy.reset();
        out.backward_transfer.reset();
        out.in_domain.reset();
    }
    return out;
}

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation

    bool operator==(const MetricSummary&) const = default;
};

struct AggregateReport {
    ProtocolKind protocol = ProtocolKind::Iid;
    std::size_t n_seeds = 0;
    std::array<std::optional<MetricSummary>, kAllMetrics.size()> metrics{};

    const std::optional<MetricSummary>& get(Metric m) const { return metrics[static_cast<std::size_t>(m)]; }

    bool operator==(const AggregateReport&) const = default;
};

// Per-metric mean and population std over seeds. A metric absent from any
// report is absent from the aggregate.
inline AggregateReport aggregate(std::span<const MetricReport> reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
    AggregateReport out;
    out.protocol = reports.front().protocol;
    out.n_seeds = reports.size();
    for (const auto& r : reports)
        if (r.protocol != out.protocol) throw std::invalid_argument("aggregate: mixed protocols");

    for (Metric m : kAllMetrics) {
        long double sum = 0.0L;
        bool present = true;
        for (const auto& r : reports) {
            const auto v = r.get(m);
            if (!v) {
                present = false;
                break;
            }
            sum += *v;
        }
        if (!present) continue;
        const long double n = static_cast<long double>(reports.size());
        const long double mean = sum / n;
        long double sq = 0.0L;
        for (const auto& r : reports) {
            const long double dev = static_cast<long double>(*r.get(m)) - mean;
            sq += dev * dev;
        }
        out.metrics[static_cast<std::size_t>(m)] =
            MetricSummary{static_cast<double>(mean), static_cast<double>(std::sqrt(sq / n))};
    }
    return out;
}

// Key-value text: one `metric = value` line per reported metric.
inline void write_report(std::ostream& out, const MetricReport& r) {
    out << "protocol = " << to_string(r.protocol) << '\n';
    for (Metric m : kAllMetrics) {
        if (!reported_under(m, r.protocol)) continue;
        const auto v = r.get(m);
        out << to_string(m) << " = " << (v ? detail::format_fixed(*v, 6) : std::string("NA")) << '\n';
    }
}

inline void write_report(std::ostream& out, const AggregateReport& r) {
    out << "protocol = " << to_string(r.protocol) << '\n' << "n_seeds = " << r.n_seeds << '\n';
    for (Metric m : kAllMetrics) {
        if (!reported_under(m, r.protocol)) continue;
        const auto& v = r.get(m);
        if (!v) {
            out << to_string(m) << " = NA\n";
            continue;
        }
        out << to_string(m) << " = " << detail::format_fixed(v->mean, 6) << " +- "
            << detail::format_fixed(v->std, 6) << '\n';
    }
}

inline constexpr std::string_view kSummaryCsvHeader = "config,metric,mean,std";

// One row per reported metric: config,metric,mean,std.
inline void write_summary_rows(std::ostream& out, std::string_view config, const AggregateReport& r) {
    for (Metric m : kAllMetrics) {
        if (!reported_under(m, r.protocol)) continue;
        const auto& v = r.get(m);
        out << config << ',' << to_string(m) << ','
            << (v ? detail::format_fixed(v->mean, 6) : std::string("NA")) << ','
            << (v ? detail::format_fixed(v->std, 6) : std::string("NA")) << '\n';
    }
}

}  // namespace driftbench
