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

#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "driftbench/detail/text.hpp"
#include "driftbench/errors.hpp"

namespace driftbench {

enum class ProtocolKind { Iid, Streaming };

inline std::string_view to_string(ProtocolKind k) { return k == ProtocolKind::Iid ? "iid" : "streaming"; }

inline ProtocolKind parse_protocol(std::string_view text) {
    text = detail::trim(text);
    if (text == "iid") return ProtocolKind::Iid;
    if (text == "streaming") return ProtocolKind::Streaming;
    throw std::invalid_argument("protocol '" + std::string(text) + "' must be iid or streaming");
}

// R(i, j): accuracy of the learner trained through bucket i on bucket j's test data.
// IID matrices are dense; streaming matrices only hold the strict upper triangle.
class AccuracyMatrix {
public:
    AccuracyMatrix(std::size_t n, ProtocolKind kind) : n_(n), kind_(kind), cells_(n * n) {
        if (n < 2) throw std::invalid_argument("accuracy matrix needs N >= 2");
    }

    std::size_t size() const { return n_; }
    ProtocolKind kind() const { return kind_; }

    // Whether the protocol defines cell (i, j).
    bool admissible(std::size_t i, std::size_t j) const { return kind_ == ProtocolKind::Iid || j > i; }

    const std::optional<double>& at(std::size_t i, std::size_t j) const { return cells_.at(i * n_ + j); }

    void set(std::size_t i, std::size_t j, double value) {
        if (i >= n_ || j >= n_) throw std::out_of_range("accuracy matrix index");
        if (!admissible(i, j))
            throw std::invalid_argument("cell (" + std::to_string(i) + "," + std::to_string(j) +
                                        ") is not defined under the streaming protocol");
        if (!(value >= 0.0 && value <= 1.0)) throw std::invalid_argument("accuracy must lie in [0, 1]");
        cells_[i * n_ + j] = value;
    }

    // True when exactly the admissible cells are filled.
    bool complete() const {
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j)
                if (admissible(i, j) != at(i, j).has_value()) return false;
        return true;
    }

    AccuracyMatrix transposed() const {
        AccuracyMatrix t(n_, ProtocolKind::Iid);
        t.kind_ = kind_;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) t.cells_[j * n_ + i] = at(i, j);
        return t;
    }

    bool operator==(const AccuracyMatrix&) const = default;

private:
    std::size_t n_;
    ProtocolKind kind_;
    std::vector<std::optional<double>> cells_;
};

// `N=<N> protocol=<iid|streaming>`, then N rows of comma-separated cells, NA when absent.
inline void write_matrix(std::ostream& out, const AccuracyMatrix& m) {
    out << "N=" << m.size() << " protocol=" << to_string(m.kind()) << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            if (j) out << ',';
            const auto& cell = m.at(i, j);
            out << (cell ? detail::format_fixed(*cell, 6) : std::string("NA"));
        }
        out << '\n';
    }
}

inline AccuracyMatrix read_matrix(std::istream& in, const std::string& source = "<matrix>") {
    std::string line;
    std::size_t line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!detail::trim(line).empty()) return true;
        }
        return false;
    };
    if (!next_line()) throw ParseError(source, line_no, "empty matrix file");

    std::optional<std::size_t> n;
    std::optional<ProtocolKind> kind;
    std::istringstream header(line);
    std::string token;
    while (header >> token) {
        if (token.starts_with("N=")) n = detail::parse_number<std::size_t>(std::string_view(token).substr(2));
        else if (token.starts_with("protocol=")) {
            try {
                kind = parse_protocol(std::string_view(token).substr(9));
            } catch (const std::invalid_argument& e) {
                throw ParseError(source, line_no, e.what());
            }
        }
    }
    if (!n || !kind || *n < 2) throw ParseError(source, line_no, "header must be 'N=<N> protocol=<iid|streaming>'");

    AccuracyMatrix m(*n, *kind);
    for (std::size_t i = 0; i < *n; ++i) {
        if (!next_line()) throw ParseError(source, line_no, "expected " + std::to_string(*n) + " rows");
        const auto fields = detail::split(detail::trim(line), ',');
        if (fields.size() != *n) throw ParseError(source, line_no, "row has wrong number of entries");
        for (std::size_t j = 0; j < *n; ++j) {
            const auto f = detail::trim(fields[j]);
            if (f == "NA") continue;
            const auto v = detail::parse_number<double>(f);
            if (!v) throw ParseError(source, line_no, "bad entry '" + std::string(f) + "'");
            try {
                m.set(i, j, *v);
            } catch (const std::invalid_argument& e) {
                throw ParseError(source, line_no, e.what());
            }
        }
    }
    return m;
}

}  // namespace driftbench
