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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace driftbench {

// Malformed input file; carries the 1-based line number of the offending record.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Non-finite values reaching a numeric kernel.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// A curation class ran out of candidates.
class ShortageError : public std::runtime_error {
public:
    ShortageError(const std::string& class_name, const std::string& what)
        : std::runtime_error("class '" + class_name + "': " + what), class_name_(class_name) {}

    const std::string& class_name() const noexcept { return class_name_; }

private:
    std::string class_name_;
};

}  // namespace driftbench
