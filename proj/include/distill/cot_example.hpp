// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace distill {

enum class CriticalMode { Math, Commonsense };

std::string_view to_string(CriticalMode mode) noexcept;
CriticalMode parse_critical_mode(std::string_view text);

/// One training record. The rationale is the teacher's step-by-step text and
/// `answer` the teacher's final answer; `gold_answer` is the dataset label.
struct CoTExample {
    std::string question;
    std::string rationale;
    std::string answer;
    std::optional<std::vector<std::string>> keywords;
    std::string gold_answer;

    bool operator==(const CoTExample&) const = default;
};

/// Throws InvalidExample when the record violates its invariants for `mode`.
void validate(const CoTExample& example, CriticalMode mode);

/// The text whose tokens carry stepwise attention: question, one space, rationale.
std::string cot_text(const CoTExample& example);

/// Character offset at which the rationale starts inside cot_text().
std::size_t rationale_offset(const CoTExample& example);

// JSON-lines dataset files. Field names: question, rationale, answer,
// keywords (nullable array), gold_answer.
std::vector<CoTExample> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<CoTExample>& examples);
CoTExample parse_example_line(std::string_view line, std::size_t line_number);
std::string format_example_line(const CoTExample& example);

}  // namespace distill
