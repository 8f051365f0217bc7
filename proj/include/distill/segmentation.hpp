// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "distill/cot_example.hpp"

namespace distill {

/// Half-open byte range [begin, end) into a text.
struct CharSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool contains(std::size_t pos) const noexcept { return pos >= begin && pos < end; }
    bool overlaps(std::size_t b, std::size_t e) const noexcept { return b < end && begin < e; }
    bool operator==(const CharSpan&) const = default;
};

/// Sentence-level reasoning steps of question+rationale. Spans are trimmed,
/// ordered and disjoint; the whitespace between them belongs to no span.
struct StepSegmentation {
    std::vector<CharSpan> steps;

    std::size_t step_count() const noexcept { return steps.size(); }
    /// Step owning byte `pos`: the last step starting at or before it (0 for leading bytes).
    std::size_t step_of(std::size_t pos) const noexcept;
};

struct CriticalOccurrence {
    CharSpan span;
    std::string surface;
    bool operator==(const CriticalOccurrence&) const = default;
};

struct CriticalWordList {
    std::vector<CriticalOccurrence> occurrences;

    std::size_t count() const noexcept { return occurrences.size(); }
};

/// Splits on '.', '?' and '!' followed by whitespace or end of text. Decimal
/// points and a short abbreviation list never split. Throws EmptyText.
StepSegmentation segment_steps(std::string_view text);

/// Numeric literals of `text` in order (math-mode critical words).
std::vector<CriticalOccurrence> find_numbers(std::string_view text);

/// Case-insensitive whole-word occurrences of `keywords`, ordered, non-overlapping.
std::vector<CriticalOccurrence> find_keywords(std::string_view text,
                                              const std::vector<std::string>& keywords);

/// Critical words of cot_text(example). Throws NoCriticalTokens when none are found.
CriticalWordList find_critical_words(const CoTExample& example, CriticalMode mode);

}  // namespace distill
