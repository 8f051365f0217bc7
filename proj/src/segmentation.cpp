// SPDX-License-Identifier: Apache-2.0
#include "distill/segmentation.hpp"

#include <algorithm>
#include <array>

#include "distill/errors.hpp"
#include "distill/text_util.hpp"

namespace distill {

namespace {

constexpr std::array<std::string_view, 13> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "vs", "etc", "approx", "e.g", "i.e", "prof",
};

bool is_terminator(char c) noexcept { return c == '.' || c == '?' || c == '!'; }

bool ends_abbreviation(std::string_view text, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0 && (text::is_alpha(text[b - 1]) || text[b - 1] == '.')) --b;
    if (b == dot) return false;
    const std::string word = text::to_lower(text.substr(b, dot - b));
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

// Closing quotes/brackets that stay attached to the sentence they end.
bool is_closer(char c) noexcept { return c == '"' || c == '\'' || c == ')' || c == ']'; }

}  // namespace

std::size_t StepSegmentation::step_of(std::size_t pos) const noexcept {
    auto it = std::upper_bound(steps.begin(), steps.end(), pos,
                               [](std::size_t p, const CharSpan& s) { return p < s.begin; });
    if (it == steps.begin()) return 0;
    return static_cast<std::size_t>(std::distance(steps.begin(), it)) - 1;
}

StepSegmentation segment_steps(std::string_view text) {
    if (text::trim(text).empty()) {
        throw DistillError(ErrorCode::EmptyText, "cannot segment blank text");
    }
    StepSegmentation seg;
    const std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        while (i < n && text::is_space(text[i])) ++i;
        if (i >= n) break;
        const std::size_t start = i;
        std::size_t end = n;
        while (i < n) {
            if (is_terminator(text[i])) {
                std::size_t j = i;
                while (j < n && (is_terminator(text[j]) || is_closer(text[j]))) ++j;
                const bool boundary = j == n || text::is_space(text[j]);
                const bool abbrev = text[i] == '.' && j == i + 1 && ends_abbreviation(text, i);
                if (boundary && !abbrev) {
                    end = j;
                    i = j;
                    break;
                }
                i = j;
                continue;
            }
            ++i;
        }
        if (end == n) {
            end = n;
            while (end > start && text::is_space(text[end - 1])) --end;
            i = n;
        }
        seg.steps.push_back({start, end});
    }
    return seg;
}

std::vector<CriticalOccurrence> find_numbers(std::string_view text) {
    std::vector<CriticalOccurrence> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t e = text::scan_number(text, i);
        if (e > i) {
            out.push_back({{i, e}, std::string(text.substr(i, e - i))});
            i = e;
        } else {
            ++i;
        }
    }
    return out;
}

std::vector<CriticalOccurrence> find_keywords(std::string_view text,
                                              const std::vector<std::string>& keywords) {
    const std::string lower = text::to_lower(text);
    std::vector<CriticalOccurrence> found;
    for (const auto& kw : keywords) {
        const std::string needle = text::to_lower(text::trim(kw));
        if (needle.empty()) continue;
        std::size_t pos = lower.find(needle);
        while (pos != std::string::npos) {
            const std::size_t end = pos + needle.size();
            const bool left_ok = pos == 0 || !text::is_word_char(lower[pos - 1]);
            const bool right_ok = end == lower.size() || !text::is_word_char(lower[end]);
            if (left_ok && right_ok) {
                found.push_back({{pos, end}, std::string(text.substr(pos, needle.size()))});
            }
            pos = lower.find(needle, pos + 1);
        }
    }
    // Earliest first; on equal starts the longer keyword wins.
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
        return a.span.end > b.span.end;
    });
    std::vector<CriticalOccurrence> out;
    for (auto& occ : found) {
        if (!out.empty() && occ.span.begin < out.back().span.end) continue;
        out.push_back(std::move(occ));
    }
    return out;
}

CriticalWordList find_critical_words(const CoTExample& example, CriticalMode mode) {
    const std::string body = cot_text(example);
    CriticalWordList list;
    if (mode == CriticalMode::Math) {
        list.occurrences = find_numbers(body);
    } else {
        if (!example.keywords) {
            throw DistillError(ErrorCode::InvalidExample, "commonsense mode requires keywords");
        }
        list.occurrences = find_keywords(body, *example.keywords);
    }
    if (list.occurrences.empty()) {
        throw DistillError(ErrorCode::NoCriticalTokens, "no critical words in example");
    }
    return list;
}

}  // namespace distill
