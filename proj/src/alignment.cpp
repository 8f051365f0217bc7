// SPDX-License-Identifier: Apache-2.0
#include "distill/alignment.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "distill/errors.hpp"

namespace distill {

TokenAlignment align_tokens(const StepSegmentation& seg, const CriticalWordList& crit,
                            const std::vector<Token>& tokens,
                            std::string model_id) {
    TokenAlignment out;
    out.model_id = std::move(model_id);
    out.sequence_length = static_cast<int>(tokens.size());
    out.step_token_sets.assign(seg.step_count(), {});

    std::vector<std::size_t> token_step(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        // A token opening with whitespace belongs to the step of its first non-space byte.
        std::size_t step = seg.step_of(tokens[t].begin);
        if (step + 1 < seg.step_count() && !seg.steps[step].overlaps(tokens[t].begin, tokens[t].end) &&
            seg.steps[step + 1].overlaps(tokens[t].begin, tokens[t].end)) {
            ++step;
        }
        token_step[t] = step;
        out.step_token_sets[token_step[t]].push_back(static_cast<int>(t));
    }
    for (std::size_t s = 0; s < out.step_token_sets.size(); ++s) {
        if (out.step_token_sets[s].empty()) {
            throw DistillError(ErrorCode::AlignmentGap,
                               out.model_id + ": step " + std::to_string(s) + " received no tokens");
        }
    }

    for (const auto& occ : crit.occurrences) {
        const std::size_t home = seg.step_of(occ.span.begin);
        IndexSet set;
        bool straddles = false;
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (!occ.span.overlaps(tokens[t].begin, tokens[t].end)) continue;
            if (token_step[t] != home) {
                straddles = true;
                continue;
            }
            set.push_back(static_cast<int>(t));
        }
        if (straddles) {
            spdlog::warn("{}: critical word '{}' crosses a step boundary; kept tokens of step {}",
                         out.model_id, occ.surface, home);
        }
        if (set.empty()) {
            throw DistillError(ErrorCode::AlignmentGap, out.model_id + ": critical word '" + occ.surface +
                                                            "' at byte " + std::to_string(occ.span.begin) +
                                                            " maps to no token");
        }
        out.critical_token_sets.push_back(std::move(set));
    }
    return out;
}

TokenAlignment align_tokens(const CoTExample& example, const StepSegmentation& seg,
                            const CriticalWordList& crit, const Tokenizer& tokenizer,
                            std::string model_id) {
    const std::string body = cot_text(example);
    return align_tokens(seg, crit, tokenizer.encode(body), std::move(model_id));
}

TokenAlignment build_alignment(const CoTExample& example, CriticalMode mode, const Tokenizer& tokenizer,
                               std::string model_id) {
    const std::string body = cot_text(example);
    const auto seg = segment_steps(body);
    const auto crit = find_critical_words(example, mode);
    return align_tokens(seg, crit, tokenizer.encode(body), std::move(model_id));
}

void check_alignment(const TokenAlignment& alignment) {
    const auto fail = [&](const std::string& why) {
        return DistillError(ErrorCode::ShapeMismatch, alignment.model_id + ": " + why);
    };
    int expected = 0;
    std::vector<int> owner(static_cast<std::size_t>(std::max(alignment.sequence_length, 0)), -1);
    for (std::size_t s = 0; s < alignment.step_token_sets.size(); ++s) {
        for (int idx : alignment.step_token_sets[s]) {
            if (idx != expected) throw fail("step sets do not partition the sequence in order");
            owner[static_cast<std::size_t>(idx)] = static_cast<int>(s);
            ++expected;
        }
    }
    if (expected != alignment.sequence_length) throw fail("step sets do not cover the sequence");
    int previous_min = -1;
    for (const auto& set : alignment.critical_token_sets) {
        if (set.empty()) throw fail("empty critical token set");
        const int lo = *std::min_element(set.begin(), set.end());
        if (lo <= previous_min) throw fail("critical sets out of order");
        previous_min = lo;
        for (int idx : set) {
            if (idx < 0 || idx >= alignment.sequence_length) throw fail("critical index out of range");
            if (owner[static_cast<std::size_t>(idx)] != owner[static_cast<std::size_t>(lo)]) {
                throw fail("critical set spans several steps");
            }
        }
    }
}

}  // namespace distill
