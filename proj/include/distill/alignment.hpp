// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "distill/cot_example.hpp"
#include "distill/segmentation.hpp"
#include "distill/tokenizer.hpp"

namespace distill {

using IndexSet = std::vector<int>;

/// Token index sets for one model: the step partition and one set per critical word.
struct TokenAlignment {
    std::string model_id;
    std::vector<IndexSet> step_token_sets;
    std::vector<IndexSet> critical_token_sets;
    int sequence_length = 0;

    std::size_t step_count() const noexcept { return step_token_sets.size(); }
    std::size_t critical_count() const noexcept { return critical_token_sets.size(); }
};

/// Maps steps and critical occurrences onto `tokens` (byte offsets into the segmented text). A token belongs
/// to the step owning its first byte; a critical occurrence maps to every token
/// overlapping its byte span. Throws AlignmentGap when an occurrence has no token.
TokenAlignment align_tokens(const StepSegmentation& seg, const CriticalWordList& crit,
                            const std::vector<Token>& tokens,
                            std::string model_id);

/// Convenience overload tokenizing cot_text(example).
TokenAlignment align_tokens(const CoTExample& example, const StepSegmentation& seg,
                            const CriticalWordList& crit, const Tokenizer& tokenizer,
                            std::string model_id);

/// Segments, finds critical words and aligns in one call.
TokenAlignment build_alignment(const CoTExample& example, CriticalMode mode, const Tokenizer& tokenizer,
                               std::string model_id);

/// Throws ShapeMismatch if the alignment violates its partition/containment invariants.
void check_alignment(const TokenAlignment& alignment);

}  // namespace distill
