// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "distill/alignment.hpp"
#include "distill/autograd.hpp"

namespace distill {

class Tokenizer;

/// Head-averaged post-softmax attention and value projections, one entry per layer.
struct SelfAttentionStack {
    std::vector<ag::Tensor> attention;  // seq x seq, causal, rows sum to 1
    std::vector<ag::Tensor> values;     // seq x d

    std::size_t layer_count() const noexcept { return attention.size(); }
};

/// Steps x critical-words matrix of one layer.
struct StepwiseAttention {
    ag::Tensor matrix;
    int layer = 0;
    std::string model_id;
};

struct ForwardOutput {
    ag::Tensor logits;  // seq x vocab, next-token logits
    SelfAttentionStack stack;
};

/// A transformer that can hand out its per-layer attention and value matrices.
/// Adapters for external checkpoints plug in here.
class WhiteBoxModel {
public:
    virtual ~WhiteBoxModel() = default;

    virtual std::string model_id() const = 0;
    virtual bool exposes_internals() const noexcept { return true; }
    virtual bool frozen() const noexcept = 0;
    virtual int layer_count() const noexcept = 0;
    virtual const Tokenizer& tokenizer() const = 0;
    virtual ForwardOutput forward_with_internals(std::span<const int> token_ids) const = 0;
};

/// Runs a forward pass and returns its internals. Frozen models run without
/// gradient tracking. Throws UnsupportedModel if the model hides its internals.
SelfAttentionStack extract_stack(const WhiteBoxModel& model, std::span<const int> token_ids);

/// matrix[i,j] = sum over r in step i, c in critical word j of attn[r,c].
/// Throws ShapeMismatch when attn is not sequence_length square.
StepwiseAttention aggregate_stepwise(const ag::Tensor& attn, const TokenAlignment& alignment, int layer = 0);
ag::Matrix aggregate_stepwise(const ag::Matrix& attn, const TokenAlignment& alignment);

/// Stepwise attention of every layer, using the square block of each attention
/// matrix that starts at `body_offset` (tokens before it are task prefixes).
std::vector<StepwiseAttention> stepwise_per_layer(const SelfAttentionStack& stack,
                                                  const TokenAlignment& alignment,
                                                  Eigen::Index body_offset = 0);

/// Zeroes row 0 and column 0 of an attention block (drops the first token's share).
ag::Matrix drop_first_token(const ag::Matrix& attn);

}  // namespace distill
