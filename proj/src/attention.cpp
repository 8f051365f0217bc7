// SPDX-License-Identifier: Apache-2.0
#include "distill/attention.hpp"

#include "distill/errors.hpp"

namespace distill {

SelfAttentionStack extract_stack(const WhiteBoxModel& model, std::span<const int> token_ids) {
    if (!model.exposes_internals()) {
        throw DistillError(ErrorCode::UnsupportedModel, model.model_id() + " does not expose attention internals");
    }
    if (model.frozen()) {
        ag::NoGradGuard no_grad;
        return model.forward_with_internals(token_ids).stack;
    }
    return model.forward_with_internals(token_ids).stack;
}

StepwiseAttention aggregate_stepwise(const ag::Tensor& attn, const TokenAlignment& alignment, int layer) {
    if (attn.rows() != alignment.sequence_length || attn.cols() != alignment.sequence_length) {
        throw DistillError(ErrorCode::ShapeMismatch,
                           "attention is " + std::to_string(attn.rows()) + "x" + std::to_string(attn.cols()) +
                               " but alignment covers " + std::to_string(alignment.sequence_length) + " tokens");
    }
    return {ag::aggregate_sets(attn, alignment.step_token_sets, alignment.critical_token_sets), layer,
            alignment.model_id};
}

ag::Matrix aggregate_stepwise(const ag::Matrix& attn, const TokenAlignment& alignment) {
    ag::NoGradGuard no_grad;
    return aggregate_stepwise(ag::constant(attn), alignment).matrix.value();
}

std::vector<StepwiseAttention> stepwise_per_layer(const SelfAttentionStack& stack,
                                                  const TokenAlignment& alignment,
                                                  Eigen::Index body_offset) {
    std::vector<StepwiseAttention> out;
    out.reserve(stack.layer_count());
    for (std::size_t l = 0; l < stack.layer_count(); ++l) {
        const auto block = body_offset == 0 ? stack.attention[l] : ag::trailing_block(stack.attention[l], body_offset);
        out.push_back(aggregate_stepwise(block, alignment, static_cast<int>(l)));
    }
    return out;
}

ag::Matrix drop_first_token(const ag::Matrix& attn) {
    ag::Matrix out = attn;
    if (out.rows() > 0) {
        out.row(0).setZero();
        out.col(0).setZero();
    }
    return out;
}

}  // namespace distill
