// SPDX-License-Identifier: Apache-2.0
#include "distill/losses.hpp"

#include <spdlog/spdlog.h>

#include "distill/errors.hpp"
#include "distill/text_util.hpp"

namespace distill {

std::string_view to_string(Method method) noexcept {
    switch (method) {
        case Method::Vanilla: return "vanilla";
        case Method::Dss: return "dss";
        case Method::Molsaki: return "molsaki";
        case Method::MolsakiSl: return "molsaki_sl";
    }
    return "unknown";
}

Method parse_method(std::string_view text) {
    if (text == "vanilla") return Method::Vanilla;
    if (text == "dss") return Method::Dss;
    if (text == "molsaki") return Method::Molsaki;
    if (text == "molsaki_sl") return Method::MolsakiSl;
    throw DistillError(ErrorCode::ConfigInvalid, "unknown method '" + std::string(text) + "'");
}

void LossConfig::validate(int teacher_layers, int student_layers) const {
    const auto fail = [](const std::string& why) { return DistillError(ErrorCode::ConfigInvalid, why); };
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw fail("alpha must lie in [0, 1]");
    if (!(beta >= 0.0)) throw fail("beta must be non-negative");
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw fail("temperatures must be positive");
    if (method == Method::MolsakiSl) {
        if (!sl_pair) throw fail("molsaki_sl needs sl_pair");
        const bool teacher_ok = sl_pair->teacher_layer >= 0 && (teacher_layers < 0 || sl_pair->teacher_layer < teacher_layers);
        const bool student_ok = sl_pair->student_layer >= 0 && (student_layers < 0 || sl_pair->student_layer < student_layers);
        if (!teacher_ok || !student_ok) throw fail("sl_pair layer index out of range");
    }
}

double LossConfig::effective_alpha() const noexcept { return method == Method::Vanilla ? 1.0 : alpha; }
double LossConfig::effective_explain_weight() const noexcept { return method == Method::Vanilla ? 0.0 : 1.0 - alpha; }
double LossConfig::effective_beta() const noexcept { return uses_attention() ? beta : 0.0; }

namespace {

std::vector<int> with_eos(std::vector<int> ids) {
    ids.push_back(Tokenizer::id(SpecialToken::EndOfText));
    return ids;
}

// Shifts a full token list into (inputs, next-token targets) where only
// positions predicting tokens at index >= first_target contribute.
TaskSequence shift(const std::vector<int>& full, std::size_t first_target) {
    TaskSequence seq;
    seq.input_ids.assign(full.begin(), full.end() - 1);
    seq.targets.assign(seq.input_ids.size(), -1);
    for (std::size_t i = first_target; i < full.size(); ++i) seq.targets[i - 1] = full[i];
    return seq;
}

}  // namespace

std::vector<int> predict_prompt(const Tokenizer& tokenizer, const CoTExample& example) {
    std::vector<int> ids{Tokenizer::id(SpecialToken::Predict)};
    const auto q = tokenizer.encode_ids(text::trim(example.question));
    ids.insert(ids.end(), q.begin(), q.end());
    return ids;
}

TaskSequence predict_sequence(const Tokenizer& tokenizer, const CoTExample& example) {
    auto ids = predict_prompt(tokenizer, example);
    const std::size_t first_target = ids.size();
    const auto answer = tokenizer.encode_ids(text::trim(example.answer));
    if (answer.empty()) throw DistillError(ErrorCode::EmptyTarget, "answer has no tokens");
    ids.insert(ids.end(), answer.begin(), answer.end());
    return shift(with_eos(std::move(ids)), first_target);
}

TaskSequence explain_sequence(const Tokenizer& tokenizer, const CoTExample& example) {
    const std::string body = cot_text(example);
    const std::size_t rationale_start = rationale_offset(example);
    const auto tokens = tokenizer.encode(body);
    std::vector<int> ids{Tokenizer::id(SpecialToken::Explain)};
    std::size_t first_target = 0;
    for (const auto& t : tokens) {
        if (first_target == 0 && t.begin >= rationale_start) first_target = ids.size();
        ids.push_back(t.id);
    }
    if (first_target == 0) throw DistillError(ErrorCode::EmptyTarget, "rationale has no tokens");
    auto seq = shift(with_eos(std::move(ids)), first_target);
    seq.body_offset = 1;
    seq.body_length = static_cast<int>(tokens.size());
    return seq;
}

ag::Tensor sequence_loss(const ag::Tensor& logits, const TaskSequence& seq) {
    return ag::cross_entropy(logits, seq.targets);
}

TaskLosses task_losses(const WhiteBoxModel& student, const CoTExample& example) {
    const auto pre = predict_sequence(student.tokenizer(), example);
    const auto exp = explain_sequence(student.tokenizer(), example);
    return {sequence_loss(student.forward_with_internals(pre.input_ids).logits, pre),
            sequence_loss(student.forward_with_internals(exp.input_ids).logits, exp)};
}

ag::Tensor attention_loss(std::span<const ag::Tensor> teacher_layers, std::span<const ag::Tensor> student_layers,
                          const ag::Tensor& teacher_weights, const ag::Tensor& student_weights) {
    if (teacher_layers.empty() || student_layers.empty()) {
        throw DistillError(ErrorCode::ShapeMismatch, "attention_loss needs at least one layer per model");
    }
    if (teacher_weights.rows() != static_cast<Eigen::Index>(teacher_layers.size()) ||
        student_weights.rows() != static_cast<Eigen::Index>(student_layers.size())) {
        throw DistillError(ErrorCode::ShapeMismatch, "layer weight count does not match layer count");
    }
    const Eigen::Index rows = teacher_layers[0].rows();
    const Eigen::Index cols = teacher_layers[0].cols();
    const auto same_shape = [&](const ag::Tensor& t) { return t.rows() == rows && t.cols() == cols; };
    for (const auto& t : teacher_layers) {
        if (!same_shape(t)) throw DistillError(ErrorCode::ShapeMismatch, "teacher stepwise shapes differ");
    }
    for (const auto& t : student_layers) {
        if (!same_shape(t)) {
            throw DistillError(ErrorCode::ShapeMismatch,
                               "student stepwise attention is " + std::to_string(t.rows()) + "x" +
                                   std::to_string(t.cols()) + ", teacher is " + std::to_string(rows) + "x" +
                                   std::to_string(cols));
        }
    }
    if (cols == 1) {
        spdlog::warn("attention loss over a single critical column is identically 0");
        return ag::scalar(0.0);
    }
    const auto teacher_rows = ag::softmax_rows(ag::weighted_sum(teacher_layers, teacher_weights));
    const auto student_rows = ag::softmax_rows(ag::weighted_sum(student_layers, student_weights));
    return ag::kl_rows_mean(teacher_rows, student_rows);
}

double attention_loss(std::span<const ag::Matrix> teacher_layers, std::span<const ag::Matrix> student_layers,
                      const LayerWeights& teacher_weights, const LayerWeights& student_weights) {
    ag::NoGradGuard no_grad;
    std::vector<ag::Tensor> t;
    std::vector<ag::Tensor> s;
    for (const auto& m : teacher_layers) t.push_back(ag::constant(m));
    for (const auto& m : student_layers) s.push_back(ag::constant(m));
    return attention_loss(t, s, ag::constant(teacher_weights.weights), ag::constant(student_weights.weights)).item();
}

LossBreakdown total_loss(const LossConfig& config, double l_pre, double l_exp, double l_att) {
    LossBreakdown out{l_pre, l_exp, l_att, 0.0};
    out.total = config.effective_alpha() * l_pre + config.effective_explain_weight() * l_exp +
                config.effective_beta() * l_att;
    return out;
}

ag::Tensor total_loss(const LossConfig& config, const ag::Tensor& l_pre, const ag::Tensor& l_exp,
                      const ag::Tensor& l_att) {
    std::vector<ag::Tensor> terms{ag::scale(l_pre, config.effective_alpha())};
    if (config.uses_rationale() && l_exp.defined()) terms.push_back(ag::scale(l_exp, config.effective_explain_weight()));
    if (config.uses_attention() && l_att.defined()) terms.push_back(ag::scale(l_att, config.effective_beta()));
    return ag::sum_of(terms);
}

}  // namespace distill
