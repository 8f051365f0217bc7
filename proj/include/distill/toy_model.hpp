// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill/attention.hpp"
#include "distill/autograd.hpp"
#include "distill/tokenizer.hpp"

namespace distill {

struct ToyTransformerConfig {
    std::string name = "model";
    int n_layers = 4;
    int n_heads = 4;
    int d_model = 64;
    int vocab_size = 0;  // filled from the tokenizer
    int max_seq_len = 256;
    TokenizerKind tokenizer_kind = TokenizerKind::CharPair;
    std::uint64_t seed = 0;

    /// 8 layers, 128 wide, word-level tokens.
    static ToyTransformerConfig teacher_fixture();
    /// 4 layers, 64 wide, character-pair tokens.
    static ToyTransformerConfig student_fixture();

    int head_dim() const noexcept { return d_model / n_heads; }
    void validate() const;
    nlohmann::json to_json() const;
    static ToyTransformerConfig from_json(const nlohmann::json& j);
};

struct NamedParameter {
    std::string name;
    ag::Tensor tensor;
};

/// Pre-norm causal transformer (RMSNorm, GELU MLP, learned positions) whose
/// forward pass returns head-averaged attention and value matrices per layer.
class ToyTransformer final : public WhiteBoxModel {
public:
    ToyTransformer(ToyTransformerConfig config, std::shared_ptr<const Tokenizer> tokenizer);

    std::string model_id() const override { return config_.name; }
    bool frozen() const noexcept override { return frozen_; }
    int layer_count() const noexcept override { return config_.n_layers; }
    const Tokenizer& tokenizer() const override { return *tokenizer_; }
    std::shared_ptr<const Tokenizer> shared_tokenizer() const { return tokenizer_; }
    const ToyTransformerConfig& config() const noexcept { return config_; }

    /// Throws SequenceTooLong past max_seq_len.
    ForwardOutput forward_with_internals(std::span<const int> token_ids) const override;

    /// Greedy continuation of `prompt` until <eos> or `max_new_tokens`.
    std::vector<int> generate_greedy(std::span<const int> prompt, int max_new_tokens) const;

    std::vector<NamedParameter> parameters() const;
    /// Stops every parameter from taking gradient.
    void freeze();

private:
    struct Layer {
        ag::Tensor attn_norm, wq, wk, wv, wo;
        ag::Tensor mlp_norm, w1, b1, w2, b2;
    };

    ToyTransformerConfig config_;
    std::shared_ptr<const Tokenizer> tokenizer_;
    ag::Tensor tok_emb_, pos_emb_, final_norm_, lm_head_;
    std::vector<Layer> layers_;
    bool frozen_ = false;
};

// Checkpoint container:
//   8 bytes   magic "DSTLCKP1"
//   8 bytes   little-endian uint64 header length H
//   H bytes   UTF-8 JSON header {format_version, config, tokenizer, frozen,
//             tensors: [{name, rows, cols, offset}], extra_tensors: [...], metadata}
//   payload   float64 little-endian, row-major, at the listed byte offsets
struct Checkpoint {
    std::unique_ptr<ToyTransformer> model;
    std::map<std::string, ag::Matrix> extra;
    nlohmann::json metadata;
};

void save_checkpoint(const std::filesystem::path& path, const ToyTransformer& model,
                     const std::vector<NamedParameter>& extra = {}, const nlohmann::json& metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace distill
