// SPDX-License-Identifier: Apache-2.0
#include "distill/toy_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "distill/errors.hpp"

namespace distill {

namespace {

constexpr double kNormEps = 1e-5;
constexpr char kMagic[8] = {'D', 'S', 'T', 'L', 'C', 'K', 'P', '1'};

ag::Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    ag::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

ag::Tensor rms(const ag::Tensor& x, const ag::Tensor& gain) {
    return ag::mul_row(ag::rms_norm_rows(x, kNormEps), gain);
}

}  // namespace

ToyTransformerConfig ToyTransformerConfig::teacher_fixture() {
    ToyTransformerConfig c;
    c.name = "teacher";
    c.n_layers = 8;
    c.n_heads = 4;
    c.d_model = 128;
    c.max_seq_len = 160;
    c.tokenizer_kind = TokenizerKind::WordLevel;
    c.seed = 7;
    return c;
}

ToyTransformerConfig ToyTransformerConfig::student_fixture() {
    ToyTransformerConfig c;
    c.name = "student";
    c.n_layers = 4;
    c.n_heads = 4;
    c.d_model = 64;
    c.max_seq_len = 384;
    c.tokenizer_kind = TokenizerKind::CharPair;
    c.seed = 11;
    return c;
}

void ToyTransformerConfig::validate() const {
    const auto fail = [](const std::string& why) { return DistillError(ErrorCode::ConfigInvalid, why); };
    if (n_layers < 1) throw fail("n_layers must be >= 1");
    if (n_heads < 1 || d_model < 1 || d_model % n_heads != 0) throw fail("d_model must be divisible by n_heads");
    if (vocab_size < 1) throw fail("vocab_size must be positive");
    if (max_seq_len < 1) throw fail("max_seq_len must be positive");
}

nlohmann::json ToyTransformerConfig::to_json() const {
    return {{"name", name},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"d_model", d_model},
            {"vocab_size", vocab_size},
            {"max_seq_len", max_seq_len},
            {"tokenizer_kind", std::string(to_string(tokenizer_kind))},
            {"seed", seed}};
}

ToyTransformerConfig ToyTransformerConfig::from_json(const nlohmann::json& j) {
    ToyTransformerConfig c;
    c.name = j.at("name").get<std::string>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.tokenizer_kind = parse_tokenizer_kind(j.at("tokenizer_kind").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

ToyTransformer::ToyTransformer(ToyTransformerConfig config, std::shared_ptr<const Tokenizer> tokenizer)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)) {
    if (!tokenizer_) throw DistillError(ErrorCode::ConfigInvalid, "model needs a tokenizer");
    if (tokenizer_->kind() != config_.tokenizer_kind) {
        throw DistillError(ErrorCode::ConfigInvalid, "tokenizer kind does not match config");
    }
    config_.vocab_size = tokenizer_->vocab_size();
    config_.validate();

    std::mt19937_64 rng(config_.seed);
    const int d = config_.d_model;
    const int ff = 4 * d;
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double resid_std = proj_std / std::sqrt(2.0 * config_.n_layers);
    const ag::Matrix ones = ag::Matrix::Ones(1, d);

    tok_emb_ = ag::parameter(gaussian(config_.vocab_size, d, 0.1, rng));
    pos_emb_ = ag::parameter(gaussian(config_.max_seq_len, d, 0.1, rng));
    for (int l = 0; l < config_.n_layers; ++l) {
        Layer layer;
        layer.attn_norm = ag::parameter(ones);
        layer.wq = ag::parameter(gaussian(d, d, proj_std, rng));
        layer.wk = ag::parameter(gaussian(d, d, proj_std, rng));
        layer.wv = ag::parameter(gaussian(d, d, proj_std, rng));
        layer.wo = ag::parameter(gaussian(d, d, resid_std, rng));
        layer.mlp_norm = ag::parameter(ones);
        layer.w1 = ag::parameter(gaussian(d, ff, proj_std, rng));
        layer.b1 = ag::parameter(ag::Matrix::Zero(1, ff));
        layer.w2 = ag::parameter(gaussian(ff, d, resid_std / 2.0, rng));
        layer.b2 = ag::parameter(ag::Matrix::Zero(1, d));
        layers_.push_back(std::move(layer));
    }
    final_norm_ = ag::parameter(ones);
    lm_head_ = ag::parameter(gaussian(d, config_.vocab_size, proj_std, rng));
}

ForwardOutput ToyTransformer::forward_with_internals(std::span<const int> token_ids) const {
    const auto seq = static_cast<Eigen::Index>(token_ids.size());
    if (seq == 0) throw DistillError(ErrorCode::EmptyText, "empty token sequence");
    if (seq > config_.max_seq_len) {
        throw DistillError(ErrorCode::SequenceTooLong, std::to_string(seq) + " tokens exceed max_seq_len " +
                                                           std::to_string(config_.max_seq_len));
    }
    const int heads = config_.n_heads;
    const int hd = config_.head_dim();
    const double score_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    ForwardOutput out;
    ag::Tensor x = ag::add(ag::gather_rows(tok_emb_, token_ids), ag::slice_rows(pos_emb_, 0, seq));
    for (const auto& layer : layers_) {
        const auto h = rms(x, layer.attn_norm);
        const auto q = ag::matmul(h, layer.wq);
        const auto k = ag::matmul(h, layer.wk);
        const auto v = ag::matmul(h, layer.wv);

        std::vector<ag::Tensor> probs;
        std::vector<ag::Tensor> head_out;
        for (int hh = 0; hh < heads; ++hh) {
            const auto qh = ag::slice_cols(q, hh * hd, hd);
            const auto kh = ag::slice_cols(k, hh * hd, hd);
            const auto vh = ag::slice_cols(v, hh * hd, hd);
            auto p = ag::causal_softmax(ag::matmul_nt(qh, kh), score_scale);
            head_out.push_back(ag::matmul(p, vh));
            probs.push_back(std::move(p));
        }
        out.stack.attention.push_back(ag::mean_of(probs));
        out.stack.values.push_back(v);

        x = ag::add(x, ag::matmul(ag::concat_cols(head_out), layer.wo));
        const auto h2 = rms(x, layer.mlp_norm);
        const auto f = ag::gelu(ag::add_row(ag::matmul(h2, layer.w1), layer.b1));
        x = ag::add(x, ag::add_row(ag::matmul(f, layer.w2), layer.b2));
    }
    out.logits = ag::matmul(rms(x, final_norm_), lm_head_);
    return out;
}

std::vector<int> ToyTransformer::generate_greedy(std::span<const int> prompt, int max_new_tokens) const {
    ag::NoGradGuard no_grad;
    std::vector<int> ids(prompt.begin(), prompt.end());
    std::vector<int> produced;
    const int eos = Tokenizer::id(SpecialToken::EndOfText);
    for (int step = 0; step < max_new_tokens; ++step) {
        if (static_cast<int>(ids.size()) >= config_.max_seq_len) break;
        const auto fwd = forward_with_internals(ids);
        Eigen::Index best = 0;
        fwd.logits.value().row(fwd.logits.rows() - 1).maxCoeff(&best);
        const int next = static_cast<int>(best);
        if (next == eos) break;
        produced.push_back(next);
        ids.push_back(next);
    }
    return produced;
}

std::vector<NamedParameter> ToyTransformer::parameters() const {
    std::vector<NamedParameter> out{{"tok_emb", tok_emb_}, {"pos_emb", pos_emb_}};
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        const auto& L = layers_[l];
        out.push_back({p + "attn_norm", L.attn_norm});
        out.push_back({p + "wq", L.wq});
        out.push_back({p + "wk", L.wk});
        out.push_back({p + "wv", L.wv});
        out.push_back({p + "wo", L.wo});
        out.push_back({p + "mlp_norm", L.mlp_norm});
        out.push_back({p + "w1", L.w1});
        out.push_back({p + "b1", L.b1});
        out.push_back({p + "w2", L.w2});
        out.push_back({p + "b2", L.b2});
    }
    out.push_back({"final_norm", final_norm_});
    out.push_back({"lm_head", lm_head_});
    return out;
}

void ToyTransformer::freeze() {
    for (auto& p : parameters()) {
        p.tensor.node()->requires_grad = false;
        p.tensor.node()->grad.resize(0, 0);
    }
    frozen_ = true;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

nlohmann::json tensor_entries(const std::vector<NamedParameter>& params, std::uint64_t& offset) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& p : params) {
        list.push_back({{"name", p.name}, {"rows", p.tensor.rows()}, {"cols", p.tensor.cols()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(p.tensor.rows() * p.tensor.cols()) * sizeof(double);
    }
    return list;
}

void write_row_major(std::ofstream& out, const ag::Matrix& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

ag::Matrix read_row_major(const std::vector<char>& payload, const nlohmann::json& entry) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto bytes = static_cast<std::uint64_t>(rows * cols) * sizeof(double);
    if (offset + bytes > payload.size()) {
        throw DistillError(ErrorCode::IoError, "checkpoint payload truncated at " + entry.at("name").get<std::string>());
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
    std::memcpy(rm.data(), payload.data() + offset, bytes);
    return rm;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ToyTransformer& model,
                     const std::vector<NamedParameter>& extra, const nlohmann::json& metadata) {
    const auto params = model.parameters();
    std::uint64_t offset = 0;
    nlohmann::json header;
    header["format_version"] = 1;
    header["config"] = model.config().to_json();
    header["tokenizer"] = model.tokenizer().to_json();
    header["frozen"] = model.frozen();
    header["tensors"] = tensor_entries(params, offset);
    header["extra_tensors"] = tensor_entries(extra, offset);
    header["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
    const std::string text = header.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DistillError(ErrorCode::IoError, "cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof(kMagic));
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& p : params) write_row_major(out, p.tensor.value());
        for (const auto& p : extra) write_row_major(out, p.tensor.value());
        if (!out) throw DistillError(ErrorCode::IoError, "short write on " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DistillError(ErrorCode::IoError, "cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DistillError(ErrorCode::IoError, path.string() + " is not a checkpoint");
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DistillError(ErrorCode::IoError, "truncated checkpoint header");
    const auto header = nlohmann::json::parse(text);
    std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    auto tokenizer = std::shared_ptr<const Tokenizer>(Tokenizer::from_json(header.at("tokenizer")));
    Checkpoint ck;
    ck.model = std::make_unique<ToyTransformer>(ToyTransformerConfig::from_json(header.at("config")), tokenizer);
    auto params = ck.model->parameters();
    const auto& entries = header.at("tensors");
    if (entries.size() != params.size()) throw DistillError(ErrorCode::IoError, "checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (entries[i].at("name").get<std::string>() != params[i].name) {
            throw DistillError(ErrorCode::IoError, "unexpected tensor " + entries[i].at("name").get<std::string>());
        }
        ag::Matrix m = read_row_major(payload, entries[i]);
        if (m.rows() != params[i].tensor.rows() || m.cols() != params[i].tensor.cols()) {
            throw DistillError(ErrorCode::IoError, "shape mismatch for " + params[i].name);
        }
        params[i].tensor.mutable_value() = std::move(m);
    }
    for (const auto& e : header.at("extra_tensors")) {
        ck.extra.emplace(e.at("name").get<std::string>(), read_row_major(payload, e));
    }
    if (header.at("frozen").get<bool>()) ck.model->freeze();
    ck.metadata = header.value("metadata", nlohmann::json::object());
    return ck;
}

}  // namespace distill
