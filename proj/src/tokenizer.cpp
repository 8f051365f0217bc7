// SPDX-License-Identifier: Apache-2.0
#include "distill/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "distill/errors.hpp"
#include "distill/text_util.hpp"

namespace distill {

namespace {

const std::vector<std::string> kSpecialPieces = {"<unk>", "<eos>", "[predict]", "[explain]"};

std::vector<std::string> with_specials(const std::vector<std::string>& pieces) {
    std::vector<std::string> out = kSpecialPieces;
    for (const auto& p : pieces) {
        if (std::find(kSpecialPieces.begin(), kSpecialPieces.end(), p) == kSpecialPieces.end()) {
            out.push_back(p);
        }
    }
    return out;
}

// Byte ranges of the UTF-8 code points of `text`.
std::vector<std::pair<std::size_t, std::size_t>> code_points(std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t len =
            std::min(text::utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
        out.emplace_back(i, i + len);
        i += len;
    }
    return out;
}

}  // namespace

std::string_view to_string(TokenizerKind kind) noexcept {
    return kind == TokenizerKind::WordLevel ? "word_level" : "char_bpe";
}

TokenizerKind parse_tokenizer_kind(std::string_view text) {
    if (text == "word_level") return TokenizerKind::WordLevel;
    if (text == "char_bpe") return TokenizerKind::CharPair;
    throw DistillError(ErrorCode::ConfigInvalid, "unknown tokenizer kind '" + std::string(text) + "'");
}

Tokenizer::Tokenizer(std::vector<std::string> pieces) : pieces_(with_specials(pieces)) {
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        index_.emplace(pieces_[i], static_cast<int>(i));
    }
}

int Tokenizer::lookup(std::string_view piece) const {
    auto it = index_.find(std::string(piece));
    return it == index_.end() ? id(SpecialToken::Unknown) : it->second;
}

std::vector<int> Tokenizer::encode_ids(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& t : encode(text)) ids.push_back(t.id);
    return ids;
}

nlohmann::json Tokenizer::to_json() const {
    std::vector<std::string> body(pieces_.begin() + static_cast<std::ptrdiff_t>(kSpecialPieces.size()),
                                  pieces_.end());
    return {{"kind", std::string(to_string(kind()))}, {"pieces", body}};
}

std::unique_ptr<Tokenizer> Tokenizer::from_json(const nlohmann::json& j) {
    const auto kind = parse_tokenizer_kind(j.at("kind").get<std::string>());
    auto pieces = j.at("pieces").get<std::vector<std::string>>();
    if (kind == TokenizerKind::WordLevel) return std::make_unique<WordLevelTokenizer>(std::move(pieces));
    return std::make_unique<CharPairTokenizer>(std::move(pieces));
}

// ---------------------------------------------------------------------------
// WordLevelTokenizer

WordLevelTokenizer::WordLevelTokenizer(std::vector<std::string> pieces) : Tokenizer(std::move(pieces)) {}

std::vector<std::pair<std::size_t, std::size_t>> WordLevelTokenizer::split(std::string_view text) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text::is_space(text[i])) {
            ++i;
            continue;
        }
        if (const std::size_t e = text::scan_number(text, i); e > i) {
            out.emplace_back(i, e);
            i = e;
            continue;
        }
        if (text::is_word_char(text[i])) {
            std::size_t e = i;
            while (e < text.size() &&
                   (text::is_word_char(text[e]) ||
                    (text[e] == '\'' && e + 1 < text.size() && text::is_alpha(text[e + 1])))) {
                ++e;
            }
            out.emplace_back(i, e);
            i = e;
            continue;
        }
        const std::size_t len =
            std::min(text::utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
        out.emplace_back(i, i + len);
        i += len;
    }
    return out;
}

WordLevelTokenizer WordLevelTokenizer::build(std::span<const std::string> corpus) {
    std::set<std::string> vocab;
    for (const auto& doc : corpus) {
        for (const auto& [b, e] : split(doc)) vocab.insert(doc.substr(b, e - b));
    }
    return WordLevelTokenizer(std::vector<std::string>(vocab.begin(), vocab.end()));
}

std::vector<Token> WordLevelTokenizer::encode(std::string_view text) const {
    std::vector<Token> out;
    for (const auto& [b, e] : split(text)) out.push_back({lookup(text.substr(b, e - b)), b, e});
    return out;
}

std::string WordLevelTokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id == Tokenizer::id(SpecialToken::EndOfText)) break;
        if (!out.empty()) out += ' ';
        out += piece(id);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CharPairTokenizer

CharPairTokenizer::CharPairTokenizer(std::vector<std::string> pieces) : Tokenizer(std::move(pieces)) {}

CharPairTokenizer CharPairTokenizer::build(std::span<const std::string> corpus, std::size_t max_pairs) {
    std::set<std::string> units;
    std::map<std::string, std::size_t> pair_counts;
    for (const auto& doc : corpus) {
        const auto cps = code_points(doc);
        for (std::size_t k = 0; k < cps.size(); ++k) {
            const auto [b, e] = cps[k];
            units.insert(doc.substr(b, e - b));
            if (k + 1 < cps.size() && !text::is_space(doc[cps[k + 1].first])) {
                ++pair_counts[doc.substr(b, cps[k + 1].second - b)];
            }
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(pair_counts.begin(), pair_counts.end());
    // Stable over the lexicographic map order, so ties resolve deterministically.
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> pieces(units.begin(), units.end());
    for (std::size_t k = 0; k < std::min(max_pairs, ranked.size()); ++k) pieces.push_back(ranked[k].first);
    return CharPairTokenizer(std::move(pieces));
}

std::vector<Token> CharPairTokenizer::encode(std::string_view text) const {
    const auto cps = code_points(text);
    std::vector<Token> out;
    std::size_t k = 0;
    while (k < cps.size()) {
        const auto [b, e] = cps[k];
        if (k + 1 < cps.size() && !text::is_space(text[cps[k + 1].first])) {
            const std::size_t pe = cps[k + 1].second;
            if (auto it = index_.find(std::string(text.substr(b, pe - b))); it != index_.end()) {
                out.push_back({it->second, b, pe});
                k += 2;
                continue;
            }
        }
        out.push_back({lookup(text.substr(b, e - b)), b, e});
        ++k;
    }
    return out;
}

std::string CharPairTokenizer::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id == Tokenizer::id(SpecialToken::EndOfText)) break;
        out += piece(id);
    }
    return out;
}

std::unique_ptr<Tokenizer> build_tokenizer(TokenizerKind kind, std::span<const std::string> corpus) {
    if (kind == TokenizerKind::WordLevel) {
        return std::make_unique<WordLevelTokenizer>(WordLevelTokenizer::build(corpus));
    }
    return std::make_unique<CharPairTokenizer>(CharPairTokenizer::build(corpus, kCharPairMerges));
}

}  // namespace distill
