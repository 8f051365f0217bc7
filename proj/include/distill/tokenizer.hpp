// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace distill {

enum class TokenizerKind { WordLevel, CharPair };

std::string_view to_string(TokenizerKind kind) noexcept;
TokenizerKind parse_tokenizer_kind(std::string_view text);

/// A token id plus the byte range of the source text it was produced from.
struct Token {
    int id = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const Token&) const = default;
};

enum class SpecialToken : int { Unknown = 0, EndOfText = 1, Predict = 2, Explain = 3 };

class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    virtual TokenizerKind kind() const noexcept = 0;
    virtual std::vector<Token> encode(std::string_view text) const = 0;
    virtual std::string decode(std::span<const int> ids) const = 0;

    std::vector<int> encode_ids(std::string_view text) const;
    int vocab_size() const noexcept { return static_cast<int>(pieces_.size()); }
    const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
    static constexpr int id(SpecialToken t) noexcept { return static_cast<int>(t); }

    nlohmann::json to_json() const;
    static std::unique_ptr<Tokenizer> from_json(const nlohmann::json& j);

protected:
    explicit Tokenizer(std::vector<std::string> pieces);
    int lookup(std::string_view piece) const;

    std::vector<std::string> pieces_;
    std::unordered_map<std::string, int> index_;
};

/// Whole words, whole numeric literals ("1,088", "3.5") and single punctuation marks.
class WordLevelTokenizer final : public Tokenizer {
public:
    explicit WordLevelTokenizer(std::vector<std::string> pieces);
    static WordLevelTokenizer build(std::span<const std::string> corpus);

    TokenizerKind kind() const noexcept override { return TokenizerKind::WordLevel; }
    std::vector<Token> encode(std::string_view text) const override;
    std::string decode(std::span<const int> ids) const override;

    /// Pre-tokenizer: byte spans of words, numbers and symbols, whitespace dropped.
    static std::vector<std::pair<std::size_t, std::size_t>> split(std::string_view text);
};

/// Merge budget of build_tokenizer for the character-pair kind.
inline constexpr std::size_t kCharPairMerges = 160;

/// Characters plus the most frequent character pairs. A pair never ends in
/// whitespace, so a space can only lead a token (" 4", " a"). Long words
/// still become many tokens.
class CharPairTokenizer final : public Tokenizer {
public:
    explicit CharPairTokenizer(std::vector<std::string> pieces);
    static CharPairTokenizer build(std::span<const std::string> corpus, std::size_t max_pairs);

    TokenizerKind kind() const noexcept override { return TokenizerKind::CharPair; }
    std::vector<Token> encode(std::string_view text) const override;
    std::string decode(std::span<const int> ids) const override;
};

std::unique_ptr<Tokenizer> build_tokenizer(TokenizerKind kind, std::span<const std::string> corpus);

}  // namespace distill
