// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "distill/alignment.hpp"
#include "distill/errors.hpp"
#include "distill/segmentation.hpp"
#include "distill/synthetic.hpp"
#include "distill/tokenizer.hpp"
#include "distill/training.hpp"

using namespace distill;

namespace {

struct Tokenizers {
    std::unique_ptr<Tokenizer> word;
    std::unique_ptr<Tokenizer> pair;
};

Tokenizers fixture_tokenizers(const std::vector<CoTExample>& corpus) {
    const auto texts = tokenizer_corpus(corpus);
    return {build_tokenizer(TokenizerKind::WordLevel, texts), build_tokenizer(TokenizerKind::CharPair, texts)};
}

std::vector<CoTExample> corpus_with_mailman() {
    SyntheticOptions opts;
    opts.count = 200;
    opts.seed = 3;
    auto data = generate_arithmetic(opts);
    data.push_back(mailman_example());
    return data;
}

}  // namespace

TEST(Tokenizer, OffsetsPointIntoText) {
    const auto data = corpus_with_mailman();
    const auto tok = fixture_tokenizers(data);
    for (const auto* t : {tok.word.get(), tok.pair.get()}) {
        const auto body = cot_text(data.back());
        std::size_t prev = 0;
        for (const auto& token : t->encode(body)) {
            ASSERT_LE(prev, token.begin);
            ASSERT_LT(token.begin, token.end);
            ASSERT_LE(token.end, body.size());
            prev = token.end;
        }
    }
}

TEST(Tokenizer, WordLevelKeepsNumbersWhole) {
    const auto tok = fixture_tokenizers(corpus_with_mailman());
    const std::string text = "16 × 17 = 272";
    const auto tokens = tok.word->encode(text);
    ASSERT_EQ(tokens.size(), 5u);
    EXPECT_EQ(tok.word->piece(tokens[4].id), "272");
    EXPECT_EQ(tok.word->decode(tok.word->encode_ids(text)), text);
}

TEST(Tokenizer, CharPairRoundTripsAndSplitsLongNumbers) {
    const auto tok = fixture_tokenizers(corpus_with_mailman());
    const auto body = cot_text(mailman_example());
    EXPECT_EQ(tok.pair->decode(tok.pair->encode_ids(body)), body);
    const auto at = body.find("1088");
    int pieces = 0;
    for (const auto& t : tok.pair->encode(body)) pieces += (t.end > at && t.begin < at + 4) ? 1 : 0;
    EXPECT_GE(pieces, 2);
}

TEST(Tokenizer, SpecialsAndUnknown) {
    const auto tok = fixture_tokenizers(corpus_with_mailman());
    EXPECT_EQ(tok.word->piece(Tokenizer::id(SpecialToken::Predict)), "[predict]");
    EXPECT_EQ(tok.word->piece(Tokenizer::id(SpecialToken::Explain)), "[explain]");
    EXPECT_EQ(tok.word->encode_ids("zyzzyva").front(), Tokenizer::id(SpecialToken::Unknown));
}

TEST(Tokenizer, JsonRoundTrip) {
    const auto tok = fixture_tokenizers(corpus_with_mailman());
    const auto body = cot_text(mailman_example());
    for (const auto* t : {tok.word.get(), tok.pair.get()}) {
        const auto back = Tokenizer::from_json(t->to_json());
        EXPECT_EQ(back->kind(), t->kind());
        EXPECT_EQ(back->vocab_size(), t->vocab_size());
        EXPECT_EQ(back->encode_ids(body), t->encode_ids(body));
    }
}

TEST(Alignment, SingleTokenIdentity) {
    StepSegmentation seg{{CharSpan{0, 2}}};
    CriticalWordList crit{{CriticalOccurrence{CharSpan{0, 2}, "42"}}};
    const auto a = align_tokens(seg, crit, {Token{5, 0, 2}}, "m");
    EXPECT_EQ(a.step_token_sets, (std::vector<IndexSet>{{0}}));
    EXPECT_EQ(a.critical_token_sets, (std::vector<IndexSet>{{0}}));
}

TEST(Alignment, MultiTokenCriticalWordMapsToAllPieces) {
    const auto data = corpus_with_mailman();
    const auto tok = fixture_tokenizers(data);
    const auto m = mailman_example();
    const auto body = cot_text(m);
    const auto tokens = tok.pair->encode(body);
    const auto a = build_alignment(m, CriticalMode::Math, *tok.pair, "student");
    // Oracle: every token overlapping the last "1088".
    const auto at = body.rfind("1088");
    IndexSet expected;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (tokens[t].begin < at + 4 && tokens[t].end > at) expected.push_back(static_cast<int>(t));
    }
    EXPECT_GE(expected.size(), 2u);
    EXPECT_EQ(a.critical_token_sets.back(), expected);
    for (std::size_t k = 1; k < expected.size(); ++k) EXPECT_EQ(expected[k], expected[k - 1] + 1);
}

TEST(Alignment, ShapesAgreeAcrossTokenizers) {
    const auto data = corpus_with_mailman();
    const auto tok = fixture_tokenizers(data);
    int differing_lengths = 0;
    for (const auto& ex : data) {
        const auto a = build_alignment(ex, CriticalMode::Math, *tok.word, "teacher");
        const auto b = build_alignment(ex, CriticalMode::Math, *tok.pair, "student");
        ASSERT_EQ(a.step_count(), b.step_count());
        ASSERT_EQ(a.critical_count(), b.critical_count());
        EXPECT_NO_THROW(check_alignment(a));
        EXPECT_NO_THROW(check_alignment(b));
        differing_lengths += a.sequence_length != b.sequence_length ? 1 : 0;
    }
    EXPECT_GT(differing_lengths, 0);
    const auto m = build_alignment(mailman_example(), CriticalMode::Math, *tok.pair, "student");
    EXPECT_EQ(m.step_count(), 5u);
    EXPECT_EQ(m.critical_count(), 13u);
}

TEST(Alignment, PartitionIsExhaustiveAndOrdered) {
    const auto data = corpus_with_mailman();
    const auto tok = fixture_tokenizers(data);
    for (const auto& ex : data) {
        const auto a = build_alignment(ex, CriticalMode::Math, *tok.pair, "student");
        int next = 0;
        for (const auto& set : a.step_token_sets) {
            ASSERT_FALSE(set.empty());
            for (int i : set) ASSERT_EQ(i, next++);
        }
        EXPECT_EQ(next, a.sequence_length);
    }
}

TEST(Alignment, SpaceLedTokenJoinsTheFollowingStep) {
    // Tokens: "A." " B." -> the second token starts with the space between steps.
    StepSegmentation seg{{CharSpan{0, 2}, CharSpan{3, 5}}};
    CriticalWordList crit{{CriticalOccurrence{CharSpan{3, 4}, "B"}}};
    const auto a = align_tokens(seg, crit, {Token{4, 0, 2}, Token{5, 2, 5}}, "m");
    EXPECT_EQ(a.step_token_sets, (std::vector<IndexSet>{{0}, {1}}));
    EXPECT_EQ(a.critical_token_sets, (std::vector<IndexSet>{{1}}));
}

TEST(Alignment, UncoveredOccurrenceIsAGap) {
    StepSegmentation seg{{CharSpan{0, 4}}};
    CriticalWordList crit{{CriticalOccurrence{CharSpan{2, 4}, "12"}}};
    try {
        align_tokens(seg, crit, {Token{4, 0, 1}}, "m");
        FAIL();
    } catch (const DistillError& e) {
        EXPECT_EQ(e.code(), ErrorCode::AlignmentGap);
    }
}
