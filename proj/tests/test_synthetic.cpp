// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <regex>

#include "distill/cot_example.hpp"
#include "distill/segmentation.hpp"
#include "distill/synthetic.hpp"

using namespace distill;

TEST(Synthetic, SeededAndValid) {
    SyntheticOptions o;
    o.count = 50;
    o.seed = 5;
    const auto a = generate_arithmetic(o);
    const auto b = generate_arithmetic(o);
    ASSERT_EQ(a.size(), 50u);
    EXPECT_EQ(a, b);
    o.seed = 6;
    EXPECT_NE(a, generate_arithmetic(o));
    for (const auto& e : a) EXPECT_NO_THROW(validate(e, CriticalMode::Math));
}

TEST(Synthetic, AnswersFollowFromTheRationale) {
    // The last "x op y = z" of the rationale must hold and equal the answer.
    const std::regex eq(R"((\d+) ([+-]) (\d+) = (\d+))");
    for (int ops : {1, 2}) {
        SyntheticOptions o;
        o.count = 100;
        o.operations = ops;
        o.max_operand = 10;
        o.seed = 8;
        for (const auto& e : generate_arithmetic(o)) {
            std::string last;
            for (auto it = std::sregex_iterator(e.rationale.begin(), e.rationale.end(), eq); it != std::sregex_iterator(); ++it) {
                const auto& m = *it;
                const int x = std::stoi(m[1]), y = std::stoi(m[3]), z = std::stoi(m[4]);
                EXPECT_EQ(m[2] == "+" ? x + y : x - y, z) << e.rationale;
                EXPECT_LT(x, 10 * ops + 10);
                EXPECT_GE(z, 0);
                last = m[4];
            }
            EXPECT_EQ(last, e.answer) << e.rationale;
            EXPECT_EQ(segment_steps(e.rationale).step_count(), 3u);
        }
    }
}

TEST(Synthetic, MailmanExample) {
    const auto e = mailman_example();
    EXPECT_EQ(e.answer, "1088");
    EXPECT_EQ(segment_steps(cot_text(e)).step_count(), 5u);
}
