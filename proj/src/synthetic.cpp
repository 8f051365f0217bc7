// SPDX-License-Identifier: Apache-2.0
#include "distill/synthetic.hpp"

#include <array>
#include <random>
#include <string>

namespace distill {

namespace {

constexpr std::array<const char*, 10> kNames = {"Tom", "Ann", "Sam", "Mia", "Ben", "Lily", "Max", "Zoe", "Leo", "Ivy"};
constexpr std::array<const char*, 10> kItems = {"apples", "pens", "books", "cards", "shells",
                                                "stamps", "marbles", "cookies", "toys", "coins"};

struct Draw {
    std::string name, friend_name, item, other;
    int a = 0, b = 0, e = 0, distractor = 0;
};

std::string str(int v) { return std::to_string(v); }

CoTExample make(std::string q, std::string r, int answer) {
    CoTExample ex;
    ex.question = std::move(q);
    ex.rationale = std::move(r);
    ex.answer = str(answer);
    ex.gold_answer = ex.answer;
    return ex;
}

CoTExample single_step(const Draw& d, int template_id) {
    const auto& N = d.name;
    const auto& X = d.item;
    const auto& Y = d.other;
    switch (template_id) {
        case 0:
            return make(N + " has " + str(d.a) + " " + X + " and " + str(d.distractor) + " " + Y + ". " + N +
                            " buys " + str(d.b) + " more " + X + ". How many " + X + " does " + N + " have now?",
                        N + " starts with " + str(d.a) + " " + X + ". " + N + " buys " + str(d.b) + " more " + X +
                            ". So " + N + " has " + str(d.a) + " + " + str(d.b) + " = " + str(d.a + d.b) + " " + X + ".",
                        d.a + d.b);
        case 1:
            return make("There are " + str(d.a) + " " + X + " in a box and " + str(d.distractor) + " " + Y +
                            " on a desk. " + N + " puts " + str(d.b) + " more " + X + " in the box. How many " + X +
                            " are in the box?",
                        "The box has " + str(d.a) + " " + X + ". " + N + " adds " + str(d.b) + " " + X +
                            ". So the box has " + str(d.a) + " + " + str(d.b) + " = " + str(d.a + d.b) + " " + X + ".",
                        d.a + d.b);
        case 2:
            return make(N + " has " + str(d.a) + " " + X + " and " + str(d.distractor) + " " + Y + ". " + N +
                            " gives " + str(d.b) + " " + X + " to " + d.friend_name + ". How many " + X + " does " +
                            N + " have left?",
                        N + " starts with " + str(d.a) + " " + X + ". " + N + " gives away " + str(d.b) + " " + X +
                            ". So " + N + " has " + str(d.a) + " - " + str(d.b) + " = " + str(d.a - d.b) + " " + X +
                            " left.",
                        d.a - d.b);
        default:
            return make("A shop has " + str(d.a) + " " + X + " and " + str(d.distractor) + " " + Y + ". It sells " +
                            str(d.b) + " " + X + ". How many " + X + " are left?",
                        "The shop has " + str(d.a) + " " + X + ". It sells " + str(d.b) + " " + X + ". So " +
                            str(d.a) + " - " + str(d.b) + " = " + str(d.a - d.b) + " " + X + " are left.",
                        d.a - d.b);
    }
}

CoTExample two_step(const Draw& d) {
    const auto& N = d.name;
    const auto& X = d.item;
    const int s = d.a + d.b;
    return make(N + " has " + str(d.a) + " " + X + " and " + str(d.distractor) + " " + d.other + ". " + N +
                    " buys " + str(d.b) + " more " + X + ". Then " + N + " gives " + str(d.e) + " " + X + " to " +
                    d.friend_name + ". How many " + X + " does " + N + " have now?",
                N + " starts with " + str(d.a) + " " + X + ". After buying " + str(d.b) + " more, " + N + " has " +
                    str(d.a) + " + " + str(d.b) + " = " + str(s) + " " + X + ". After giving away " + str(d.e) +
                    ", " + N + " has " + str(s) + " - " + str(d.e) + " = " + str(s - d.e) + " " + X + ".",
                s - d.e);
}

}  // namespace

std::vector<CoTExample> generate_arithmetic(const SyntheticOptions& options) {
    std::mt19937_64 rng(options.seed);
    const auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    std::vector<CoTExample> out;
    out.reserve(static_cast<std::size_t>(options.count));
    const int hi = options.max_operand - 1;
    for (int i = 0; i < options.count; ++i) {
        Draw d;
        const int n = pick(0, static_cast<int>(kNames.size()) - 1);
        d.name = kNames[static_cast<std::size_t>(n)];
        d.friend_name = kNames[static_cast<std::size_t>((n + pick(1, static_cast<int>(kNames.size()) - 1)) %
                                                       static_cast<int>(kNames.size()))];
        const int it = pick(0, static_cast<int>(kItems.size()) - 1);
        d.item = kItems[static_cast<std::size_t>(it)];
        d.other = kItems[static_cast<std::size_t>((it + pick(1, static_cast<int>(kItems.size()) - 1)) %
                                                 static_cast<int>(kItems.size()))];
        d.distractor = pick(1, hi);
        if (options.operations >= 2) {
            d.a = pick(1, hi);
            d.b = pick(1, hi);
            d.e = pick(1, d.a + d.b - 1 > 0 ? std::min(d.a + d.b - 1, hi) : 1);
            out.push_back(two_step(d));
            continue;
        }
        const int template_id = pick(0, 3);
        if (template_id >= 2) {
            d.a = pick(2, hi);
            d.b = pick(1, d.a - 1);
        } else {
            d.a = pick(1, hi);
            d.b = pick(1, hi);
        }
        out.push_back(single_step(d, template_id));
    }
    return out;
}

CoTExample mailman_example() {
    CoTExample ex;
    ex.question =
        "A mailman is tasked with delivering 4 pieces of junk mail to each house in 16 blocks, with each block "
        "containing 17 houses. How many pieces of junk mail should he deliver in total?";
    ex.rationale =
        "The mailman delivers 4 pieces of junk mail to each house in 16 blocks, with each block containing 17 "
        "houses. Therefore, the total number of houses is 16 × 17 = 272. Since the mailman delivers 4 pieces "
        "of junk mail to each house, the total number of junk mail pieces is 272 × 4 = 1088.";
    ex.answer = "1088";
    ex.gold_answer = "1088";
    return ex;
}

}  // namespace distill
