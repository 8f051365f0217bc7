// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "distill/cot_example.hpp"

namespace distill {

/// Templated arithmetic word problems with programmatic rationales. Every
/// question also mentions a distractor quantity that the answer ignores.
struct SyntheticOptions {
    int count = 100;
    int max_operand = 20;  // operands drawn from [1, max_operand)
    int operations = 1;    // 1 = single step, 2 = add then subtract
    std::uint64_t seed = 0;
};

std::vector<CoTExample> generate_arithmetic(const SyntheticOptions& options);

/// The worked mailman example (5 steps, 13 numbers) used throughout the tests.
CoTExample mailman_example();

}  // namespace distill
