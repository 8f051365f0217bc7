// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace distill::text {

/// Byte length of the UTF-8 sequence starting with `lead`; malformed lead bytes count as 1.
std::size_t utf8_length(unsigned char lead) noexcept;

bool is_space(char c) noexcept;
bool is_digit(char c) noexcept;
bool is_alpha(char c) noexcept;
bool is_word_char(char c) noexcept;

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s) noexcept;

/// End of the maximal numeric literal starting at `pos`, or `pos` when none starts there.
/// Accepts digit runs, comma thousands groups ("1,088") and a decimal part ("3.5", ".5").
/// Signs are not part of the literal.
std::size_t scan_number(std::string_view s, std::size_t pos) noexcept;

/// True when a numeric literal may start at `pos` (not glued to a preceding word or number).
bool number_may_start(std::string_view s, std::size_t pos) noexcept;

}  // namespace distill::text
