// SPDX-License-Identifier: Apache-2.0
#include "distill/text_util.hpp"

#include <algorithm>
#include <cctype>

namespace distill::text {

std::size_t utf8_length(unsigned char lead) noexcept {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
}

bool is_space(char c) noexcept { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }
bool is_alpha(char c) noexcept { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_word_char(char c) noexcept { return is_alpha(c) || is_digit(c) || c == '_'; }

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) noexcept {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

bool number_may_start(std::string_view s, std::size_t pos) noexcept {
    if (pos >= s.size()) return false;
    if (pos > 0) {
        const char prev = s[pos - 1];
        if (is_word_char(prev)) return false;
        // "1.5" must be scanned from its first digit, not from ".5".
        if (prev == '.' && pos > 1 && is_digit(s[pos - 2])) return false;
    }
    if (is_digit(s[pos])) return true;
    return s[pos] == '.' && pos + 1 < s.size() && is_digit(s[pos + 1]);
}

std::size_t scan_number(std::string_view s, std::size_t pos) noexcept {
    if (!number_may_start(s, pos)) return pos;
    std::size_t i = pos;
    const auto digits = [&](std::size_t from) {
        std::size_t j = from;
        while (j < s.size() && is_digit(s[j])) ++j;
        return j;
    };

    if (s[i] != '.') {
        const std::size_t first_run_end = digits(i);
        const std::size_t first_run_len = first_run_end - i;
        i = first_run_end;
        // Thousands groups only follow a leading run of 1-3 digits.
        if (first_run_len <= 3) {
            while (i < s.size() && s[i] == ',') {
                const std::size_t group_end = digits(i + 1);
                if (group_end - (i + 1) != 3) break;
                i = group_end;
            }
        }
    }
    if (i + 1 < s.size() && s[i] == '.' && is_digit(s[i + 1])) {
        i = digits(i + 1);
    }
    // A literal glued to trailing letters ("3rd", "4x") is not numeric.
    if (i < s.size() && is_alpha(s[i])) return pos;
    return i;
}

}  // namespace distill::text
