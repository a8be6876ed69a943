#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dgen {

// Canonical form used for every key/distractor comparison: Unicode NFC,
// case-folded, whitespace runs collapsed to one space, ends trimmed. Math
// markup is left untouched.
std::string normalize_text(std::string_view raw);

bool normalized_equal(std::string_view a, std::string_view b);

// ASCII whitespace trim; leaves interior untouched.
std::string_view trim(std::string_view s);

std::vector<std::string> split_lines(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with_icase(std::string_view s, std::string_view prefix);

}  // namespace dgen
