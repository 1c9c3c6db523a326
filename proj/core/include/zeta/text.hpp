#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace zeta {

// Canonical form used to detect duplicate observations: ASCII lowercase,
// hyphen runs between word characters rewritten, whitespace collapsed and
// trimmed, trailing . , ; : " stripped. Idempotent.
//
// A hyphen run that joins two single-character tokens is dropped so interval
// notation folds together ("r-r" -> "rr", "p-r" -> "pr"); any other hyphen
// run between word characters becomes one space ("st-segment" -> "st segment").
std::string normalize_text(std::string_view text);

std::string trim(std::string_view text);
std::vector<std::string> split(std::string_view text, char sep);

}  // namespace zeta
