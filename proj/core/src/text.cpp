#include "zeta/text.hpp"

#include <cctype>

namespace zeta {
namespace {

bool is_word(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || c == '_';
}

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

bool is_trailing_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '"';
}

// Length of the run of word characters ending just before `end`.
std::size_t word_run_before(std::string_view s, std::size_t end) {
  std::size_t n = 0;
  while (end > 0 && is_word(s[end - 1])) {
    --end;
    ++n;
  }
  return n;
}

std::size_t word_run_after(std::string_view s, std::size_t begin) {
  std::size_t n = 0;
  while (begin < s.size() && is_word(s[begin])) {
    ++begin;
    ++n;
  }
  return n;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string lowered(text);
  for (auto& c : lowered) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }

  std::string dehyphen;
  dehyphen.reserve(lowered.size());
  std::size_t i = 0;
  while (i < lowered.size()) {
    if (lowered[i] != '-') {
      dehyphen.push_back(lowered[i]);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < lowered.size() && lowered[j] == '-') ++j;
    const std::size_t left = word_run_before(lowered, i);
    const std::size_t right = word_run_after(lowered, j);
    if (left == 0 || right == 0) {
      dehyphen.append(lowered, i, j - i);
    } else if (left == 1 && right == 1) {
      // dropped
    } else {
      dehyphen.push_back(' ');
    }
    i = j;
  }

  std::string collapsed;
  collapsed.reserve(dehyphen.size());
  for (char c : dehyphen) {
    if (is_space(c)) {
      if (!collapsed.empty() && collapsed.back() != ' ') collapsed.push_back(' ');
    } else {
      collapsed.push_back(c);
    }
  }

  while (!collapsed.empty() &&
         (collapsed.back() == ' ' || is_trailing_punct(collapsed.back()))) {
    collapsed.pop_back();
  }
  return collapsed;
}

std::string trim(std::string_view text) {
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace zeta
