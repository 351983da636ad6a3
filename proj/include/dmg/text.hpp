#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dmg {

using TokenSequence = std::vector<std::string>;

// Lowercase tokens separated by any non-alphanumeric byte. Never yields an
// empty token.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Maximal decimal digit runs, in order of appearance.
inline std::vector<std::uint64_t> extract_integers(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    std::uint64_t value = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      value = value * 10 + static_cast<std::uint64_t>(text[i] - '0');
      ++i;
    }
    out.push_back(value);
  }
  return out;
}

}  // namespace dmg
