#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fet/schema.hpp"

namespace fet {

// Half-open token range [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

// A sentence with one marked mention and its gold type.
struct TypingExample {
  std::string id;
  std::vector<std::string> tokens;
  TokenSpan mention;
  EntityType gold_type;

  std::vector<std::string> mention_tokens() const {
    return {tokens.begin() + static_cast<std::ptrdiff_t>(mention.begin),
            tokens.begin() + static_cast<std::ptrdiff_t>(mention.end)};
  }
  friend bool operator==(const TypingExample&, const TypingExample&) = default;
};

// Joins tokens with single spaces, omitting the space before punctuation.
std::string detokenize(const std::vector<std::string>& tokens);

}  // namespace fet
