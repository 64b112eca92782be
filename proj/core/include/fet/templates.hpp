#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fet/example.hpp"

namespace fet {

inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kHideToken = "[Hide]";
inline constexpr std::string_view kPromptDelimiter = "[P]";

enum class TemplateKind { hard, soft };

// Hard templates, appended after the sentence:
//   t1:  "<mention> is [MASK]."
//   t2:  "<mention> is a [MASK]."
//   t3:  "In this sentence, <mention> is a [MASK]."
//   t3b: "In this sentence, <mention> is [MASK]."
enum class HardTemplate { t1, t2, t3, t3b };

class TemplateSpec {
 public:
  static constexpr std::size_t kMaxSoftLength = 16;

  static TemplateSpec hard(HardTemplate id) { return TemplateSpec(TemplateKind::hard, id, 0); }
  // Throws ConfigError unless 1 <= length <= 16.
  static TemplateSpec soft(std::size_t length);
  // "t1", "t2", "t3", "t3b" or "soft" (the latter uses soft_length).
  static TemplateSpec parse(std::string_view name, std::size_t soft_length = 2);

  TemplateKind kind() const noexcept { return kind_; }
  HardTemplate hard_id() const;
  std::size_t soft_length() const;
  std::string name() const;

  // [P], [P1] ... [Pl] for soft templates, empty for hard ones.
  std::vector<std::string> special_token_names() const;

  friend bool operator==(const TemplateSpec&, const TemplateSpec&) = default;

 private:
  TemplateSpec(TemplateKind kind, HardTemplate id, std::size_t length)
      : kind_(kind), hard_id_(id), soft_length_(length) {}

  TemplateKind kind_;
  HardTemplate hard_id_;
  std::size_t soft_length_;
};

// A template-rendered input with exactly one mask slot after the sentence.
struct PromptedInput {
  std::vector<std::string> tokens;
  std::size_t sentence_length = 0;  // tokens[0, sentence_length) is the source sentence
  TokenSpan mention;                // marked mention inside the sentence
  TokenSpan mention_copy;           // copy of the mention inside the template
  std::size_t mask_index = 0;
  std::vector<std::string> special_token_names;
  bool hidden = false;

  // The mention tokens as they appeared before any hiding.
  std::vector<std::string> mention_tokens;

  std::string text() const { return detokenize(tokens); }
  std::string mention_surface() const;

  friend bool operator==(const PromptedInput&, const PromptedInput&) = default;
};

PromptedInput render_hard(const TemplateSpec& spec, const TypingExample& example);
PromptedInput render_soft(const TemplateSpec& spec, const TypingExample& example);
PromptedInput render(const TemplateSpec& spec, const TypingExample& example);

// With probability alpha, replaces every occurrence of the mention token
// sequence (sentence and template copy) by a single [Hide] token.
PromptedInput apply_hiding(const PromptedInput& input, double alpha, std::mt19937_64& rng);

// Unconditional form of apply_hiding.
PromptedInput hide_mention(const PromptedInput& input);

// Fixed words used by the hard templates plus the mask and hide symbols.
std::vector<std::string> template_words();

// Number of non-overlapping occurrences of `needle` in `haystack`.
std::size_t count_occurrences(const std::vector<std::string>& haystack,
                              const std::vector<std::string>& needle);

}  // namespace fet
