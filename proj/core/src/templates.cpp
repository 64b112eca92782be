#include "fet/templates.hpp"

#include <algorithm>

#include "fet/errors.hpp"

namespace fet {
namespace {

bool is_punctuation(const std::string& token) {
  static const std::vector<std::string> kPunct = {".", ",", "!", "?", ";", ":", "'s", ")"};
  return std::find(kPunct.begin(), kPunct.end(), token) != kPunct.end();
}

bool ends_sentence(const std::string& token) {
  if (token.empty()) return false;
  const char last = token.back();
  return last == '.' || last == '!' || last == '?';
}

void check_mention(const TypingExample& x) {
  if (x.mention.empty() || x.mention.end > x.tokens.size()) {
    throw RenderError("example '" + x.id + "' has an empty or out-of-range mention");
  }
}

PromptedInput start_prompt(const TypingExample& x) {
  PromptedInput p;
  p.tokens = x.tokens;
  p.sentence_length = x.tokens.size();
  p.mention = x.mention;
  p.mention_tokens = x.mention_tokens();
  return p;
}

void append_mention_copy(PromptedInput& p) {
  p.mention_copy.begin = p.tokens.size();
  p.tokens.insert(p.tokens.end(), p.mention_tokens.begin(), p.mention_tokens.end());
  p.mention_copy.end = p.tokens.size();
}

void append_mask(PromptedInput& p) {
  p.mask_index = p.tokens.size();
  p.tokens.emplace_back(kMaskToken);
}

}  // namespace

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !is_punctuation(tokens[i])) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string PromptedInput::mention_surface() const {
  std::string out;
  for (std::size_t i = 0; i < mention_tokens.size(); ++i) {
    if (i) out += ' ';
    out += mention_tokens[i];
  }
  return out;
}

TemplateSpec TemplateSpec::soft(std::size_t length) {
  if (length < 1 || length > kMaxSoftLength) {
    throw ConfigError("soft template length must lie in [1, 16], got " + std::to_string(length));
  }
  return TemplateSpec(TemplateKind::soft, HardTemplate::t3, length);
}

TemplateSpec TemplateSpec::parse(std::string_view name, std::size_t soft_length) {
  if (name == "t1") return hard(HardTemplate::t1);
  if (name == "t2") return hard(HardTemplate::t2);
  if (name == "t3") return hard(HardTemplate::t3);
  if (name == "t3b") return hard(HardTemplate::t3b);
  if (name == "soft") return soft(soft_length);
  throw ConfigError("unknown template '" + std::string(name) + "' (expected t1, t2, t3, t3b or soft)");
}

HardTemplate TemplateSpec::hard_id() const {
  if (kind_ != TemplateKind::hard) throw ConfigError("soft template has no hard id");
  return hard_id_;
}

std::size_t TemplateSpec::soft_length() const {
  if (kind_ != TemplateKind::soft) throw ConfigError("hard template has no soft length");
  return soft_length_;
}

std::string TemplateSpec::name() const {
  if (kind_ == TemplateKind::soft) return "soft";
  switch (hard_id_) {
    case HardTemplate::t1: return "t1";
    case HardTemplate::t2: return "t2";
    case HardTemplate::t3: return "t3";
    case HardTemplate::t3b: return "t3b";
  }
  return "t3";
}

std::vector<std::string> TemplateSpec::special_token_names() const {
  if (kind_ != TemplateKind::soft) return {};
  std::vector<std::string> names{std::string(kPromptDelimiter)};
  for (std::size_t i = 1; i <= soft_length_; ++i) names.push_back("[P" + std::to_string(i) + "]");
  return names;
}

PromptedInput render_hard(const TemplateSpec& spec, const TypingExample& x) {
  if (spec.kind() != TemplateKind::hard) throw ConfigError("render_hard needs a hard template");
  check_mention(x);
  PromptedInput p = start_prompt(x);
  if (p.tokens.empty() || !ends_sentence(p.tokens.back())) p.tokens.emplace_back(".");

  const auto id = spec.hard_id();
  if (id == HardTemplate::t3 || id == HardTemplate::t3b) {
    p.tokens.insert(p.tokens.end(), {"In", "this", "sentence", ","});
  }
  append_mention_copy(p);
  p.tokens.emplace_back("is");
  if (id != HardTemplate::t1 && id != HardTemplate::t3b) p.tokens.emplace_back("a");
  append_mask(p);
  p.tokens.emplace_back(".");
  return p;
}

PromptedInput render_soft(const TemplateSpec& spec, const TypingExample& x) {
  if (spec.kind() != TemplateKind::soft) throw ConfigError("render_soft needs a soft template");
  check_mention(x);
  PromptedInput p = start_prompt(x);
  p.special_token_names = spec.special_token_names();
  p.tokens.push_back(p.special_token_names.front());
  append_mention_copy(p);
  p.tokens.insert(p.tokens.end(), p.special_token_names.begin() + 1, p.special_token_names.end());
  append_mask(p);
  return p;
}

PromptedInput render(const TemplateSpec& spec, const TypingExample& x) {
  return spec.kind() == TemplateKind::hard ? render_hard(spec, x) : render_soft(spec, x);
}

std::vector<std::string> template_words() {
  return {"In", "this", "sentence", ",", ".", "is", "a", std::string(kMaskToken), std::string(kHideToken)};
}

std::size_t count_occurrences(const std::vector<std::string>& haystack,
                              const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + needle.size() <= haystack.size();) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i))) {
      ++count;
      i += needle.size();
    } else {
      ++i;
    }
  }
  return count;
}

PromptedInput hide_mention(const PromptedInput& input) {
  if (input.hidden) return input;
  const auto& needle = input.mention_tokens;
  const std::size_t n = input.tokens.size();
  std::vector<std::size_t> new_index(n + 1, 0);
  PromptedInput out = input;
  out.tokens.clear();
  for (std::size_t i = 0; i < n;) {
    const bool match =
        !needle.empty() && i + needle.size() <= n &&
        std::equal(needle.begin(), needle.end(), input.tokens.begin() + static_cast<std::ptrdiff_t>(i));
    if (match) {
      for (std::size_t k = 0; k < needle.size(); ++k) new_index[i + k] = out.tokens.size();
      out.tokens.emplace_back(kHideToken);
      i += needle.size();
    } else {
      new_index[i] = out.tokens.size();
      out.tokens.push_back(input.tokens[i]);
      ++i;
    }
  }
  new_index[n] = out.tokens.size();
  out.mask_index = new_index[input.mask_index];
  out.mention = {new_index[input.mention.begin], new_index[input.mention.begin] + 1};
  out.mention_copy = {new_index[input.mention_copy.begin], new_index[input.mention_copy.begin] + 1};
  out.sentence_length = input.sentence_length == 0 ? 0 : new_index[input.sentence_length - 1] + 1;
  out.hidden = true;
  return out;
}

PromptedInput apply_hiding(const PromptedInput& input, double alpha, std::mt19937_64& rng) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("hiding probability must lie in [0, 1]");
  // one uniform draw per call keeps the random stream independent of alpha
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < alpha) return hide_mention(input);
  return input;
}

}  // namespace fet
