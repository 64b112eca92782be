#pragma once

#include <map>
#include <string>
#include <vector>

#include "fet/mlm_backend.hpp"

namespace fet::testing {

// Returns one preset mask distribution for every input. Label words listed
// in `pieces` are scored as several sub-tokens.
class FixedBackend final : public MlmBackend {
 public:
  std::vector<double> distribution;
  std::map<std::string, std::vector<std::string>> pieces;

  std::string kind() const override { return "fixed"; }
  std::size_t hidden_width() const override { return 1; }
  bool supports_token_registration() const override { return false; }

  EncoderState initial_state(const std::vector<std::string>& words, std::uint64_t) const override {
    EncoderState s;
    s.backend = kind();
    s.vocabulary.add_special(kMaskToken);
    for (const auto& w : words) s.vocabulary.add(w);
    return s;
  }
  std::vector<TokenId> register_special_tokens(EncoderState&, const std::vector<std::string>&,
                                               std::uint64_t) const override {
    return {};
  }
  std::vector<TokenId> label_word_tokens(const std::string& word, const EncoderState& state) const override {
    auto it = pieces.find(word);
    if (it == pieces.end()) return {state.vocabulary.id(word)};
    std::vector<TokenId> ids;
    for (const auto& p : it->second) ids.push_back(state.vocabulary.id(p));
    return ids;
  }
  MaskDistribution mask_distribution(const PromptedInput&, const EncoderState&) const override {
    return {distribution};
  }
  void backward_mask_distribution(const PromptedInput&, const EncoderState&, const MaskDistribution&,
                                  std::span<const double>, StateGradient&) const override {}
  std::vector<double> cls_embedding(const TypingExample&, const EncoderState&) const override { return {1.0}; }
  void backward_cls_embedding(const TypingExample&, const EncoderState&, std::span<const double>,
                              StateGradient&) const override {}
};

}  // namespace fet::testing
