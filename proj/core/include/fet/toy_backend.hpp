#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fet/mlm_backend.hpp"

namespace fet {

// One entry of the toy backend's fixed knowledge: when the trigger matches,
// the listed words receive the given probability mass and the remainder is
// spread uniformly over the vocabulary.
struct ToyRule {
  enum class Trigger { mention, keyword };

  Trigger trigger = Trigger::keyword;
  std::string key;  // mention surface (space-joined tokens) or a single token
  std::vector<std::pair<std::string, double>> masses;
};

struct ToyBackendConfig {
  std::size_t hidden_width = 32;
  double smoothing = 1e-4;
  double embedding_scale = 0.5;
  std::vector<ToyRule> rules;
  std::vector<std::string> vocabulary;  // extra words always present

  // {"hidden_width": 32, "smoothing": 1e-4, "vocabulary": [...],
  //  "rules": [{"mention": "New York", "words": {"city": 0.9}},
  //            {"keyword": "summit", "words": {"mountain": 0.5}}]}
  static ToyBackendConfig from_json(std::string_view text);
  static ToyBackendConfig load(const std::filesystem::path& path);
  std::string to_json() const;
};

// Deterministic CPU masked LM used for tests and desk-scale experiments.
//
// Tokens are pooled into h = sum_i w_i E[t_i] with w_i = (1 + cos(i) / 4) / n.
// The mask distribution is softmax(log q + O h + b), where q is the smoothed
// average of all matching rule distributions (uniform when none match).
// With O = 0 and b = 0, as in a fresh state, the output is q itself.
// The [CLS] embedding pools "[CLS] ... [E] mention [/E] ... [SEP]" with the
// same weights.
class ToyBackend final : public MlmBackend {
 public:
  explicit ToyBackend(ToyBackendConfig config);

  std::string kind() const override { return "toy"; }
  std::size_t hidden_width() const override { return config_.hidden_width; }
  const ToyBackendConfig& config() const noexcept { return config_; }

  EncoderState initial_state(const std::vector<std::string>& words,
                             std::uint64_t seed) const override;
  std::vector<TokenId> register_special_tokens(EncoderState& state,
                                               const std::vector<std::string>& names,
                                               std::uint64_t seed) const override;
  std::vector<TokenId> label_word_tokens(const std::string& word,
                                         const EncoderState& state) const override;

  MaskDistribution mask_distribution(const PromptedInput& input,
                                     const EncoderState& state) const override;
  void backward_mask_distribution(const PromptedInput& input,
                                  const EncoderState& state,
                                  const MaskDistribution& forward,
                                  std::span<const double> grad_probabilities,
                                  StateGradient& grad) const override;

  std::vector<double> cls_embedding(const TypingExample& example,
                                    const EncoderState& state) const override;
  void backward_cls_embedding(const TypingExample& example,
                              const EncoderState& state,
                              std::span<const double> grad_embedding,
                              StateGradient& grad) const override;

  // The fixed prior q for an input, before the learned term is added.
  std::vector<double> prior(const PromptedInput& input, const EncoderState& state) const;

 private:
  std::vector<TokenId> encode(const std::vector<std::string>& tokens, const EncoderState& state) const;
  std::vector<double> pool(const std::vector<TokenId>& ids, const EncoderState& state) const;
  void backward_pool(const std::vector<TokenId>& ids, std::span<const double> grad_h,
                     StateGradient& grad) const;
  std::vector<std::string> cls_tokens(const TypingExample& example) const;

  ToyBackendConfig config_;
};

}  // namespace fet
