#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fet/mlm_backend.hpp"
#include "fet/templates.hpp"
#include "fet/verbalizer.hpp"

namespace fet {

// Per-type scores, indexed like the verbalizer's schema.
struct TypeScores {
  std::vector<double> values;
  bool normalized = false;
};

// Resolves every word of V* to backend token ids and every type's label
// words to positions in V*. Multi-sub-token words score as the geometric mean
// of their sub-token probabilities (mean log-probability).
class LabelWordIndex {
 public:
  LabelWordIndex(const Verbalizer& verbalizer, const MlmBackend& backend, const EncoderState& state);

  std::size_t word_count() const noexcept { return word_tokens_.size(); }
  std::size_t type_count() const noexcept { return type_words_.size(); }
  const std::vector<TokenId>& word_tokens(std::size_t word) const { return word_tokens_.at(word); }
  // Positions in V* of the label words of one type, in verbalizer order.
  const std::vector<std::size_t>& type_words(std::size_t type) const { return type_words_.at(type); }

  // P(mask = w) for each w in V*, before any renormalization.
  std::vector<double> word_probabilities(const MaskDistribution& d) const;
  // Adds d(loss)/d(mask probabilities) to `grad_vocab` given d(loss)/d(word probabilities).
  void backward_word_probabilities(const MaskDistribution& d,
                                   std::span<const double> word_probs,
                                   std::span<const double> grad_words,
                                   std::span<double> grad_vocab) const;

 private:
  std::vector<std::vector<TokenId>> word_tokens_;
  std::vector<std::vector<std::size_t>> type_words_;
};

// The mask distribution restricted to V* and renormalized (P_{V*}).
std::vector<double> project_distribution(const MaskDistribution& d, const LabelWordIndex& index);

// score(y) = (1/m) sum_j lambda_j P(mask = w_j) over the raw mask probabilities.
TypeScores raw_type_scores(std::span<const double> word_probs,
                           const Verbalizer& verbalizer,
                           const LabelWordIndex& index);

// Raw scores divided by their sum. Throws DegenerateScoresError when every
// raw score is zero.
TypeScores normalize_scores(TypeScores raw);
TypeScores score_types(const MaskDistribution& d, const Verbalizer& verbalizer, const LabelWordIndex& index);

// First maximal index; schema order makes ties resolve to the smallest id.
std::size_t argmax_type(const TypeScores& scores);

std::size_t predict_index(const TypingExample& example,
                          const TemplateSpec& spec,
                          const Verbalizer& verbalizer,
                          const LabelWordIndex& index,
                          const MlmBackend& backend,
                          const EncoderState& state);
EntityType predict(const TypingExample& example,
                   const TemplateSpec& spec,
                   const Verbalizer& verbalizer,
                   const LabelWordIndex& index,
                   const MlmBackend& backend,
                   const EncoderState& state);

// Linear classifier over the [CLS] context vector: softmax(W h + b).
struct FineTuneHead {
  std::size_t type_count = 0;
  std::size_t width = 0;
  std::vector<double> weight;  // row-major type_count x width
  std::vector<double> bias;

  static FineTuneHead zeros(std::size_t type_count, std::size_t width);
  // Small seeded Gaussian weights, zero bias.
  static FineTuneHead random(std::size_t type_count, std::size_t width, std::uint64_t seed);

  void save(const std::filesystem::path& path) const;
  static FineTuneHead load(const std::filesystem::path& path);
  friend bool operator==(const FineTuneHead&, const FineTuneHead&) = default;
};

TypeScores ft_scores_from_embedding(std::span<const double> embedding, const FineTuneHead& head);
TypeScores ft_scores(const TypingExample& example,
                     const FineTuneHead& head,
                     const MlmBackend& backend,
                     const EncoderState& state);

}  // namespace fet
