#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fet/example.hpp"
#include "fet/templates.hpp"

namespace fet {

using TokenId = std::int32_t;

// Reserved tokens every backend vocabulary carries.
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMentionOpen = "[E]";
inline constexpr std::string_view kMentionClose = "[/E]";

class Vocabulary {
 public:
  // Returns the existing id when the word is already present.
  TokenId add(std::string_view word);
  TokenId add_special(std::string_view word);

  std::optional<TokenId> find(std::string_view word) const;
  // Throws EncodeError for unknown words.
  TokenId id(std::string_view word) const;
  const std::string& word(TokenId id) const { return words_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view word) const { return find(word).has_value(); }
  bool is_special(TokenId id) const;

  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::vector<TokenId>& special_ids() const noexcept { return specials_; }
  TokenId mask_id() const { return id(kMaskToken); }

  // FNV-1a over the ordered word list and special markers.
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.specials_ == b.specials_;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<TokenId> specials_;
};

// Probabilities over the full backend vocabulary at the mask position.
struct MaskDistribution {
  std::vector<double> probabilities;

  std::size_t size() const noexcept { return probabilities.size(); }
  double operator[](std::size_t i) const { return probabilities[i]; }
};

struct ParameterBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  friend bool operator==(const ParameterBlock&, const ParameterBlock&) = default;
};

// Trainable parameters of a backend (backbone and prompt/special-token
// embeddings alike) together with the vocabulary they are indexed by.
// Persisted as a directory holding meta.json, vocab.json and weights.bin;
// reloading is bit-exact.
class EncoderState {
 public:
  std::string backend;
  std::string version;
  Vocabulary vocabulary;
  std::vector<ParameterBlock> blocks;

  ParameterBlock& block(std::string_view name);
  const ParameterBlock& block(std::string_view name) const;
  std::size_t parameter_count() const;

  void save(const std::filesystem::path& dir) const;
  static EncoderState load(const std::filesystem::path& dir);

  friend bool operator==(const EncoderState&, const EncoderState&) = default;
};

// Gradient buffers shaped like EncoderState::blocks.
struct StateGradient {
  std::vector<std::vector<double>> blocks;

  static StateGradient zeros_like(const EncoderState& state);
  void clear();
  double squared_norm() const;
};

// Contract for masked-language-model engines. Inference only reads the
// state; training code calls the backward_* methods to accumulate gradients.
class MlmBackend {
 public:
  virtual ~MlmBackend() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t hidden_width() const = 0;
  virtual bool supports_token_registration() const { return true; }

  // Fresh state whose vocabulary covers `words`, the reserved tokens and
  // anything the backend itself needs.
  virtual EncoderState initial_state(const std::vector<std::string>& words,
                                     std::uint64_t seed) const = 0;

  // Appends new special tokens with seeded random embeddings. Registering an
  // existing special token returns its id.
  virtual std::vector<TokenId> register_special_tokens(EncoderState& state,
                                                       const std::vector<std::string>& names,
                                                       std::uint64_t seed) const = 0;

  // Token ids a label word is scored with; more than one id means the word
  // is split into sub-tokens.
  virtual std::vector<TokenId> label_word_tokens(const std::string& word,
                                                 const EncoderState& state) const = 0;

  virtual MaskDistribution mask_distribution(const PromptedInput& input,
                                             const EncoderState& state) const = 0;

  // Accumulates d(loss)/d(parameters) given d(loss)/d(probabilities).
  virtual void backward_mask_distribution(const PromptedInput& input,
                                          const EncoderState& state,
                                          const MaskDistribution& forward,
                                          std::span<const double> grad_probabilities,
                                          StateGradient& grad) const = 0;

  // Context vector of the mention-marked sentence.
  virtual std::vector<double> cls_embedding(const TypingExample& example,
                                            const EncoderState& state) const = 0;

  virtual void backward_cls_embedding(const TypingExample& example,
                                      const EncoderState& state,
                                      std::span<const double> grad_embedding,
                                      StateGradient& grad) const = 0;
};

// Registers `names` unless they are all present already. Throws
// CapabilityError when the backend cannot add tokens.
void ensure_special_tokens(const MlmBackend& backend,
                           EncoderState& state,
                           const std::vector<std::string>& names,
                           std::uint64_t seed);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 14695981039346656037ULL);

}  // namespace fet
