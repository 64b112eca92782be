#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fet/example.hpp"
#include "fet/mlm_backend.hpp"
#include "fet/templates.hpp"
#include "fet/typing_model.hpp"
#include "fet/verbalizer.hpp"

namespace fet {

// A sentence whose mention is linked to a knowledge-base entity.
struct LinkedSentence {
  std::vector<std::string> tokens;
  TokenSpan mention;
  std::string entity_id;  // may be empty, in which case the surface identifies the entity
  std::string surface;

  // Identity used for grouping positives.
  const std::string& key() const { return entity_id.empty() ? surface : entity_id; }
  void validate() const;
};

// One JSON object per line: {"tokens": [...], "mention": [begin, end],
// "entity_id": "Q90", "surface": "Paris"}. "surface" defaults to the span
// text and "entity_id" may be omitted.
std::vector<LinkedSentence> parse_linked_corpus(std::string_view text);
std::vector<LinkedSentence> load_linked_corpus(const std::filesystem::path& path);

// Entity id or surface -> coarse type. Lookup tries the entity id first.
class TypeDictionary {
 public:
  TypeDictionary() = default;
  explicit TypeDictionary(std::map<std::string, std::string> entries);

  // A flat JSON object {"Q90": "location", "Paris": "location", ...}.
  static TypeDictionary from_json(std::string_view text);
  static TypeDictionary load(const std::filesystem::path& path);

  std::optional<std::string> lookup(const LinkedSentence& sentence) const;
  std::optional<std::string> lookup(const std::string& key) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, std::string> entries_;
};

struct SelfSupConfig {
  std::size_t c = 1000;  // pairs per polarity
  double alpha = 0.4;
  double gamma = 0.5;
  std::uint64_t seed = 0;

  double learning_rate = 5e-5;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0 means no limit
  double weight_decay = 0.01;
  double clip_norm = 1.0;

  void validate() const;
};

enum class Polarity { positive, negative };
std::string_view polarity_name(Polarity p);
Polarity parse_polarity(std::string_view name);

struct PairExample {
  PromptedInput a;
  PromptedInput b;
  Polarity polarity = Polarity::positive;

  friend bool operator==(const PairExample&, const PairExample&) = default;
};

struct PairDataset {
  std::vector<PairExample> pairs;

  std::size_t count(Polarity p) const;
  std::size_t size() const noexcept { return pairs.size(); }
  friend bool operator==(const PairDataset&, const PairDataset&) = default;
};

// Number of distinct pairs the corpus can supply for each polarity.
struct PairCapacity {
  std::size_t positive = 0;
  std::size_t negative = 0;
};
PairCapacity pair_capacity(const std::vector<LinkedSentence>& corpus, const TypeDictionary& dict);

// Samples exactly cfg.c distinct positive pairs (same entity, different
// sentences) and cfg.c distinct negative pairs (different entities with
// different surfaces whose dictionary types are both known and differ).
// Negatives pick two distinct entities uniformly, then one sentence of each,
// and reject candidates that fail the dictionary filter. Both sides are
// rendered with T3 and hidden independently with probability alpha.
// Positives come first in the output. Throws SamplingError with the
// achievable counts when the corpus is too small.
PairDataset generate_pairs(const std::vector<LinkedSentence>& corpus,
                           const TypeDictionary& dict,
                           const SelfSupConfig& cfg);

// Splits the corpus by entity into `shards` parts (hash of the entity key),
// runs generate_pairs on shard i with seed cfg.seed + i and an even share of
// cfg.c (the first c % shards shards take one extra pair), and concatenates
// the outputs in shard order. The result does not depend on `parallel`.
PairDataset generate_pairs_sharded(const std::vector<LinkedSentence>& corpus,
                                   const TypeDictionary& dict,
                                   const SelfSupConfig& cfg,
                                   std::size_t shards,
                                   bool parallel = true);

// JSONL with a_text, a_mask_index, b_text, b_mask_index, polarity, hidden_a,
// hidden_b, plus span fields that let the inputs be rebuilt exactly. Texts
// are the rendered tokens joined by single spaces.
std::string pairs_to_jsonl(const PairDataset& pairs);
PairDataset parse_pairs(std::string_view text);
void save_pairs(const PairDataset& pairs, const std::filesystem::path& path);
PairDataset load_pairs(const std::filesystem::path& path);

// Jensen-Shannon divergence with natural logarithm, in [0, ln 2].
double js_similarity(std::span<const double> p, std::span<const double> q);
// Adds d(js)/dp * scale to grad_p and d(js)/dq * scale to grad_q.
void js_similarity_backward(std::span<const double> p, std::span<const double> q, double scale,
                            std::span<double> grad_p, std::span<double> grad_q);

inline constexpr double kNegativeClamp = 1e-8;

// mean_pos[-log(1 - s)] + gamma * mean_neg[-log(max(s, 1e-8))], where s is
// the JS divergence of the two sides' mask distributions projected onto V*.
// Either batch may be empty.
double selfsup_loss(std::span<const PairExample> positives,
                    std::span<const PairExample> negatives,
                    const LabelWordIndex& index,
                    const MlmBackend& backend,
                    const EncoderState& state,
                    double gamma,
                    StateGradient* grad = nullptr);

struct PretrainResult {
  EncoderState state;
  std::vector<double> step_losses;
};

// Optimizes the encoder with AdamW on shuffled mini-batches of pairs. The
// verbalizer only defines V*; its weights stay fixed.
PretrainResult pretrain(const SelfSupConfig& cfg,
                        const PairDataset& pairs,
                        const Verbalizer& verbalizer,
                        const MlmBackend& backend,
                        EncoderState state);

}  // namespace fet
