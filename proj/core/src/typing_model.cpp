#include "fet/typing_model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "fet/errors.hpp"
#include "json.hpp"

namespace fet {

LabelWordIndex::LabelWordIndex(const Verbalizer& verbalizer, const MlmBackend& backend,
                               const EncoderState& state) {
  const auto& words = verbalizer.union_vocabulary();
  if (words.empty()) throw ConfigError("verbalizer union vocabulary is empty");
  word_tokens_.reserve(words.size());
  for (const auto& w : words) {
    auto ids = backend.label_word_tokens(w, state);
    if (ids.empty()) throw EncodeError("label word '" + w + "' maps to no tokens");
    word_tokens_.push_back(std::move(ids));
  }
  type_words_.resize(verbalizer.type_count());
  for (std::size_t t = 0; t < verbalizer.type_count(); ++t) {
    for (const auto& lw : verbalizer.words(t)) type_words_[t].push_back(*verbalizer.union_index(lw.word));
  }
}

std::vector<double> LabelWordIndex::word_probabilities(const MaskDistribution& d) const {
  std::vector<double> out(word_tokens_.size());
  for (std::size_t w = 0; w < word_tokens_.size(); ++w) {
    const auto& ids = word_tokens_[w];
    if (ids.size() == 1) {
      out[w] = d[static_cast<std::size_t>(ids[0])];
      continue;
    }
    double log_sum = 0.0;
    for (auto id : ids) log_sum += std::log(d[static_cast<std::size_t>(id)]);
    out[w] = std::exp(log_sum / static_cast<double>(ids.size()));
  }
  return out;
}

void LabelWordIndex::backward_word_probabilities(const MaskDistribution& d,
                                                 std::span<const double> word_probs,
                                                 std::span<const double> grad_words,
                                                 std::span<double> grad_vocab) const {
  for (std::size_t w = 0; w < word_tokens_.size(); ++w) {
    if (grad_words[w] == 0.0) continue;
    const auto& ids = word_tokens_[w];
    if (ids.size() == 1) {
      grad_vocab[static_cast<std::size_t>(ids[0])] += grad_words[w];
      continue;
    }
    const double n = static_cast<double>(ids.size());
    for (auto id : ids) {
      const auto t = static_cast<std::size_t>(id);
      grad_vocab[t] += grad_words[w] * word_probs[w] / (n * d[t]);
    }
  }
}

std::vector<double> project_distribution(const MaskDistribution& d, const LabelWordIndex& index) {
  auto probs = index.word_probabilities(d);
  double total = 0.0;
  for (double p : probs) total += p;
  if (!(total > 0.0)) throw DegenerateScoresError("mask distribution puts no mass on the label words");
  for (auto& p : probs) p /= total;
  return probs;
}

TypeScores raw_type_scores(std::span<const double> word_probs,
                           const Verbalizer& verbalizer,
                           const LabelWordIndex& index) {
  TypeScores scores;
  scores.values.resize(verbalizer.type_count());
  for (std::size_t t = 0; t < verbalizer.type_count(); ++t) {
    const auto& words = verbalizer.words(t);
    const auto& positions = index.type_words(t);
    double sum = 0.0;
    for (std::size_t j = 0; j < words.size(); ++j) sum += words[j].weight * word_probs[positions[j]];
    scores.values[t] = sum / static_cast<double>(words.size());
  }
  return scores;
}

TypeScores normalize_scores(TypeScores raw) {
  double total = 0.0;
  for (double s : raw.values) total += s;
  if (!(total > 0.0)) throw DegenerateScoresError("all type scores are zero");
  for (auto& s : raw.values) s /= total;
  raw.normalized = true;
  return raw;
}

TypeScores score_types(const MaskDistribution& d, const Verbalizer& verbalizer, const LabelWordIndex& index) {
  const auto probs = index.word_probabilities(d);
  return normalize_scores(raw_type_scores(probs, verbalizer, index));
}

std::size_t argmax_type(const TypeScores& scores) {
  if (scores.values.empty()) throw ConfigError("no type scores to rank");
  std::size_t best = 0;
  for (std::size_t t = 1; t < scores.values.size(); ++t) {
    if (scores.values[t] > scores.values[best]) best = t;
  }
  return best;
}

std::size_t predict_index(const TypingExample& example,
                          const TemplateSpec& spec,
                          const Verbalizer& verbalizer,
                          const LabelWordIndex& index,
                          const MlmBackend& backend,
                          const EncoderState& state) {
  const auto d = backend.mask_distribution(render(spec, example), state);
  return argmax_type(score_types(d, verbalizer, index));
}

EntityType predict(const TypingExample& example,
                   const TemplateSpec& spec,
                   const Verbalizer& verbalizer,
                   const LabelWordIndex& index,
                   const MlmBackend& backend,
                   const EncoderState& state) {
  return verbalizer.schema().at(predict_index(example, spec, verbalizer, index, backend, state));
}

FineTuneHead FineTuneHead::zeros(std::size_t type_count, std::size_t width) {
  return {type_count, width, std::vector<double>(type_count * width, 0.0), std::vector<double>(type_count, 0.0)};
}

FineTuneHead FineTuneHead::random(std::size_t type_count, std::size_t width, std::uint64_t seed) {
  auto head = zeros(type_count, width);
  std::mt19937_64 rng(seed ^ 0x4eadULL);
  std::normal_distribution<double> normal(0.0, 0.02);
  for (auto& w : head.weight) w = normal(rng);
  return head;
}

void FineTuneHead::save(const std::filesystem::path& path) const {
  nlohmann::json doc;
  doc["type_count"] = type_count;
  doc["width"] = width;
  doc["weight"] = weight;
  doc["bias"] = bias;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << doc.dump() << "\n";
}

FineTuneHead FineTuneHead::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt fine-tuning head " + path.string() + ": " + e.what());
  }
  FineTuneHead head;
  head.type_count = doc.at("type_count").get<std::size_t>();
  head.width = doc.at("width").get<std::size_t>();
  head.weight = doc.at("weight").get<std::vector<double>>();
  head.bias = doc.at("bias").get<std::vector<double>>();
  if (head.weight.size() != head.type_count * head.width || head.bias.size() != head.type_count) {
    throw ConfigError("fine-tuning head " + path.string() + " has inconsistent shapes");
  }
  return head;
}

TypeScores ft_scores_from_embedding(std::span<const double> embedding, const FineTuneHead& head) {
  if (embedding.size() != head.width || head.weight.size() != head.type_count * head.width ||
      head.bias.size() != head.type_count) {
    throw ConfigError("fine-tuning head shape does not match the context vector");
  }
  TypeScores scores;
  scores.values.resize(head.type_count);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < head.type_count; ++t) {
    double z = head.bias[t];
    for (std::size_t j = 0; j < head.width; ++j) z += head.weight[t * head.width + j] * embedding[j];
    scores.values[t] = z;
    max_logit = std::max(max_logit, z);
  }
  double total = 0.0;
  for (auto& z : scores.values) {
    z = std::exp(z - max_logit);
    total += z;
  }
  for (auto& z : scores.values) z /= total;
  scores.normalized = true;
  return scores;
}

TypeScores ft_scores(const TypingExample& example,
                     const FineTuneHead& head,
                     const MlmBackend& backend,
                     const EncoderState& state) {
  return ft_scores_from_embedding(backend.cls_embedding(example, state), head);
}

}  // namespace fet
