#include "fet/toy_backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

#include "fet/errors.hpp"
#include "json.hpp"

namespace fet {
namespace {

using nlohmann::json;

constexpr std::size_t kEmbeddings = 0;
constexpr std::size_t kOutputWeights = 1;
constexpr std::size_t kOutputBias = 2;
constexpr std::string_view kVersion = "fet-toy-mlm/1";

std::vector<std::string> split_spaces(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::string join_range(const std::vector<std::string>& tokens, TokenSpan span) {
  std::string out;
  for (std::size_t i = span.begin; i < span.end && i < tokens.size(); ++i) {
    if (i != span.begin) out += ' ';
    out += tokens[i];
  }
  return out;
}

double position_weight(std::size_t i, std::size_t n) {
  return (1.0 + 0.25 * std::cos(static_cast<double>(i))) / static_cast<double>(n);
}

void fill_embedding(std::span<double> row, std::uint64_t seed, std::string_view word, double scale) {
  std::mt19937_64 rng(seed ^ fnv1a(word));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : row) v = scale * normal(rng);
}

}  // namespace

ToyBackendConfig ToyBackendConfig::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("toy backend config is not valid JSON: ") + e.what());
  }
  ToyBackendConfig cfg;
  cfg.hidden_width = doc.value("hidden_width", cfg.hidden_width);
  cfg.smoothing = doc.value("smoothing", cfg.smoothing);
  cfg.embedding_scale = doc.value("embedding_scale", cfg.embedding_scale);
  if (cfg.hidden_width == 0) throw ConfigError("toy backend hidden_width must be positive");
  if (!(cfg.smoothing > 0.0)) throw ConfigError("toy backend smoothing must be positive");
  if (doc.contains("vocabulary")) cfg.vocabulary = doc["vocabulary"].get<std::vector<std::string>>();
  for (const auto& r : doc.value("rules", json::array())) {
    ToyRule rule;
    if (r.contains("mention")) {
      rule.trigger = ToyRule::Trigger::mention;
      rule.key = r["mention"].get<std::string>();
    } else if (r.contains("keyword")) {
      rule.trigger = ToyRule::Trigger::keyword;
      rule.key = r["keyword"].get<std::string>();
    } else {
      throw ConfigError("toy rule needs a 'mention' or 'keyword' key");
    }
    double total = 0.0;
    for (const auto& [word, mass] : r.at("words").items()) {
      const double m = mass.get<double>();
      if (!(m >= 0.0)) throw ConfigError("toy rule '" + rule.key + "' has a negative mass");
      total += m;
      rule.masses.emplace_back(word, m);
    }
    if (total > 1.0 + 1e-9) throw ConfigError("toy rule '" + rule.key + "' assigns more than mass 1");
    cfg.rules.push_back(std::move(rule));
  }
  return cfg;
}

ToyBackendConfig ToyBackendConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return from_json(s.str());
}

std::string ToyBackendConfig::to_json() const {
  json doc;
  doc["hidden_width"] = hidden_width;
  doc["smoothing"] = smoothing;
  doc["embedding_scale"] = embedding_scale;
  doc["vocabulary"] = vocabulary;
  json rule_list = json::array();
  for (const auto& r : this->rules) {
    json entry;
    entry[r.trigger == ToyRule::Trigger::mention ? "mention" : "keyword"] = r.key;
    json words = json::object();
    for (const auto& [w, m] : r.masses) words[w] = m;
    entry["words"] = words;
    rule_list.push_back(entry);
  }
  doc["rules"] = rule_list;
  return doc.dump(2) + "\n";
}

ToyBackend::ToyBackend(ToyBackendConfig config) : config_(std::move(config)) {}

EncoderState ToyBackend::initial_state(const std::vector<std::string>& words, std::uint64_t seed) const {
  EncoderState state;
  state.backend = kind();
  state.version = std::string(kVersion);
  auto& vocab = state.vocabulary;
  for (auto special : {kMaskToken, kHideToken, kClsToken, kSepToken, kMentionOpen, kMentionClose}) {
    vocab.add_special(special);
  }
  for (const auto& w : template_words()) vocab.add(w);
  for (const auto& w : config_.vocabulary) vocab.add(w);
  for (const auto& rule : config_.rules) {
    for (const auto& t : split_spaces(rule.key)) vocab.add(t);
    for (const auto& [w, _] : rule.masses) vocab.add(w);
  }
  for (const auto& w : words) vocab.add(w);

  const std::size_t v = vocab.size();
  const std::size_t d = config_.hidden_width;
  state.blocks.push_back({"token_embeddings", v, d, std::vector<double>(v * d)});
  state.blocks.push_back({"output_weights", v, d, std::vector<double>(v * d, 0.0)});
  state.blocks.push_back({"output_bias", v, 1, std::vector<double>(v, 0.0)});
  auto& emb = state.blocks[kEmbeddings];
  for (std::size_t r = 0; r < v; ++r) {
    fill_embedding(emb.row(r), seed, vocab.word(static_cast<TokenId>(r)), config_.embedding_scale);
  }
  return state;
}

std::vector<TokenId> ToyBackend::register_special_tokens(EncoderState& state,
                                                         const std::vector<std::string>& names,
                                                         std::uint64_t seed) const {
  std::unordered_set<std::string> distinct(names.begin(), names.end());
  if (distinct.size() != names.size()) throw ConfigError("special token names must be distinct");
  std::vector<TokenId> ids;
  for (const auto& name : names) {
    if (auto existing = state.vocabulary.find(name)) {
      if (!state.vocabulary.is_special(*existing)) {
        throw ConfigError("'" + name + "' is an ordinary vocabulary word, not a special token");
      }
      ids.push_back(*existing);
      continue;
    }
    const TokenId id = state.vocabulary.add_special(name);
    for (auto& b : state.blocks) {
      b.rows += 1;
      b.values.resize(b.rows * b.cols, 0.0);
    }
    fill_embedding(state.blocks[kEmbeddings].row(static_cast<std::size_t>(id)),
                   seed ^ 0x5eedf00dULL, name, config_.embedding_scale);
    ids.push_back(id);
  }
  return ids;
}

std::vector<TokenId> ToyBackend::label_word_tokens(const std::string& word,
                                                   const EncoderState& state) const {
  return {state.vocabulary.id(word)};
}

std::vector<TokenId> ToyBackend::encode(const std::vector<std::string>& tokens,
                                        const EncoderState& state) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(state.vocabulary.id(t));
  return ids;
}

std::vector<double> ToyBackend::pool(const std::vector<TokenId>& ids, const EncoderState& state) const {
  const auto& emb = state.blocks[kEmbeddings];
  std::vector<double> h(emb.cols, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double w = position_weight(i, ids.size());
    const auto row = emb.row(static_cast<std::size_t>(ids[i]));
    for (std::size_t j = 0; j < h.size(); ++j) h[j] += w * row[j];
  }
  return h;
}

void ToyBackend::backward_pool(const std::vector<TokenId>& ids, std::span<const double> grad_h,
                               StateGradient& grad) const {
  auto& g = grad.blocks[kEmbeddings];
  const std::size_t d = grad_h.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double w = position_weight(i, ids.size());
    double* row = g.data() + static_cast<std::size_t>(ids[i]) * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += w * grad_h[j];
  }
}

std::vector<double> ToyBackend::prior(const PromptedInput& input, const EncoderState& state) const {
  const std::size_t v = state.vocabulary.size();
  const std::string mention_key = join_range(input.tokens, input.mention_copy);
  std::unordered_set<std::string> sentence_tokens(
      input.tokens.begin(),
      input.tokens.begin() + static_cast<std::ptrdiff_t>(std::min(input.sentence_length, input.tokens.size())));

  std::vector<double> mixed(v, 0.0);
  std::size_t matched = 0;
  for (const auto& rule : config_.rules) {
    const bool hit = rule.trigger == ToyRule::Trigger::mention ? (!input.hidden && rule.key == mention_key)
                                                               : sentence_tokens.count(rule.key) > 0;
    if (!hit) continue;
    ++matched;
    double assigned = 0.0;
    for (const auto& [word, mass] : rule.masses) {
      mixed[static_cast<std::size_t>(state.vocabulary.id(word))] += mass;
      assigned += mass;
    }
    const double rest = (1.0 - assigned) / static_cast<double>(v);
    for (auto& m : mixed) m += rest;
  }
  std::vector<double> q(v);
  const double eps = config_.smoothing;
  if (matched == 0) {
    std::fill(q.begin(), q.end(), 1.0 / static_cast<double>(v));
    return q;
  }
  const double norm = 1.0 + static_cast<double>(v) * eps;
  for (std::size_t i = 0; i < v; ++i) q[i] = (mixed[i] / static_cast<double>(matched) + eps) / norm;
  return q;
}

MaskDistribution ToyBackend::mask_distribution(const PromptedInput& input, const EncoderState& state) const {
  if (input.mask_index >= input.tokens.size() || input.tokens[input.mask_index] != kMaskToken ||
      count_occurrences(input.tokens, {std::string(kMaskToken)}) != 1) {
    throw EncodeError("prompted input must contain exactly one mask slot");
  }
  const auto ids = encode(input.tokens, state);
  const auto h = pool(ids, state);
  const auto q = prior(input, state);
  const auto& out_w = state.blocks[kOutputWeights];
  const auto& out_b = state.blocks[kOutputBias];

  const std::size_t v = state.vocabulary.size();
  std::vector<double> logits(v);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < v; ++r) {
    const auto row = out_w.row(r);
    double z = std::log(q[r]) + out_b.values[r];
    for (std::size_t j = 0; j < h.size(); ++j) z += row[j] * h[j];
    logits[r] = z;
    max_logit = std::max(max_logit, z);
  }
  double total = 0.0;
  for (auto& z : logits) {
    z = std::exp(z - max_logit);
    total += z;
  }
  for (auto& z : logits) z /= total;
  return {std::move(logits)};
}

void ToyBackend::backward_mask_distribution(const PromptedInput& input,
                                            const EncoderState& state,
                                            const MaskDistribution& forward,
                                            std::span<const double> grad_probabilities,
                                            StateGradient& grad) const {
  const std::size_t v = state.vocabulary.size();
  if (grad_probabilities.size() != v || forward.size() != v) {
    throw ConfigError("gradient length does not match the vocabulary");
  }
  const auto ids = encode(input.tokens, state);
  const auto h = pool(ids, state);
  const auto& p = forward.probabilities;

  double inner = 0.0;
  for (std::size_t r = 0; r < v; ++r) inner += grad_probabilities[r] * p[r];

  const auto& out_w = state.blocks[kOutputWeights];
  const std::size_t d = h.size();
  std::vector<double> grad_h(d, 0.0);
  auto& g_w = grad.blocks[kOutputWeights];
  auto& g_b = grad.blocks[kOutputBias];
  for (std::size_t r = 0; r < v; ++r) {
    const double dz = p[r] * (grad_probabilities[r] - inner);
    if (dz == 0.0) continue;
    g_b[r] += dz;
    const auto row = out_w.row(r);
    double* g_row = g_w.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      g_row[j] += dz * h[j];
      grad_h[j] += dz * row[j];
    }
  }
  backward_pool(ids, grad_h, grad);
}

std::vector<std::string> ToyBackend::cls_tokens(const TypingExample& example) const {
  std::vector<std::string> tokens{std::string(kClsToken)};
  for (std::size_t i = 0; i < example.tokens.size(); ++i) {
    if (i == example.mention.begin) tokens.emplace_back(kMentionOpen);
    tokens.push_back(example.tokens[i]);
    if (i + 1 == example.mention.end) tokens.emplace_back(kMentionClose);
  }
  tokens.emplace_back(kSepToken);
  return tokens;
}

std::vector<double> ToyBackend::cls_embedding(const TypingExample& example, const EncoderState& state) const {
  return pool(encode(cls_tokens(example), state), state);
}

void ToyBackend::backward_cls_embedding(const TypingExample& example,
                                        const EncoderState& state,
                                        std::span<const double> grad_embedding,
                                        StateGradient& grad) const {
  backward_pool(encode(cls_tokens(example), state), grad_embedding, grad);
}

}  // namespace fet
