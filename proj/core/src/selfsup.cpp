#include "fet/selfsup.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "fet/errors.hpp"
#include "fet/optimizer.hpp"
#include "json.hpp"

namespace fet {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string s;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) s += ' ';
    s += tokens[i];
  }
  return s;
}

std::vector<std::string> split_spaces(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) fn(line_no, line);
    start = end + 1;
  }
}

json span_json(const TokenSpan& s) { return json::array({s.begin, s.end}); }

TokenSpan span_from(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

TypingExample to_example(const LinkedSentence& s) {
  return {s.key(), s.tokens, s.mention, EntityType({"entity"})};
}

using PairKey = std::pair<std::size_t, std::size_t>;

PairKey unordered(std::size_t a, std::size_t b) { return a < b ? PairKey{a, b} : PairKey{b, a}; }

// Cross-type pairs inside one group, given per-type counts.
std::size_t cross_pairs(const std::map<std::string, std::size_t>& per_type) {
  std::size_t n = 0;
  std::size_t sq = 0;
  for (const auto& [_, k] : per_type) {
    n += k;
    sq += k * k;
  }
  return (n * n - sq) / 2;
}

struct Grouped {
  std::vector<std::string> keys;                  // first-seen order
  std::vector<std::vector<std::size_t>> members;  // sentence indices per key
};

Grouped group_by_entity(const std::vector<LinkedSentence>& corpus) {
  Grouped g;
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto [it, inserted] = pos.emplace(corpus[i].key(), g.keys.size());
    if (inserted) {
      g.keys.push_back(corpus[i].key());
      g.members.emplace_back();
    }
    g.members[it->second].push_back(i);
  }
  return g;
}

bool valid_negative(const LinkedSentence& a, const LinkedSentence& b,
                    const std::optional<std::string>& ta, const std::optional<std::string>& tb) {
  return ta && tb && *ta != *tb && a.key() != b.key() && a.surface != b.surface;
}

PromptedInput render_side(const LinkedSentence& s, double alpha, std::mt19937_64& rng) {
  static const TemplateSpec t3 = TemplateSpec::hard(HardTemplate::t3);
  return apply_hiding(render(t3, to_example(s)), alpha, rng);
}

// Rebuilds the T3 spans when a pair file carries only text and mask index.
void infer_t3_spans(PromptedInput& p) {
  const auto& t = p.tokens;
  if (p.mask_index < 6 || p.mask_index >= t.size() || t[p.mask_index] != kMaskToken) {
    throw DataError("mask index does not point at " + std::string(kMaskToken));
  }
  std::size_t intro = t.size();
  for (std::size_t i = p.mask_index; i-- > 0;) {
    if (i + 4 <= p.mask_index && t[i] == "In" && t[i + 1] == "this" && t[i + 2] == "sentence" && t[i + 3] == ",") {
      intro = i;
      break;
    }
  }
  if (intro == t.size()) throw DataError("text is not a T3 rendering");
  p.sentence_length = intro;
  p.mention_copy = {intro + 4, p.mask_index - 2};
  if (p.mention_copy.empty()) throw DataError("T3 rendering has an empty mention copy");
  std::vector<std::string> copy(t.begin() + static_cast<std::ptrdiff_t>(p.mention_copy.begin),
                                t.begin() + static_cast<std::ptrdiff_t>(p.mention_copy.end));
  p.mention = {};
  for (std::size_t i = 0; i + copy.size() <= intro; ++i) {
    if (std::equal(copy.begin(), copy.end(), t.begin() + static_cast<std::ptrdiff_t>(i))) {
      p.mention = {i, i + copy.size()};
      break;
    }
  }
  if (p.mention.empty()) throw DataError("mention copy does not occur in the sentence");
  if (!p.hidden) p.mention_tokens = copy;
}

PromptedInput side_from_json(const json& row, const std::string& prefix, const std::string& hidden_key) {
  PromptedInput p;
  p.tokens = split_spaces(row.at(prefix + "_text").get<std::string>());
  p.mask_index = row.at(prefix + "_mask_index").get<std::size_t>();
  p.hidden = row.at(hidden_key).get<bool>();
  if (row.contains(prefix + "_sentence_length")) {
    p.sentence_length = row.at(prefix + "_sentence_length").get<std::size_t>();
    p.mention = span_from(row.at(prefix + "_mention"));
    p.mention_copy = span_from(row.at(prefix + "_mention_copy"));
    if (row.contains(prefix + "_mention_tokens")) {
      p.mention_tokens = row.at(prefix + "_mention_tokens").get<std::vector<std::string>>();
    }
    const auto n = p.tokens.size();
    if (p.mask_index >= n || p.tokens[p.mask_index] != kMaskToken || p.sentence_length > n ||
        p.mention.end > p.sentence_length || p.mention.empty() || p.mention_copy.end > n || p.mention_copy.empty()) {
      throw DataError("inconsistent spans for side " + prefix);
    }
  } else {
    infer_t3_spans(p);
  }
  return p;
}

void side_to_json(json& row, const PromptedInput& p, const std::string& prefix) {
  row[prefix + "_sentence_length"] = p.sentence_length;
  row[prefix + "_mention"] = span_json(p.mention);
  row[prefix + "_mention_copy"] = span_json(p.mention_copy);
  row[prefix + "_mention_tokens"] = p.mention_tokens;
}

double mean_or_zero(double sum, std::size_t n) { return n == 0 ? 0.0 : sum / static_cast<double>(n); }

}  // namespace

void LinkedSentence::validate() const {
  if (tokens.empty()) throw DataError("linked sentence has no tokens");
  if (mention.empty() || mention.end > tokens.size()) throw DataError("linked sentence has an invalid mention span");
  if (surface != join(tokens, mention.begin, mention.end)) {
    throw DataError("surface '" + surface + "' does not match the mention tokens '" +
                    join(tokens, mention.begin, mention.end) + "'");
  }
}

std::vector<LinkedSentence> parse_linked_corpus(std::string_view text) {
  std::vector<LinkedSentence> out;
  for_each_line(text, [&](std::size_t line, std::string_view row_text) {
    try {
      const json row = json::parse(row_text);
      LinkedSentence s;
      s.tokens = row.at("tokens").get<std::vector<std::string>>();
      s.mention = span_from(row.at("mention"));
      s.entity_id = row.value("entity_id", std::string());
      s.surface = row.contains("surface") ? row.at("surface").get<std::string>()
                  : s.mention.end <= s.tokens.size() ? join(s.tokens, s.mention.begin, s.mention.end)
                                                       : std::string();
      s.validate();
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

std::vector<LinkedSentence> load_linked_corpus(const std::filesystem::path& path) {
  return parse_linked_corpus(read_file(path));
}

TypeDictionary::TypeDictionary(std::map<std::string, std::string> entries) : entries_(std::move(entries)) {}

TypeDictionary TypeDictionary::from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw DataError("type dictionary must be a JSON object");
    return TypeDictionary(doc.get<std::map<std::string, std::string>>());
  } catch (const json::exception& e) {
    throw DataError(std::string("type dictionary: ") + e.what());
  }
}

TypeDictionary TypeDictionary::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

std::optional<std::string> TypeDictionary::lookup(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::string> TypeDictionary::lookup(const LinkedSentence& sentence) const {
  if (!sentence.entity_id.empty()) {
    if (auto t = lookup(sentence.entity_id)) return t;
  }
  return lookup(sentence.surface);
}

void SelfSupConfig::validate() const {
  if (c < 1) throw ConfigError("pair count must be at least 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

std::string_view polarity_name(Polarity p) { return p == Polarity::positive ? "positive" : "negative"; }

Polarity parse_polarity(std::string_view name) {
  if (name == "positive" || name == "pos") return Polarity::positive;
  if (name == "negative" || name == "neg") return Polarity::negative;
  throw DataError("unknown polarity '" + std::string(name) + "'");
}

std::size_t PairDataset::count(Polarity p) const {
  return static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [p](const PairExample& x) { return x.polarity == p; }));
}

PairCapacity pair_capacity(const std::vector<LinkedSentence>& corpus, const TypeDictionary& dict) {
  PairCapacity cap;
  const Grouped groups = group_by_entity(corpus);
  for (const auto& m : groups.members) cap.positive += m.size() * (m.size() - 1) / 2;

  std::map<std::string, std::size_t> all;
  std::map<std::string, std::map<std::string, std::size_t>> by_key, by_surface, by_both;
  for (const auto& s : corpus) {
    auto t = dict.lookup(s);
    if (!t) continue;
    ++all[*t];
    ++by_key[s.key()][*t];
    ++by_surface[s.surface][*t];
    ++by_both[s.key() + '\x1f' + s.surface][*t];
  }
  std::size_t same_key = 0, same_surface = 0, same_both = 0;
  for (const auto& [_, m] : by_key) same_key += cross_pairs(m);
  for (const auto& [_, m] : by_surface) same_surface += cross_pairs(m);
  for (const auto& [_, m] : by_both) same_both += cross_pairs(m);
  cap.negative = cross_pairs(all) - (same_key + same_surface - same_both);
  return cap;
}

PairDataset generate_pairs(const std::vector<LinkedSentence>& corpus,
                           const TypeDictionary& dict,
                           const SelfSupConfig& cfg) {
  cfg.validate();
  const PairCapacity cap = pair_capacity(corpus, dict);
  if (cap.positive < cfg.c || cap.negative < cfg.c) {
    throw SamplingError("cannot sample " + std::to_string(cfg.c) + " pairs per polarity: the corpus supports " +
                        std::to_string(cap.positive) + " positive and " + std::to_string(cap.negative) +
                        " negative pairs");
  }
  const Grouped groups = group_by_entity(corpus);
  std::vector<std::optional<std::string>> types(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) types[i] = dict.lookup(corpus[i]);

  std::mt19937_64 rng(cfg.seed);
  const std::size_t attempt_budget = 200 * cfg.c + 100000;

  // positives: an entity weighted by its number of sentence pairs, then two of its sentences
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  std::set<PairKey> seen;
  {
    std::vector<double> weights;
    for (const auto& m : groups.members) weights.push_back(static_cast<double>(m.size() * (m.size() - 1) / 2));
    std::discrete_distribution<std::size_t> pick_entity(weights.begin(), weights.end());
    std::size_t attempts = 0;
    while (positives.size() < cfg.c && attempts++ < attempt_budget) {
      const auto& m = groups.members[pick_entity(rng)];
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, m.size() - 1)(rng);
      std::size_t j = std::uniform_int_distribution<std::size_t>(0, m.size() - 2)(rng);
      if (j >= i) ++j;
      if (seen.insert(unordered(m[i], m[j])).second) positives.emplace_back(m[i], m[j]);
    }
    if (positives.size() < cfg.c) {
      std::vector<std::pair<std::size_t, std::size_t>> rest;
      for (const auto& m : groups.members)
        for (std::size_t i = 0; i < m.size(); ++i)
          for (std::size_t j = i + 1; j < m.size(); ++j)
            if (!seen.count(unordered(m[i], m[j]))) rest.emplace_back(m[i], m[j]);
      std::shuffle(rest.begin(), rest.end(), rng);
      rest.resize(cfg.c - positives.size());
      positives.insert(positives.end(), rest.begin(), rest.end());
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> negatives;
  seen.clear();
  {
    const std::size_t n_entities = groups.keys.size();
    std::size_t attempts = 0;
    while (negatives.size() < cfg.c && attempts++ < attempt_budget) {
      const std::size_t e1 = std::uniform_int_distribution<std::size_t>(0, n_entities - 1)(rng);
      std::size_t e2 = std::uniform_int_distribution<std::size_t>(0, n_entities - 2)(rng);
      if (e2 >= e1) ++e2;
      const auto& m1 = groups.members[e1];
      const auto& m2 = groups.members[e2];
      const std::size_t a = m1[std::uniform_int_distribution<std::size_t>(0, m1.size() - 1)(rng)];
      const std::size_t b = m2[std::uniform_int_distribution<std::size_t>(0, m2.size() - 1)(rng)];
      if (!valid_negative(corpus[a], corpus[b], types[a], types[b])) continue;
      if (seen.insert(unordered(a, b)).second) negatives.emplace_back(a, b);
    }
    if (negatives.size() < cfg.c) {
      spdlog::warn("negative rejection sampling stalled after {} attempts; enumerating the remaining pairs",
                   attempt_budget);
      std::vector<std::pair<std::size_t, std::size_t>> rest;
      for (std::size_t a = 0; a < corpus.size(); ++a)
        for (std::size_t b = a + 1; b < corpus.size(); ++b)
          if (valid_negative(corpus[a], corpus[b], types[a], types[b]) && !seen.count({a, b})) rest.emplace_back(a, b);
      std::shuffle(rest.begin(), rest.end(), rng);
      rest.resize(cfg.c - negatives.size());
      negatives.insert(negatives.end(), rest.begin(), rest.end());
    }
  }

  PairDataset out;
  out.pairs.reserve(2 * cfg.c);
  for (const auto& [a, b] : positives) {
    auto pa = render_side(corpus[a], cfg.alpha, rng);
    auto pb = render_side(corpus[b], cfg.alpha, rng);
    out.pairs.push_back({std::move(pa), std::move(pb), Polarity::positive});
  }
  for (const auto& [a, b] : negatives) {
    auto pa = render_side(corpus[a], cfg.alpha, rng);
    auto pb = render_side(corpus[b], cfg.alpha, rng);
    out.pairs.push_back({std::move(pa), std::move(pb), Polarity::negative});
  }
  return out;
}

PairDataset generate_pairs_sharded(const std::vector<LinkedSentence>& corpus,
                                   const TypeDictionary& dict,
                                   const SelfSupConfig& cfg,
                                   std::size_t shards,
                                   bool parallel) {
  cfg.validate();
  if (shards < 1) throw ConfigError("shard count must be at least 1");
  std::vector<std::vector<LinkedSentence>> parts(shards);
  for (const auto& s : corpus) parts[fnv1a(s.key()) % shards].push_back(s);

  auto run_shard = [&](std::size_t i) {
    SelfSupConfig shard_cfg = cfg;
    shard_cfg.c = cfg.c / shards + (i < cfg.c % shards ? 1 : 0);
    shard_cfg.seed = cfg.seed + i;
    if (shard_cfg.c == 0) return PairDataset{};
    try {
      return generate_pairs(parts[i], dict, shard_cfg);
    } catch (const SamplingError& e) {
      throw SamplingError("shard " + std::to_string(i) + ": " + e.what());
    }
  };

  std::vector<PairDataset> results(shards);
  if (parallel && shards > 1) {
    std::vector<std::future<PairDataset>> futures;
    for (std::size_t i = 0; i < shards; ++i) futures.push_back(std::async(std::launch::async, run_shard, i));
    for (std::size_t i = 0; i < shards; ++i) results[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < shards; ++i) results[i] = run_shard(i);
  }
  PairDataset out;
  for (auto& r : results) {
    for (auto& p : r.pairs) out.pairs.push_back(std::move(p));
  }
  return out;
}

std::string pairs_to_jsonl(const PairDataset& pairs) {
  std::string out;
  for (const auto& p : pairs.pairs) {
    json row;
    row["a_text"] = join(p.a.tokens, 0, p.a.tokens.size());
    row["a_mask_index"] = p.a.mask_index;
    row["b_text"] = join(p.b.tokens, 0, p.b.tokens.size());
    row["b_mask_index"] = p.b.mask_index;
    row["polarity"] = std::string(polarity_name(p.polarity));
    row["hidden_a"] = p.a.hidden;
    row["hidden_b"] = p.b.hidden;
    side_to_json(row, p.a, "a");
    side_to_json(row, p.b, "b");
    out += row.dump();
    out += '\n';
  }
  return out;
}

PairDataset parse_pairs(std::string_view text) {
  PairDataset out;
  for_each_line(text, [&](std::size_t line, std::string_view row_text) {
    try {
      const json row = json::parse(row_text);
      PairExample p;
      p.a = side_from_json(row, "a", "hidden_a");
      p.b = side_from_json(row, "b", "hidden_b");
      p.polarity = parse_polarity(row.at("polarity").get<std::string>());
      out.pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

void save_pairs(const PairDataset& pairs, const std::filesystem::path& path) { write_file(path, pairs_to_jsonl(pairs)); }

PairDataset load_pairs(const std::filesystem::path& path) { return parse_pairs(read_file(path)); }

double js_similarity(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw ConfigError("js_similarity needs distributions over the same support");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) s += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) s += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::clamp(s, 0.0, std::log(2.0));
}

void js_similarity_backward(std::span<const double> p, std::span<const double> q, double scale,
                            std::span<double> grad_p, std::span<double> grad_q) {
  if (p.size() != q.size() || grad_p.size() != p.size() || grad_q.size() != q.size()) {
    throw ConfigError("js_similarity_backward needs matching sizes");
  }
  constexpr double tiny = 1e-300;
  // d js / d p_i = 0.5 log(p_i / m_i)
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = std::max(0.5 * (p[i] + q[i]), tiny);
    grad_p[i] += scale * 0.5 * std::log(std::max(p[i], tiny) / m);
    grad_q[i] += scale * 0.5 * std::log(std::max(q[i], tiny) / m);
  }
}

namespace {

struct SideForward {
  MaskDistribution d;
  std::vector<double> word_probs;
  double total = 0.0;
  std::vector<double> projected;
};

SideForward forward_side(const PromptedInput& input, const LabelWordIndex& index, const MlmBackend& backend,
                         const EncoderState& state) {
  SideForward f{backend.mask_distribution(input, state), {}, 0.0, {}};
  f.word_probs = index.word_probabilities(f.d);
  for (double w : f.word_probs) f.total += w;
  if (!(f.total > 0.0)) throw DegenerateScoresError("mask distribution puts no mass on the label words");
  f.projected = f.word_probs;
  for (auto& x : f.projected) x /= f.total;
  return f;
}

void backward_side(const PromptedInput& input, const SideForward& f, std::span<const double> grad_projected,
                   const LabelWordIndex& index, const MlmBackend& backend, const EncoderState& state,
                   StateGradient& grad) {
  // p_i = w_i / W  =>  dL/dw_k = (g_k - sum_i g_i p_i) / W
  double dot = 0.0;
  for (std::size_t i = 0; i < f.projected.size(); ++i) dot += grad_projected[i] * f.projected[i];
  std::vector<double> grad_words(f.projected.size());
  for (std::size_t k = 0; k < grad_words.size(); ++k) grad_words[k] = (grad_projected[k] - dot) / f.total;
  std::vector<double> grad_vocab(f.d.size(), 0.0);
  index.backward_word_probabilities(f.d, f.word_probs, grad_words, grad_vocab);
  backend.backward_mask_distribution(input, state, f.d, grad_vocab, grad);
}

}  // namespace

double selfsup_loss(std::span<const PairExample> positives,
                    std::span<const PairExample> negatives,
                    const LabelWordIndex& index,
                    const MlmBackend& backend,
                    const EncoderState& state,
                    double gamma,
                    StateGradient* grad) {
  if (positives.empty() && negatives.empty()) throw ConfigError("selfsup_loss needs at least one pair");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");

  std::size_t clamped = 0;
  auto accumulate = [&](std::span<const PairExample> pairs, bool positive, double weight) {
    double sum = 0.0;
    for (const auto& pair : pairs) {
      const auto fa = forward_side(pair.a, index, backend, state);
      const auto fb = forward_side(pair.b, index, backend, state);
      const double s = js_similarity(fa.projected, fb.projected);
      double dloss_ds = 0.0;
      if (positive) {
        sum += -std::log(1.0 - s);
        dloss_ds = 1.0 / (1.0 - s);
      } else if (s < kNegativeClamp) {
        ++clamped;
        sum += -std::log(kNegativeClamp);
      } else {
        sum += -std::log(s);
        dloss_ds = -1.0 / s;
      }
      if (!grad || weight == 0.0 || dloss_ds == 0.0) continue;
      std::vector<double> ga(fa.projected.size(), 0.0), gb(fb.projected.size(), 0.0);
      js_similarity_backward(fa.projected, fb.projected, weight * dloss_ds, ga, gb);
      backward_side(pair.a, fa, ga, index, backend, state, *grad);
      backward_side(pair.b, fb, gb, index, backend, state, *grad);
    }
    return sum;
  };

  const double pos_weight = positives.empty() ? 0.0 : 1.0 / static_cast<double>(positives.size());
  const double neg_weight = negatives.empty() ? 0.0 : gamma / static_cast<double>(negatives.size());
  const double pos = accumulate(positives, true, pos_weight);
  const double neg = gamma == 0.0 ? 0.0 : accumulate(negatives, false, neg_weight);
  if (clamped) spdlog::warn("{} negative pair(s) with similarity below {} clamped", clamped, kNegativeClamp);
  return mean_or_zero(pos, positives.size()) + gamma * mean_or_zero(neg, negatives.size());
}

PretrainResult pretrain(const SelfSupConfig& cfg,
                        const PairDataset& pairs,
                        const Verbalizer& verbalizer,
                        const MlmBackend& backend,
                        EncoderState state) {
  cfg.validate();
  if (pairs.pairs.empty()) throw ConfigError("no pairs to pre-train on");
  ensure_special_tokens(backend, state, {std::string(kHideToken)}, cfg.seed);
  const LabelWordIndex index(verbalizer, backend, state);

  AdamW optimizer({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  PretrainResult result{std::move(state), {}};
  EncoderState& st = result.state;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps && result.step_losses.size() >= cfg.max_steps) return result;
      std::vector<PairExample> pos, neg;
      for (std::size_t i = start; i < std::min(start + cfg.batch_size, order.size()); ++i) {
        const auto& p = pairs.pairs[order[i]];
        (p.polarity == Polarity::positive ? pos : neg).push_back(p);
      }
      auto grad = StateGradient::zeros_like(st);
      const double loss = selfsup_loss(pos, neg, index, backend, st, cfg.gamma, &grad);
      if (!std::isfinite(loss)) throw TrainingError("self-supervised loss diverged at step " +
                                                    std::to_string(result.step_losses.size()));
      std::vector<std::span<double>> grads;
      std::vector<ParameterRef> params;
      for (std::size_t b = 0; b < st.blocks.size(); ++b) {
        grads.emplace_back(grad.blocks[b]);
        const auto& name = st.blocks[b].name;
        const bool decay = !(name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0);
        params.push_back({st.blocks[b].values, grad.blocks[b], decay});
      }
      clip_global_norm(grads, cfg.clip_norm);
      optimizer.step(params);
      result.step_losses.push_back(loss);
    }
  }
  return result;
}

}  // namespace fet
