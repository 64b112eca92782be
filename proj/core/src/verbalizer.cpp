#include "fet/verbalizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fet/errors.hpp"
#include "json.hpp"

namespace fet {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool is_single_word(const std::string& w) {
  if (w.empty()) return false;
  return std::none_of(w.begin(), w.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

RelatedWordSource::RelatedWordSource(std::map<std::string, std::vector<std::string>> lookup)
    : lookup_(std::move(lookup)) {}

RelatedWordSource RelatedWordSource::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("related-word file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("related-word file must be a JSON object");
  std::map<std::string, std::vector<std::string>> lookup;
  for (const auto& [word, list] : doc.items()) {
    if (!list.is_array()) throw ConfigError("related words of '" + word + "' must be an array");
    auto& ranked = lookup[word];
    for (const auto& entry : list) ranked.push_back(entry.get<std::string>());
  }
  return RelatedWordSource(std::move(lookup));
}

RelatedWordSource RelatedWordSource::load(const std::filesystem::path& path) {
  return from_json(read_file(path));
}

const std::vector<std::string>& RelatedWordSource::related(const std::string& word) const {
  static const std::vector<std::string> kNone;
  auto it = lookup_.find(word);
  return it == lookup_.end() ? kNone : it->second;
}

Verbalizer::Verbalizer(LabelSchema schema, std::vector<std::vector<LabelWord>> words)
    : schema_(std::move(schema)), words_(std::move(words)) {
  if (words_.size() != schema_.size()) {
    throw ConfigError("verbalizer needs one word list per schema type");
  }
  for (std::size_t t = 0; t < words_.size(); ++t) {
    const auto& id = schema_.at(t).canonical_id();
    if (words_[t].empty()) throw ConfigError("type '" + id + "' has no label words");
    bool any_positive = false;
    for (const auto& lw : words_[t]) {
      if (lw.word.empty()) throw ConfigError("type '" + id + "' has an empty label word");
      if (!(lw.weight >= 0.0)) throw ConfigError("type '" + id + "' has a negative weight");
      any_positive = any_positive || lw.weight > 0.0;
    }
    if (!any_positive) throw ConfigError("type '" + id + "' has no positive weight");
  }
  rebuild_union();
}

void Verbalizer::rebuild_union() {
  union_.clear();
  shared_base_.clear();
  std::unordered_map<std::string, std::size_t> owners;
  std::unordered_set<std::string> in_union;
  for (const auto& list : words_) {
    std::unordered_set<std::string> local;
    for (const auto& lw : list) {
      if (in_union.insert(lw.word).second) union_.push_back(lw.word);
      if (local.insert(lw.word).second) ++owners[lw.word];
    }
  }
  for (const auto& w : union_) {
    if (owners[w] > 1) shared_base_.push_back(w);
  }
}

std::optional<std::size_t> Verbalizer::union_index(std::string_view word) const {
  auto it = std::find(union_.begin(), union_.end(), word);
  if (it == union_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - union_.begin());
}

void Verbalizer::set_weights(std::size_t type_index, const std::vector<double>& weights) {
  auto& list = words_.at(type_index);
  if (weights.size() != list.size()) throw ConfigError("weight count does not match label words");
  std::vector<double> clamped(weights.size());
  bool any_positive = false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    clamped[i] = std::max(0.0, weights[i]);
    any_positive = any_positive || clamped[i] > 0.0;
  }
  if (!any_positive) return;
  for (std::size_t i = 0; i < list.size(); ++i) list[i].weight = clamped[i];
}

void Verbalizer::scale_all_weights(double factor) {
  if (!(factor > 0.0)) throw ConfigError("weight scale must be positive");
  for (auto& list : words_)
    for (auto& lw : list) lw.weight *= factor;
}

std::string Verbalizer::to_json() const {
  json doc = json::object();  // std::map-backed, so keys come out sorted
  for (std::size_t t = 0; t < words_.size(); ++t) {
    json entries = json::array();
    for (const auto& lw : words_[t]) entries.push_back(json::array({lw.word, lw.weight}));
    doc[schema_.at(t).canonical_id()] = std::move(entries);
  }
  return doc.dump(2) + "\n";
}

Verbalizer Verbalizer::from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("verbalizer file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.empty()) throw ConfigError("verbalizer must be a non-empty JSON object");
  std::vector<EntityType> types;
  for (const auto& [id, _] : doc.items()) types.push_back(EntityType::parse(id));
  LabelSchema schema(std::move(types));
  std::vector<std::vector<LabelWord>> words(schema.size());
  for (const auto& [id, entries] : doc.items()) {
    auto& list = words[*schema.find(id)];
    if (!entries.is_array()) throw ConfigError("entry for '" + id + "' must be an array");
    for (const auto& e : entries) {
      if (!e.is_array() || e.size() != 2) {
        throw ConfigError("entry for '" + id + "' must hold [word, weight] pairs");
      }
      list.push_back({e[0].get<std::string>(), e[1].get<double>()});
    }
  }
  return Verbalizer(std::move(schema), std::move(words));
}

void Verbalizer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json();
}

Verbalizer Verbalizer::load(const std::filesystem::path& path) {
  return from_json(read_file(path));
}

Verbalizer build_verbalizer(const LabelSchema& schema,
                            const RelatedWordSource* source,
                            std::size_t expansion_k) {
  if (schema.empty()) throw ConfigError("cannot build a verbalizer for an empty schema");
  if (expansion_k > 0 && source == nullptr) {
    throw ConfigError("related-word expansion requested without a related-word source");
  }

  std::vector<std::vector<LabelWord>> words(schema.size());
  std::unordered_map<std::string, std::unordered_set<std::size_t>> owners;
  for (std::size_t t = 0; t < schema.size(); ++t) {
    for (const auto& level : schema.at(t).path()) {
      if (owners[level].insert(t).second) words[t].push_back({level, 1.0});
    }
  }

  if (expansion_k > 0) {
    for (std::size_t t = 0; t < schema.size(); ++t) {
      const auto& ranked = source->related(schema.at(t).leaf());
      std::size_t added = 0;
      for (const auto& candidate : ranked) {
        if (added == expansion_k) break;
        if (!is_single_word(candidate)) continue;
        auto& who = owners[candidate];
        if (!who.empty()) continue;  // taken by this or another type
        who.insert(t);
        words[t].push_back({candidate, 1.0});
        ++added;
      }
    }
  }
  return Verbalizer(schema, std::move(words));
}

}  // namespace fet
