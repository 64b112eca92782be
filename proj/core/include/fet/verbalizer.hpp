#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fet/schema.hpp"

namespace fet {

// Ranked related words per label word, loaded from a JSON object
// {"city": ["metropolis", "town", ...], ...}.
class RelatedWordSource {
 public:
  RelatedWordSource() = default;
  explicit RelatedWordSource(std::map<std::string, std::vector<std::string>> lookup);

  static RelatedWordSource from_json(std::string_view text);
  static RelatedWordSource load(const std::filesystem::path& path);

  // Empty when the word has no entry.
  const std::vector<std::string>& related(const std::string& word) const;
  std::size_t size() const noexcept { return lookup_.size(); }

 private:
  std::map<std::string, std::vector<std::string>> lookup_;
};

struct LabelWord {
  std::string word;
  double weight = 1.0;

  friend bool operator==(const LabelWord&, const LabelWord&) = default;
};

// Label-word sets V_y with importance weights for every type of a schema,
// plus their first-seen union V*.
class Verbalizer {
 public:
  Verbalizer(LabelSchema schema, std::vector<std::vector<LabelWord>> words);

  const LabelSchema& schema() const noexcept { return schema_; }
  std::size_t type_count() const noexcept { return words_.size(); }
  const std::vector<LabelWord>& words(std::size_t type_index) const { return words_.at(type_index); }
  const std::vector<std::string>& union_vocabulary() const noexcept { return union_; }
  // Position of `word` in union_vocabulary().
  std::optional<std::size_t> union_index(std::string_view word) const;

  // Base words that several types share (e.g. "location" under every
  // location/* type). They cannot separate those siblings.
  const std::vector<std::string>& shared_base_words() const noexcept { return shared_base_; }

  // Overwrites one type's weights. Negative values are clamped to zero; if
  // that leaves no positive weight the previous weights are kept.
  void set_weights(std::size_t type_index, const std::vector<double>& weights);
  void scale_all_weights(double factor);

  // JSON {type_id: [[word, weight], ...]} with sorted keys.
  std::string to_json() const;
  static Verbalizer from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Verbalizer load(const std::filesystem::path& path);

  friend bool operator==(const Verbalizer& a, const Verbalizer& b) {
    return a.to_json() == b.to_json();
  }

 private:
  void rebuild_union();

  LabelSchema schema_;
  std::vector<std::vector<LabelWord>> words_;
  std::vector<std::string> union_;
  std::vector<std::string> shared_base_;
};

// Base words are every level name of the type's path. With expansion_k > 0,
// related words of the leaf are appended in rank order until expansion_k are taken, skipping
// multi-word entries and words already assigned to any type. All weights
// start at 1.
Verbalizer build_verbalizer(const LabelSchema& schema,
                            const RelatedWordSource* source,
                            std::size_t expansion_k);

}  // namespace fet
