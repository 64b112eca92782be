#pragma once

#include <compare>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fet {

// A hierarchical type label such as location/city. Level names are
// non-empty, lowercase and free of whitespace and '/'.
class EntityType {
 public:
  explicit EntityType(std::vector<std::string> path);

  // Parses a "/"-joined canonical id. Throws SchemaError on malformed input.
  static EntityType parse(std::string_view canonical_id);

  const std::vector<std::string>& path() const noexcept { return path_; }
  const std::string& canonical_id() const noexcept { return id_; }
  const std::string& leaf() const noexcept { return path_.back(); }
  const std::string& root() const noexcept { return path_.front(); }
  std::size_t depth() const noexcept { return path_.size(); }

  friend bool operator==(const EntityType& a, const EntityType& b) noexcept {
    return a.id_ == b.id_;
  }
  friend std::strong_ordering operator<=>(const EntityType& a, const EntityType& b) noexcept {
    return a.id_ <=> b.id_;
  }

 private:
  std::vector<std::string> path_;
  std::string id_;
};

// All non-empty path prefixes as canonical ids: a/b/c -> {a, a/b, a/b/c}.
std::set<std::string> expand_hierarchy(const EntityType& type);

// A set of entity types, kept sorted by canonical id. The position of a type
// in types() is its class index everywhere else in the library.
class LabelSchema {
 public:
  LabelSchema() = default;
  LabelSchema(std::vector<EntityType> types, std::string name = {});

  const std::string& name() const noexcept { return name_; }
  const std::vector<EntityType>& types() const noexcept { return types_; }
  std::size_t size() const noexcept { return types_.size(); }
  bool empty() const noexcept { return types_.empty(); }
  const EntityType& at(std::size_t index) const { return types_.at(index); }

  std::optional<std::size_t> find(std::string_view canonical_id) const;
  bool contains(const EntityType& type) const { return find(type.canonical_id()).has_value(); }
  // Throws SchemaError naming the closest member when the type is unknown.
  std::size_t index_of(const EntityType& type) const;

  // Closest canonical id by edit distance; empty schema yields "".
  std::string nearest(std::string_view canonical_id) const;

 private:
  std::string name_;
  std::vector<EntityType> types_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Normalizes one raw dataset label: lowercases, maps `separator` to '/',
// trims leading/trailing separators. Throws SchemaError on empty levels.
EntityType normalize_label(std::string_view raw, std::string_view separator);

// One EntityType per distinct raw label. Distinct raw labels that normalize
// to the same canonical id are a SchemaError naming the collision.
LabelSchema parse_label_schema(const std::vector<std::string>& raw_labels,
                               std::string_view separator,
                               std::string name = {});

std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace fet
