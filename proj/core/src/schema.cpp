#include "fet/schema.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <numeric>

#include "fet/errors.hpp"

namespace fet {
namespace {

void validate_level(const std::string& level, std::string_view context) {
  if (level.empty()) {
    throw SchemaError("empty level name in type label '" + std::string(context) + "'");
  }
  for (unsigned char c : level) {
    if (std::isspace(c) || c == '/') {
      throw SchemaError("level name '" + level + "' in '" + std::string(context) +
                        "' contains whitespace or '/'");
    }
    if (std::isupper(c)) {
      throw SchemaError("level name '" + level + "' in '" + std::string(context) +
                        "' is not lowercase");
    }
  }
}

std::vector<std::string> split(std::string_view text, std::string_view separator) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(separator, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(text.substr(start));
      break;
    }
    parts.emplace_back(text.substr(start, pos - start));
    start = pos + separator.size();
  }
  return parts;
}

}  // namespace

EntityType::EntityType(std::vector<std::string> path) : path_(std::move(path)) {
  if (path_.empty()) throw SchemaError("entity type path is empty");
  for (std::size_t i = 0; i < path_.size(); ++i) {
    if (i) id_ += '/';
    id_ += path_[i];
  }
  for (const auto& level : path_) validate_level(level, id_);
}

EntityType EntityType::parse(std::string_view canonical_id) {
  if (canonical_id.empty()) throw SchemaError("empty canonical type id");
  return EntityType(split(canonical_id, "/"));
}

std::set<std::string> expand_hierarchy(const EntityType& type) {
  std::set<std::string> prefixes;
  std::string prefix;
  for (const auto& level : type.path()) {
    if (!prefix.empty()) prefix += '/';
    prefix += level;
    prefixes.insert(prefix);
  }
  return prefixes;
}

LabelSchema::LabelSchema(std::vector<EntityType> types, std::string name)
    : name_(std::move(name)), types_(std::move(types)) {
  std::sort(types_.begin(), types_.end());
  for (std::size_t i = 0; i < types_.size(); ++i) {
    auto [it, inserted] = index_.emplace(types_[i].canonical_id(), i);
    if (!inserted) {
      throw SchemaError("duplicate canonical id \"" + types_[i].canonical_id() + "\"");
    }
  }
}

std::optional<std::size_t> LabelSchema::find(std::string_view canonical_id) const {
  auto it = index_.find(std::string(canonical_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t LabelSchema::index_of(const EntityType& type) const {
  if (auto idx = find(type.canonical_id())) return *idx;
  throw SchemaError("unknown type '" + type.canonical_id() + "' (nearest schema match: '" +
                    nearest(type.canonical_id()) + "')");
}

std::string LabelSchema::nearest(std::string_view canonical_id) const {
  std::string best;
  std::size_t best_distance = std::numeric_limits<std::size_t>::max();
  for (const auto& t : types_) {
    const auto d = edit_distance(canonical_id, t.canonical_id());
    if (d < best_distance) {
      best_distance = d;
      best = t.canonical_id();
    }
  }
  return best;
}

EntityType normalize_label(std::string_view raw, std::string_view separator) {
  if (separator.empty()) throw ConfigError("label separator must be non-empty");
  std::string lowered(raw);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto levels = split(lowered, separator);
  std::vector<std::string> path;
  for (auto& level : levels) {
    // a custom separator may still leave '/' inside a level
    for (auto& piece : split(level, "/")) path.push_back(std::move(piece));
  }
  while (!path.empty() && path.front().empty()) path.erase(path.begin());
  while (!path.empty() && path.back().empty()) path.pop_back();
  if (path.empty()) throw SchemaError("empty type label '" + std::string(raw) + "'");
  return EntityType(std::move(path));
}

LabelSchema parse_label_schema(const std::vector<std::string>& raw_labels,
                               std::string_view separator,
                               std::string name) {
  if (raw_labels.empty()) throw SchemaError("label list is empty");
  if (separator.empty()) throw ConfigError("label separator must be non-empty");

  std::vector<std::string> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::unordered_map<std::string, std::string> seen;  // canonical id -> raw
  std::vector<EntityType> types;
  for (const auto& raw : distinct) {
    auto type = normalize_label(raw, separator);
    auto [it, inserted] = seen.emplace(type.canonical_id(), raw);
    if (!inserted) {
      throw SchemaError("duplicate canonical id \"" + type.canonical_id() + "\" from labels '" +
                        it->second + "' and '" + raw + "'");
    }
    types.push_back(std::move(type));
  }
  return LabelSchema(std::move(types), std::move(name));
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t above = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diagonal + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diagonal = above;
    }
  }
  return row[b.size()];
}

}  // namespace fet
