#include "fet/datasets.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include "fet/errors.hpp"
#include "json.hpp"

namespace fet {
namespace {

using nlohmann::json;

struct RawRow {
  std::size_t line = 0;
  std::string id;
  std::vector<std::string> tokens;
  TokenSpan mention;
  EntityType type{{"unknown"}};
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void fail(std::size_t line, const std::string& message) {
  throw DataError("line " + std::to_string(line) + ": " + message);
}

TokenSpan checked_span(long long start, long long end, std::size_t n_tokens, std::size_t line) {
  if (start == end) fail(line, "empty mention at line " + std::to_string(line));
  if (start < 0 || end < start || static_cast<std::size_t>(end) > n_tokens) {
    fail(line, "mention span [" + std::to_string(start) + ", " + std::to_string(end) + ") is out of range");
  }
  return {static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
}

EntityType most_specific(const std::vector<std::string>& labels, DatasetFormat format, std::size_t line) {
  if (labels.empty()) fail(line, "mention has no labels");
  std::vector<EntityType> types;
  for (const auto& l : labels) {
    try {
      types.push_back(adapt_label(l, format));
    } catch (const SchemaError& e) {
      fail(line, e.what());
    }
  }
  return *std::min_element(types.begin(), types.end(), [](const EntityType& a, const EntityType& b) {
    if (a.depth() != b.depth()) return a.depth() > b.depth();
    return a < b;
  });
}

std::vector<std::string> string_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      if (!current.empty() && current.back() == '\r') current.pop_back();
      lines.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

json parse_json_line(const std::string& line, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    fail(line_no, std::string("malformed JSON: ") + e.what());
  }
}

std::vector<RawRow> parse_canonical(std::string_view text, const std::string& split) {
  std::vector<RawRow> rows;
  const auto lines = string_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (blank(lines[i])) continue;
    const auto doc = parse_json_line(lines[i], line_no);
    try {
      RawRow row;
      row.line = line_no;
      row.id = doc.contains("id") ? doc["id"].get<std::string>() : split + "-" + std::to_string(line_no);
      row.tokens = doc.at("tokens").get<std::vector<std::string>>();
      const auto span = doc.at("mention_span").get<std::vector<long long>>();
      if (span.size() != 2) fail(line_no, "mention_span must have two entries");
      row.mention = checked_span(span[0], span[1], row.tokens.size(), line_no);
      row.type = most_specific({doc.at("label").get<std::string>()}, DatasetFormat::canonical, line_no);
      rows.push_back(std::move(row));
    } catch (const json::exception& e) {
      fail(line_no, std::string("missing or mistyped field: ") + e.what());
    }
  }
  return rows;
}

std::vector<RawRow> parse_fewnerd(std::string_view text, const std::string& split) {
  std::vector<RawRow> rows;
  const auto lines = string_lines(text);
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  std::vector<std::size_t> line_of;
  std::size_t sentence = 0;

  auto flush = [&] {
    if (tokens.empty()) return;
    std::size_t mention_no = 0;
    for (std::size_t i = 0; i < tokens.size();) {
      if (labels[i] == "O") {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < tokens.size() && labels[j] == labels[i]) ++j;
      RawRow row;
      row.line = line_of[i];
      row.id = split + "-s" + std::to_string(sentence) + "-m" + std::to_string(mention_no++);
      row.tokens = tokens;
      row.mention = {i, j};
      row.type = most_specific({labels[i]}, DatasetFormat::fewnerd, line_of[i]);
      rows.push_back(std::move(row));
      i = j;
    }
    ++sentence;
    tokens.clear();
    labels.clear();
    line_of.clear();
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (blank(lines[i])) {
      flush();
      continue;
    }
    auto fields = split_tabs(lines[i]);
    if (fields.size() != 2) fields = split_whitespace(lines[i]);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      fail(i + 1, "expected 'token<TAB>label'");
    }
    tokens.push_back(fields[0]);
    labels.push_back(fields[1]);
    line_of.push_back(i + 1);
  }
  flush();
  return rows;
}

std::vector<RawRow> parse_ontonotes(std::string_view text, const std::string& split) {
  std::vector<RawRow> rows;
  const auto lines = string_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (blank(lines[i])) continue;
    const auto fields = split_tabs(lines[i]);
    if (fields.size() != 4) fail(line_no, "expected 4 tab-separated columns (start, end, tokens, labels)");
    RawRow row;
    row.line = line_no;
    row.id = split + "-" + std::to_string(line_no);
    row.tokens = split_whitespace(fields[2]);
    long long start = 0;
    long long end = 0;
    try {
      start = std::stoll(fields[0]);
      end = std::stoll(fields[1]);
    } catch (const std::exception&) {
      fail(line_no, "mention offsets are not integers");
    }
    row.mention = checked_span(start, end, row.tokens.size(), line_no);
    row.type = most_specific(split_whitespace(fields[3]), DatasetFormat::ontonotes, line_no);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RawRow> parse_bbn(std::string_view text, const std::string& split) {
  std::vector<RawRow> rows;
  const auto lines = string_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (blank(lines[i])) continue;
    const auto doc = parse_json_line(lines[i], line_no);
    try {
      const auto tokens = doc.at("tokens").get<std::vector<std::string>>();
      std::size_t k = 0;
      for (const auto& m : doc.at("mentions")) {
        RawRow row;
        row.line = line_no;
        row.id = split + "-" + std::to_string(line_no) + "-m" + std::to_string(k++);
        row.tokens = tokens;
        row.mention = checked_span(m.at("start").get<long long>(), m.at("end").get<long long>(), tokens.size(),
                                   line_no);
        row.type = most_specific(m.at("labels").get<std::vector<std::string>>(), DatasetFormat::bbn, line_no);
        rows.push_back(std::move(row));
      }
    } catch (const json::exception& e) {
      fail(line_no, std::string("missing or mistyped field: ") + e.what());
    }
  }
  return rows;
}

std::vector<RawRow> parse_rows(std::string_view text, DatasetFormat format, const std::string& split) {
  switch (format) {
    case DatasetFormat::canonical: return parse_canonical(text, split);
    case DatasetFormat::fewnerd: return parse_fewnerd(text, split);
    case DatasetFormat::ontonotes: return parse_ontonotes(text, split);
    case DatasetFormat::bbn: return parse_bbn(text, split);
  }
  return {};
}

}  // namespace

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "canonical") return DatasetFormat::canonical;
  if (name == "fewnerd") return DatasetFormat::fewnerd;
  if (name == "ontonotes") return DatasetFormat::ontonotes;
  if (name == "bbn") return DatasetFormat::bbn;
  throw ConfigError("unknown dataset format '" + std::string(name) +
                    "' (expected canonical, fewnerd, ontonotes or bbn)");
}

std::string_view format_name(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::canonical: return "canonical";
    case DatasetFormat::fewnerd: return "fewnerd";
    case DatasetFormat::ontonotes: return "ontonotes";
    case DatasetFormat::bbn: return "bbn";
  }
  return "canonical";
}

EntityType adapt_label(std::string_view raw, DatasetFormat format) {
  if (format != DatasetFormat::fewnerd) return normalize_label(raw, "/");
  std::string lowered(raw);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const auto dash = lowered.find('-');
  if (dash == std::string::npos) return normalize_label(lowered, "/");
  const std::string coarse = lowered.substr(0, dash);
  std::string fine;
  for (char c : lowered.substr(dash + 1)) {
    if (c == '/') {
      fine += "-or-";
    } else {
      fine += c;
    }
  }
  if (coarse.empty() || fine.empty()) throw SchemaError("malformed Few-NERD label '" + std::string(raw) + "'");
  return EntityType({coarse, fine});
}

std::vector<EntityType> scan_labels(const std::filesystem::path& path, DatasetFormat format) {
  const auto rows = parse_rows(read_file(path), format, "scan");
  std::vector<EntityType> types;
  for (const auto& r : rows) types.push_back(r.type);
  std::sort(types.begin(), types.end());
  types.erase(std::unique(types.begin(), types.end()), types.end());
  return types;
}

TypingDataset parse_dataset(std::string_view text, DatasetFormat format, const LabelSchema* schema,
                            std::string split) {
  auto rows = parse_rows(text, format, split);
  TypingDataset dataset;
  dataset.split = std::move(split);
  if (schema) {
    dataset.schema = *schema;
  } else {
    std::vector<EntityType> types;
    for (const auto& r : rows) types.push_back(r.type);
    std::sort(types.begin(), types.end());
    types.erase(std::unique(types.begin(), types.end()), types.end());
    dataset.schema = LabelSchema(std::move(types));
  }

  std::unordered_set<std::string> ids;
  for (auto& r : rows) {
    if (!dataset.schema.contains(r.type)) {
      fail(r.line, "unknown label '" + r.type.canonical_id() + "' (nearest schema match: '" +
                       dataset.schema.nearest(r.type.canonical_id()) + "')");
    }
    if (!ids.insert(r.id).second) fail(r.line, "duplicate example id '" + r.id + "'");
    dataset.examples.push_back({std::move(r.id), std::move(r.tokens), r.mention, std::move(r.type)});
  }
  return dataset;
}

TypingDataset load_dataset(const std::filesystem::path& path, DatasetFormat format, const LabelSchema* schema,
                           std::string split) {
  try {
    return parse_dataset(read_file(path), format, schema, std::move(split));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string to_canonical_jsonl(const TypingDataset& dataset) {
  std::string out;
  for (const auto& x : dataset.examples) {
    nlohmann::ordered_json row;
    row["id"] = x.id;
    row["tokens"] = x.tokens;
    row["mention_span"] = {x.mention.begin, x.mention.end};
    row["label"] = x.gold_type.canonical_id();
    out += row.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const TypingDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_canonical_jsonl(dataset);
}

TypingDataset sample_fewshot(const TypingDataset& dataset, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ConfigError("few-shot k must be at least 1");
  std::vector<std::vector<std::size_t>> by_type(dataset.schema.size());
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    by_type[dataset.schema.index_of(dataset.examples[i].gold_type)].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<bool> chosen(dataset.examples.size(), false);
  for (std::size_t t = 0; t < by_type.size(); ++t) {
    auto& pool = by_type[t];
    if (pool.size() < k) {
      throw SamplingError("type '" + dataset.schema.at(t).canonical_id() + "' has only " +
                          std::to_string(pool.size()) + " examples, " + std::to_string(k) + " requested");
    }
    // partial Fisher-Yates: the first k slots become a uniform sample
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      chosen[pool[i]] = true;
    }
  }
  TypingDataset out{dataset.split + "-" + std::to_string(k) + "shot", dataset.schema, {}};
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    if (chosen[i]) out.examples.push_back(dataset.examples[i]);
  }
  return out;
}

FewShotSplit sample_fewshot_split(const TypingDataset& dataset, std::size_t k, std::uint64_t seed) {
  FewShotSplit split;
  split.train = sample_fewshot(dataset, k, seed);
  std::unordered_set<std::string> taken;
  for (const auto& x : split.train.examples) taken.insert(x.id);
  TypingDataset rest{dataset.split, dataset.schema, {}};
  for (const auto& x : dataset.examples) {
    if (!taken.count(x.id)) rest.examples.push_back(x);
  }
  split.dev = sample_fewshot(rest, k, seed + 1);
  split.train.split = dataset.split + "-train-" + std::to_string(k) + "shot";
  split.dev.split = dataset.split + "-dev-" + std::to_string(k) + "shot";
  return split;
}

TypingDataset exclude_types(const TypingDataset& dataset, const std::vector<std::string>& type_ids) {
  std::vector<EntityType> kept;
  for (const auto& t : dataset.schema.types()) {
    if (std::find(type_ids.begin(), type_ids.end(), t.canonical_id()) == type_ids.end()) kept.push_back(t);
  }
  TypingDataset out{dataset.split, LabelSchema(std::move(kept), dataset.schema.name()), {}};
  for (const auto& x : dataset.examples) {
    if (std::find(type_ids.begin(), type_ids.end(), x.gold_type.canonical_id()) == type_ids.end()) {
      out.examples.push_back(x);
    }
  }
  return out;
}

}  // namespace fet
