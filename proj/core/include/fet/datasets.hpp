#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fet/example.hpp"
#include "fet/schema.hpp"

namespace fet {

// On-disk layouts understood by load_dataset.
//
//   canonical  JSONL: {"id": "...", "tokens": [...], "mention_span": [s, e], "label": "a/b"}
//              ("id" is optional and defaults to "<split>-<line>").
//   fewnerd    Few-NERD supervised CoNLL: "token<TAB>label" per line, blank
//              line between sentences, "O" outside mentions. Each maximal run
//              of one label is a mention. "person-artist/author" becomes
//              person/artist-or-author.
//   ontonotes  TSV: "start<TAB>end<TAB>space-separated tokens<TAB>space-
//              separated labels", end exclusive, labels like /location/city.
//   bbn        JSONL: {"tokens": [...], "mentions": [{"start": s, "end": e,
//              "labels": ["/ORGANIZATION", "/ORGANIZATION/CORPORATION"]}]}.
//
// Rows with several labels keep the deepest one (ties: smallest id).
enum class DatasetFormat { canonical, fewnerd, ontonotes, bbn };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view format_name(DatasetFormat format);

// Maps one raw label of the given format to a canonical type.
EntityType adapt_label(std::string_view raw, DatasetFormat format);

struct TypingDataset {
  std::string split;
  LabelSchema schema;
  std::vector<TypingExample> examples;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
};

// Distinct raw-adapted labels found in a file, for schema discovery.
std::vector<EntityType> scan_labels(const std::filesystem::path& path, DatasetFormat format);

// Loads and validates a dataset. With a null schema, the schema is the set
// of labels found in the file. Unknown labels, bad spans and duplicate ids
// are DataErrors carrying the line number.
TypingDataset load_dataset(const std::filesystem::path& path,
                           DatasetFormat format,
                           const LabelSchema* schema = nullptr,
                           std::string split = "data");
TypingDataset parse_dataset(std::string_view text,
                            DatasetFormat format,
                            const LabelSchema* schema = nullptr,
                            std::string split = "data");

std::string to_canonical_jsonl(const TypingDataset& dataset);
void save_dataset(const TypingDataset& dataset, const std::filesystem::path& path);

// Exactly k examples per schema type, drawn uniformly without replacement.
// Output keeps the input order. Throws SamplingError naming a type with
// fewer than k examples.
TypingDataset sample_fewshot(const TypingDataset& dataset, std::size_t k, std::uint64_t seed);

struct FewShotSplit {
  TypingDataset train;
  TypingDataset dev;
};

// k-shot train with `seed`, then an equally sized dev sample with seed + 1
// from the examples train did not take.
FewShotSplit sample_fewshot_split(const TypingDataset& dataset, std::size_t k, std::uint64_t seed);

// Drops examples and schema entries whose type is one of `type_ids` (e.g. "other").
TypingDataset exclude_types(const TypingDataset& dataset, const std::vector<std::string>& type_ids);

}  // namespace fet
