#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fet/schema.hpp"

namespace fet {

// How loose macro F1 is aggregated over examples.
enum class MacroAverage {
  mean_precision_recall,  // F1 of the mean precision and mean recall
  mean_f1,                // mean of per-example F1
};

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalResult {
  double strict_accuracy = 0.0;
  PrecisionRecallF1 loose_macro;
  PrecisionRecallF1 loose_micro;
  std::size_t n_examples = 0;

  std::string to_json() const;
};

double harmonic_mean(double precision, double recall);

// Labels are expanded to their ancestor sets before comparison. Strict
// accuracy needs equal sets; loose scores use set overlap.
EvalResult evaluate(std::span<const EntityType> predictions,
                    std::span<const EntityType> golds,
                    MacroAverage macro = MacroAverage::mean_precision_recall);

struct TypeReport {
  EntityType gold;
  std::size_t support = 0;
  std::size_t correct = 0;
  std::size_t wrong_fine_right_coarse = 0;
  std::size_t wrong_coarse = 0;
  // Predicted type ids with counts, most frequent first (ties by id).
  std::vector<std::pair<std::string, std::size_t>> predictions;
};

// One entry per gold type, sorted by canonical id.
std::vector<TypeReport> per_type_report(std::span<const EntityType> predictions,
                                        std::span<const EntityType> golds);

// CSV with header gold_type,support,correct,wrong_fine_right_coarse,
// wrong_coarse,top_predictions; the last column lists up to `top` entries
// as "type:count" separated by ';'.
std::string to_csv(const std::vector<TypeReport>& report, std::size_t top = 5);

}  // namespace fet
