#include "fet/metrics.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "fet/errors.hpp"
#include "json.hpp"

namespace fet {
namespace {

std::size_t overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

void check_lengths(std::span<const EntityType> predictions, std::span<const EntityType> golds) {
  if (predictions.size() != golds.size()) {
    throw ConfigError("prediction and gold lists differ in length (" + std::to_string(predictions.size()) +
                      " vs " + std::to_string(golds.size()) + ")");
  }
  if (golds.empty()) throw ConfigError("cannot evaluate an empty prediction list");
}

}  // namespace

double harmonic_mean(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

EvalResult evaluate(std::span<const EntityType> predictions,
                    std::span<const EntityType> golds,
                    MacroAverage macro) {
  check_lengths(predictions, golds);
  const double n = static_cast<double>(golds.size());

  std::size_t exact = 0;
  std::size_t total_overlap = 0;
  std::size_t total_pred = 0;
  std::size_t total_gold = 0;
  double sum_p = 0.0;
  double sum_r = 0.0;
  double sum_f1 = 0.0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto pred_set = expand_hierarchy(predictions[i]);
    const auto gold_set = expand_hierarchy(golds[i]);
    const std::size_t common = overlap(pred_set, gold_set);
    if (pred_set == gold_set) ++exact;
    total_overlap += common;
    total_pred += pred_set.size();
    total_gold += gold_set.size();
    const double p = static_cast<double>(common) / static_cast<double>(pred_set.size());
    const double r = static_cast<double>(common) / static_cast<double>(gold_set.size());
    sum_p += p;
    sum_r += r;
    sum_f1 += harmonic_mean(p, r);
  }

  EvalResult result;
  result.n_examples = golds.size();
  result.strict_accuracy = static_cast<double>(exact) / n;
  result.loose_macro.precision = sum_p / n;
  result.loose_macro.recall = sum_r / n;
  result.loose_macro.f1 = macro == MacroAverage::mean_precision_recall
                              ? harmonic_mean(result.loose_macro.precision, result.loose_macro.recall)
                              : sum_f1 / n;
  result.loose_micro.precision = static_cast<double>(total_overlap) / static_cast<double>(total_pred);
  result.loose_micro.recall = static_cast<double>(total_overlap) / static_cast<double>(total_gold);
  result.loose_micro.f1 = harmonic_mean(result.loose_micro.precision, result.loose_micro.recall);
  return result;
}

std::string EvalResult::to_json() const {
  nlohmann::ordered_json doc;
  doc["n_examples"] = n_examples;
  doc["strict_acc"] = strict_accuracy;
  doc["loose_macro_p"] = loose_macro.precision;
  doc["loose_macro_r"] = loose_macro.recall;
  doc["loose_macro_f1"] = loose_macro.f1;
  doc["loose_micro_p"] = loose_micro.precision;
  doc["loose_micro_r"] = loose_micro.recall;
  doc["loose_micro_f1"] = loose_micro.f1;
  return doc.dump(2);
}

std::vector<TypeReport> per_type_report(std::span<const EntityType> predictions,
                                        std::span<const EntityType> golds) {
  check_lengths(predictions, golds);
  std::map<std::string, TypeReport> by_gold;
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const auto& gold = golds[i];
    const auto& pred = predictions[i];
    auto [it, _] = by_gold.try_emplace(gold.canonical_id(), TypeReport{gold, 0, 0, 0, 0, {}});
    auto& entry = it->second;
    ++entry.support;
    if (pred == gold) {
      ++entry.correct;
    } else if (pred.root() == gold.root()) {
      ++entry.wrong_fine_right_coarse;
    } else {
      ++entry.wrong_coarse;
    }
    ++counts[gold.canonical_id()][pred.canonical_id()];
  }
  std::vector<TypeReport> out;
  for (auto& [id, entry] : by_gold) {
    for (const auto& [pred_id, c] : counts[id]) entry.predictions.emplace_back(pred_id, c);
    std::stable_sort(entry.predictions.begin(), entry.predictions.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    out.push_back(std::move(entry));
  }
  return out;
}

std::string to_csv(const std::vector<TypeReport>& report, std::size_t top) {
  std::ostringstream out;
  out << "gold_type,support,correct,wrong_fine_right_coarse,wrong_coarse,top_predictions\n";
  for (const auto& r : report) {
    out << r.gold.canonical_id() << ',' << r.support << ',' << r.correct << ',' << r.wrong_fine_right_coarse
        << ',' << r.wrong_coarse << ',';
    for (std::size_t i = 0; i < std::min(top, r.predictions.size()); ++i) {
      if (i) out << ';';
      out << r.predictions[i].first << ':' << r.predictions[i].second;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace fet
