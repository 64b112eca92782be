#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fet/datasets.hpp"
#include "fet/metrics.hpp"
#include "fet/mlm_backend.hpp"
#include "fet/templates.hpp"
#include "fet/typing_model.hpp"
#include "fet/verbalizer.hpp"

namespace fet {

enum class TrainMode { ft, prompt };

TrainMode parse_train_mode(std::string_view name);
std::string_view mode_name(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::prompt;
  TemplateSpec template_spec = TemplateSpec::hard(HardTemplate::t3);
  double learning_rate = 5e-5;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t eval_every_steps = 25;
  std::uint64_t seed = 0;
  bool lambda_learnable = false;
  double weight_decay = 0.01;
  double clip_norm = 1.0;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct EvalPoint {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous evaluation
  EvalResult dev;
};

struct TrainReport {
  TrainMode mode = TrainMode::prompt;
  std::string template_name;
  std::vector<EvalPoint> history;
  std::size_t best_step = 0;
  std::string checkpoint;  // set by callers that persist the best state
  EvalResult test;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  std::size_t steps = 0;

  std::string to_json() const;
};

struct TrainResult {
  EncoderState state;  // best-dev checkpoint
  std::optional<FineTuneHead> head;
  Verbalizer verbalizer;  // with learned weights when lambda is learnable
  TrainReport report;
};

struct PromptExample {
  std::string id;
  PromptedInput input;
  std::size_t gold = 0;
};

std::vector<PromptExample> render_dataset(const TypingDataset& dataset,
                                          const TemplateSpec& spec,
                                          const LabelSchema& schema);

struct PromptGradient {
  StateGradient state;
  std::vector<std::vector<double>> lambda;  // per type, per label word

  static PromptGradient zeros_like(const EncoderState& state, const Verbalizer& verbalizer);
};

// Mean over the batch of -log of the gold type's normalized score.
double prompt_loss(std::span<const PromptExample> batch,
                   const Verbalizer& verbalizer,
                   const LabelWordIndex& index,
                   const MlmBackend& backend,
                   const EncoderState& state,
                   PromptGradient* grad = nullptr);

struct FtGradient {
  StateGradient state;
  FineTuneHead head;

  static FtGradient zeros_like(const EncoderState& state, const FineTuneHead& head);
};

// Mean over the batch of -log softmax(W h + b)[gold].
double ft_loss(std::span<const TypingExample> batch,
               const LabelSchema& schema,
               const FineTuneHead& head,
               const MlmBackend& backend,
               const EncoderState& state,
               FtGradient* grad = nullptr);

std::vector<EntityType> predict_prompt(const TypingDataset& dataset,
                                       const TemplateSpec& spec,
                                       const Verbalizer& verbalizer,
                                       const MlmBackend& backend,
                                       const EncoderState& state);
std::vector<EntityType> predict_ft(const TypingDataset& dataset,
                                   const LabelSchema& schema,
                                   const FineTuneHead& head,
                                   const MlmBackend& backend,
                                   const EncoderState& state);

EvalResult evaluate_predictions(const TypingDataset& dataset, const std::vector<EntityType>& predictions);

// Optimizes the encoder (plus the head in ft mode and lambda when learnable)
// with AdamW, evaluates on dev every eval_every_steps and after the last
// step, keeps the checkpoint with the highest dev loose micro F1 and reports
// its test metrics.
TrainResult train(const TrainConfig& config,
                  const TypingDataset& train_set,
                  const TypingDataset& dev_set,
                  const TypingDataset& test_set,
                  Verbalizer verbalizer,
                  const MlmBackend& backend,
                  EncoderState state);

}  // namespace fet
