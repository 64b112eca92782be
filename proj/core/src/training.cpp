#include "fet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "fet/errors.hpp"
#include "fet/optimizer.hpp"
#include "json.hpp"

namespace fet {
namespace {

bool decays(const std::string& block_name) {
  return block_name.size() < 4 || block_name.compare(block_name.size() - 4, 4, "bias") != 0;
}

nlohmann::ordered_json eval_json(const EvalResult& r) { return nlohmann::ordered_json::parse(r.to_json()); }

std::vector<double> flatten_weights(const Verbalizer& v) {
  std::vector<double> flat;
  for (std::size_t t = 0; t < v.type_count(); ++t)
    for (const auto& lw : v.words(t)) flat.push_back(lw.weight);
  return flat;
}

void write_weights(Verbalizer& v, const std::vector<double>& flat) {
  std::size_t k = 0;
  for (std::size_t t = 0; t < v.type_count(); ++t) {
    const std::size_t m = v.words(t).size();
    v.set_weights(t, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(k),
                                         flat.begin() + static_cast<std::ptrdiff_t>(k + m)));
    k += m;
  }
}

void check_disjoint(const TypingDataset& train_set, const TypingDataset& other, const char* name) {
  std::unordered_set<std::string> ids;
  for (const auto& x : train_set.examples) ids.insert(x.id);
  for (const auto& x : other.examples) {
    if (ids.count(x.id)) {
      throw ConfigError(std::string(name) + " example '" + x.id + "' also appears in the training set");
    }
  }
}

}  // namespace

TrainMode parse_train_mode(std::string_view name) {
  if (name == "ft") return TrainMode::ft;
  if (name == "prompt") return TrainMode::prompt;
  throw ConfigError("unknown training mode '" + std::string(name) + "' (expected ft or prompt)");
}

std::string_view mode_name(TrainMode mode) { return mode == TrainMode::ft ? "ft" : "prompt"; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (eval_every_steps < 1) throw ConfigError("eval_every_steps must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

std::string TrainReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["mode"] = std::string(mode_name(mode));
  doc["template"] = template_name;
  doc["steps"] = steps;
  doc["initial_train_loss"] = initial_train_loss;
  doc["final_train_loss"] = final_train_loss;
  doc["best_step"] = best_step;
  doc["checkpoint"] = checkpoint;
  auto history_json = nlohmann::ordered_json::array();
  for (const auto& h : history) {
    nlohmann::ordered_json point;
    point["step"] = h.step;
    point["train_loss"] = h.train_loss;
    point["dev"] = eval_json(h.dev);
    history_json.push_back(point);
  }
  doc["history"] = history_json;
  doc["test"] = eval_json(test);
  return doc.dump(2);
}

std::vector<PromptExample> render_dataset(const TypingDataset& dataset, const TemplateSpec& spec,
                                          const LabelSchema& schema) {
  std::vector<PromptExample> out;
  out.reserve(dataset.size());
  for (const auto& x : dataset.examples) out.push_back({x.id, render(spec, x), schema.index_of(x.gold_type)});
  return out;
}

PromptGradient PromptGradient::zeros_like(const EncoderState& state, const Verbalizer& verbalizer) {
  PromptGradient g{StateGradient::zeros_like(state), {}};
  for (std::size_t t = 0; t < verbalizer.type_count(); ++t) g.lambda.emplace_back(verbalizer.words(t).size(), 0.0);
  return g;
}

double prompt_loss(std::span<const PromptExample> batch,
                   const Verbalizer& verbalizer,
                   const LabelWordIndex& index,
                   const MlmBackend& backend,
                   const EncoderState& state,
                   PromptGradient* grad) {
  if (batch.empty()) throw ConfigError("prompt_loss needs a non-empty batch");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const std::size_t n_types = verbalizer.type_count();
  double total = 0.0;
  for (const auto& ex : batch) {
    if (ex.gold >= n_types) throw ConfigError("gold type of '" + ex.id + "' is outside the schema");
    const auto d = backend.mask_distribution(ex.input, state);
    const auto word_probs = index.word_probabilities(d);
    const auto raw = raw_type_scores(word_probs, verbalizer, index);
    const double sum = std::accumulate(raw.values.begin(), raw.values.end(), 0.0);
    const double gold_score = raw.values[ex.gold];
    if (!(sum > 0.0) || !(gold_score > 0.0)) {
      throw TrainingError("degenerate type scores for example '" + ex.id + "'");
    }
    total += -std::log(gold_score / sum);
    if (!grad) continue;

    // d(-log r_g + log S)/d r_t = 1/S - [t = g]/r_g
    std::vector<double> grad_words(index.word_count(), 0.0);
    for (std::size_t t = 0; t < n_types; ++t) {
      const double dr = (1.0 / sum - (t == ex.gold ? 1.0 / gold_score : 0.0)) * inv_batch;
      const auto& words = verbalizer.words(t);
      const auto& positions = index.type_words(t);
      const double inv_m = 1.0 / static_cast<double>(words.size());
      for (std::size_t j = 0; j < words.size(); ++j) {
        grad_words[positions[j]] += dr * words[j].weight * inv_m;
        grad->lambda[t][j] += dr * word_probs[positions[j]] * inv_m;
      }
    }
    std::vector<double> grad_vocab(d.size(), 0.0);
    index.backward_word_probabilities(d, word_probs, grad_words, grad_vocab);
    backend.backward_mask_distribution(ex.input, state, d, grad_vocab, grad->state);
  }
  return total * inv_batch;
}

FtGradient FtGradient::zeros_like(const EncoderState& state, const FineTuneHead& head) {
  return {StateGradient::zeros_like(state), FineTuneHead::zeros(head.type_count, head.width)};
}

double ft_loss(std::span<const TypingExample> batch,
               const LabelSchema& schema,
               const FineTuneHead& head,
               const MlmBackend& backend,
               const EncoderState& state,
               FtGradient* grad) {
  if (batch.empty()) throw ConfigError("ft_loss needs a non-empty batch");
  if (head.type_count != schema.size()) throw ConfigError("fine-tuning head does not match the schema size");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& x : batch) {
    const std::size_t gold = schema.index_of(x.gold_type);
    const auto h = backend.cls_embedding(x, state);
    const auto scores = ft_scores_from_embedding(h, head);
    const double p_gold = scores.values[gold];
    if (!(p_gold > 0.0)) throw TrainingError("gold probability underflowed for example '" + x.id + "'");
    total += -std::log(p_gold);
    if (!grad) continue;

    std::vector<double> grad_h(head.width, 0.0);
    for (std::size_t t = 0; t < head.type_count; ++t) {
      const double dz = (scores.values[t] - (t == gold ? 1.0 : 0.0)) * inv_batch;
      grad->head.bias[t] += dz;
      for (std::size_t j = 0; j < head.width; ++j) {
        grad->head.weight[t * head.width + j] += dz * h[j];
        grad_h[j] += dz * head.weight[t * head.width + j];
      }
    }
    backend.backward_cls_embedding(x, state, grad_h, grad->state);
  }
  return total * inv_batch;
}

std::vector<EntityType> predict_prompt(const TypingDataset& dataset,
                                       const TemplateSpec& spec,
                                       const Verbalizer& verbalizer,
                                       const MlmBackend& backend,
                                       const EncoderState& state) {
  const LabelWordIndex index(verbalizer, backend, state);
  std::vector<EntityType> out;
  out.reserve(dataset.size());
  for (const auto& x : dataset.examples) out.push_back(predict(x, spec, verbalizer, index, backend, state));
  return out;
}

std::vector<EntityType> predict_ft(const TypingDataset& dataset,
                                   const LabelSchema& schema,
                                   const FineTuneHead& head,
                                   const MlmBackend& backend,
                                   const EncoderState& state) {
  std::vector<EntityType> out;
  out.reserve(dataset.size());
  for (const auto& x : dataset.examples) out.push_back(schema.at(argmax_type(ft_scores(x, head, backend, state))));
  return out;
}

EvalResult evaluate_predictions(const TypingDataset& dataset, const std::vector<EntityType>& predictions) {
  if (dataset.empty()) return {};
  std::vector<EntityType> golds;
  golds.reserve(dataset.size());
  for (const auto& x : dataset.examples) golds.push_back(x.gold_type);
  return evaluate(predictions, golds);
}

TrainResult train(const TrainConfig& config,
                  const TypingDataset& train_set,
                  const TypingDataset& dev_set,
                  const TypingDataset& test_set,
                  Verbalizer verbalizer,
                  const MlmBackend& backend,
                  EncoderState state) {
  config.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  check_disjoint(train_set, dev_set, "dev");
  check_disjoint(train_set, test_set, "test");
  const LabelSchema& schema = verbalizer.schema();
  const bool prompt_mode = config.mode == TrainMode::prompt;

  if (prompt_mode && config.template_spec.kind() == TemplateKind::soft) {
    ensure_special_tokens(backend, state, config.template_spec.special_token_names(), config.seed);
  }

  std::optional<LabelWordIndex> index;
  std::vector<PromptExample> prompts;
  std::optional<FineTuneHead> head;
  if (prompt_mode) {
    index.emplace(verbalizer, backend, state);
    prompts = render_dataset(train_set, config.template_spec, schema);
  } else {
    head = FineTuneHead::random(schema.size(), backend.hidden_width(), config.seed);
  }
  const bool learn_lambda = prompt_mode && config.lambda_learnable;

  auto full_loss = [&]() {
    double sum = 0.0;
    for (std::size_t start = 0; start < train_set.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, train_set.size() - start);
      const double l = prompt_mode
                           ? prompt_loss(std::span(prompts).subspan(start, n), verbalizer, *index, backend, state)
                           : ft_loss(std::span(train_set.examples).subspan(start, n), schema, *head, backend, state);
      sum += l * static_cast<double>(n);
    }
    return sum / static_cast<double>(train_set.size());
  };
  auto dev_metrics = [&]() {
    const auto preds = prompt_mode ? predict_prompt(dev_set, config.template_spec, verbalizer, backend, state)
                                   : predict_ft(dev_set, schema, *head, backend, state);
    return evaluate_predictions(dev_set, preds);
  };

  TrainReport report;
  report.mode = config.mode;
  report.template_name = prompt_mode ? config.template_spec.name() : "none";
  report.initial_train_loss = full_loss();

  AdamW optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> lambda = flatten_weights(verbalizer);
  std::vector<double> lambda_grad(lambda.size(), 0.0);

  EncoderState best_state = state;
  std::optional<FineTuneHead> best_head = head;
  Verbalizer best_verbalizer = verbalizer;
  double best_mif = -1.0;
  std::size_t step = 0;
  double loss_since_eval = 0.0;
  std::size_t batches_since_eval = 0;

  auto run_eval = [&]() {
    if (dev_set.empty()) {
      best_state = state;
      best_head = head;
      best_verbalizer = verbalizer;
      report.best_step = step;
      return;
    }
    EvalPoint point{step, batches_since_eval ? loss_since_eval / static_cast<double>(batches_since_eval) : 0.0,
                    dev_metrics()};
    if (point.dev.loose_micro.f1 > best_mif) {
      best_mif = point.dev.loose_micro.f1;
      best_state = state;
      best_head = head;
      best_verbalizer = verbalizer;
      report.best_step = step;
    }
    report.history.push_back(point);
    loss_since_eval = 0.0;
    batches_since_eval = 0;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      double loss = 0.0;
      std::vector<ParameterRef> params;
      std::vector<std::span<double>> grads;
      PromptGradient pg;
      FtGradient fg;
      if (prompt_mode) {
        std::vector<PromptExample> batch;
        for (std::size_t i = 0; i < n; ++i) batch.push_back(prompts[order[start + i]]);
        pg = PromptGradient::zeros_like(state, verbalizer);
        loss = prompt_loss(batch, verbalizer, *index, backend, state, &pg);
        for (auto& b : pg.state.blocks) grads.emplace_back(b);
        if (learn_lambda) {
          std::size_t k = 0;
          for (const auto& per_type : pg.lambda)
            for (double g : per_type) lambda_grad[k++] = g;
          grads.emplace_back(lambda_grad);
        }
        for (std::size_t b = 0; b < state.blocks.size(); ++b) {
          params.push_back({state.blocks[b].values, pg.state.blocks[b], decays(state.blocks[b].name)});
        }
        if (learn_lambda) params.push_back({lambda, lambda_grad, false});
      } else {
        std::vector<TypingExample> batch;
        for (std::size_t i = 0; i < n; ++i) batch.push_back(train_set.examples[order[start + i]]);
        fg = FtGradient::zeros_like(state, *head);
        loss = ft_loss(batch, schema, *head, backend, state, &fg);
        for (auto& b : fg.state.blocks) grads.emplace_back(b);
        grads.emplace_back(fg.head.weight);
        grads.emplace_back(fg.head.bias);
        for (std::size_t b = 0; b < state.blocks.size(); ++b) {
          params.push_back({state.blocks[b].values, fg.state.blocks[b], decays(state.blocks[b].name)});
        }
        params.push_back({head->weight, fg.head.weight, true});
        params.push_back({head->bias, fg.head.bias, false});
      }
      clip_global_norm(grads, config.clip_norm);
      optimizer.step(params);
      if (learn_lambda) {
        write_weights(verbalizer, lambda);  // projection onto lambda >= 0
        lambda = flatten_weights(verbalizer);
      }
      ++step;
      loss_since_eval += loss;
      ++batches_since_eval;
      if (step % config.eval_every_steps == 0) run_eval();
    }
  }
  if (step % config.eval_every_steps != 0) run_eval();

  report.steps = step;
  report.final_train_loss = full_loss();

  const auto test_preds = prompt_mode
                              ? predict_prompt(test_set, config.template_spec, best_verbalizer, backend, best_state)
                              : predict_ft(test_set, schema, *best_head, backend, best_state);
  report.test = evaluate_predictions(test_set, test_preds);
  return {std::move(best_state), std::move(best_head), std::move(best_verbalizer), std::move(report)};
}

}  // namespace fet
