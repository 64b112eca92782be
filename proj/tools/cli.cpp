#include "cli.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "fet/datasets.hpp"
#include "fet/errors.hpp"
#include "fet/metrics.hpp"
#include "fet/selfsup.hpp"
#include "fet/templates.hpp"
#include "fet/toy_backend.hpp"
#include "fet/training.hpp"
#include "fet/typing_model.hpp"
#include "fet/verbalizer.hpp"
#include "json.hpp"
#include "manifest.hpp"

namespace fet::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// State shared by all subcommands of one run.
struct Context {
  std::ostream& out;
  RunManifest manifest;

  void input(const std::string& path) {
    if (!path.empty()) manifest.inputs[path] = sha256_path(path);
  }
  void output(const std::string& path) { manifest.outputs.push_back(path); }
  // Writes a result either to `path` or to standard output.
  void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
      out << text;
    } else {
      write_text(path, text);
      output(path);
    }
  }
};

struct ModelOptions {
  std::string backend;
  std::string state;
  std::string verbalizer;
  std::string template_name = "t3";
  std::size_t soft_len = 2;
  std::string format = "canonical";

  void add(CLI::App* app, bool with_template = true) {
    app->add_option("--backend", backend, "toy backend configuration (JSON)");
    app->add_option("--state", state, "encoder state directory");
    app->add_option("--verbalizer", verbalizer, "verbalizer file (JSON)");
    app->add_option("--format", format, "dataset format")
        ->check(CLI::IsMember({"canonical", "fewnerd", "ontonotes", "bbn"}))
        ->capture_default_str();
    if (with_template) {
      app->add_option("--template", template_name, "prompt template")
          ->check(CLI::IsMember({"t1", "t2", "t3", "t3b", "soft"}))
          ->capture_default_str();
      app->add_option("--soft-len", soft_len, "number of learnable tokens in the soft template")
          ->capture_default_str();
    }
  }

  TemplateSpec spec() const { return TemplateSpec::parse(template_name, soft_len); }
  DatasetFormat dataset_format() const { return parse_dataset_format(format); }
};

std::unique_ptr<MlmBackend> make_backend(Context& ctx, const std::string& path) {
  if (path.empty()) return std::make_unique<ToyBackend>(ToyBackendConfig{});
  ctx.input(path);
  const std::string text = read_text(path);
  try {
    const json doc = json::parse(text);
    const std::string kind = doc.value("kind", std::string("toy"));
    if (kind != "toy") throw CapabilityError("backend '" + kind + "' is not available in this build");
  } catch (const json::exception& e) {
    throw ConfigError("backend configuration is not valid JSON: " + std::string(e.what()));
  }
  return std::make_unique<ToyBackend>(ToyBackendConfig::from_json(text));
}

Verbalizer load_verbalizer(Context& ctx, const std::string& path) {
  if (path.empty()) throw ConfigError("--verbalizer is required");
  ctx.input(path);
  return Verbalizer::load(path);
}

void collect_words(const TypingDataset& d, std::set<std::string>& words) {
  for (const auto& x : d.examples) words.insert(x.tokens.begin(), x.tokens.end());
}

// Loads --state, or builds a fresh one whose vocabulary covers `words`.
EncoderState make_state(Context& ctx, const MlmBackend& backend, const std::string& dir,
                        const std::set<std::string>& words, const Verbalizer& verbalizer, std::uint64_t seed) {
  if (!dir.empty()) {
    ctx.input(dir);
    auto state = EncoderState::load(dir);
    if (state.backend != backend.kind()) {
      throw CapabilityError("state was produced by backend '" + state.backend + "', which is not available");
    }
    return state;
  }
  std::vector<std::string> all(words.begin(), words.end());
  const auto& v = verbalizer.union_vocabulary();
  all.insert(all.end(), v.begin(), v.end());
  return backend.initial_state(all, seed);
}

TypingDataset load_data(Context& ctx, const std::string& path, DatasetFormat format, const LabelSchema* schema,
                        const std::string& split) {
  ctx.input(path);
  return load_dataset(path, format, schema, split);
}

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

// ---------------------------------------------------------------- commands

struct PrepareVerbalizer {
  std::string schema, data, related, out, separator = "/", format = "canonical";
  std::size_t expansion_k = 0;

  void add(CLI::App* app) {
    auto* s = app->add_option("--schema", schema, "type labels, one per line");
    auto* d = app->add_option("--data", data, "dataset to read the labels from");
    s->excludes(d);
    app->add_option("--format", format, "format of --data")
        ->check(CLI::IsMember({"canonical", "fewnerd", "ontonotes", "bbn"}))
        ->capture_default_str();
    app->add_option("--separator", separator, "level separator in --schema labels")->capture_default_str();
    app->add_option("--related", related, "related-word source (JSON)");
    app->add_option("--expansion-k", expansion_k, "related words added per type")->capture_default_str();
    app->add_option("--out", out, "verbalizer output path")->required();
  }

  void operator()(Context& ctx) const {
    LabelSchema label_schema;
    if (!schema.empty()) {
      ctx.input(schema);
      label_schema = parse_label_schema(read_lines(schema), separator, fs::path(schema).stem().string());
    } else if (!data.empty()) {
      ctx.input(data);
      label_schema = LabelSchema(scan_labels(data, parse_dataset_format(format)));
    } else {
      throw ConfigError("one of --schema or --data is required");
    }
    std::optional<RelatedWordSource> source;
    if (!related.empty()) {
      ctx.input(related);
      source = RelatedWordSource::load(related);
    }
    const auto v = build_verbalizer(label_schema, source ? &*source : nullptr, expansion_k);
    v.save(out);
    ctx.output(out);
    std::size_t words = 0;
    for (std::size_t t = 0; t < v.type_count(); ++t) words += v.words(t).size();
    nlohmann::ordered_json summary;
    summary["types"] = v.type_count();
    summary["label_words"] = words;
    summary["union_vocabulary"] = v.union_vocabulary().size();
    ctx.out << summary.dump() << "\n";
  }
};

struct SampleFewshot {
  std::string data, format = "canonical", out, dev_out;
  std::vector<std::string> exclude;
  std::size_t k = 1;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--data", data, "labeled pool")->required();
    app->add_option("--format", format, "dataset format")
        ->check(CLI::IsMember({"canonical", "fewnerd", "ontonotes", "bbn"}))
        ->capture_default_str();
    app->add_option("--k", k, "examples per type")->required()->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "sampling seed")->capture_default_str();
    app->add_option("--exclude", exclude, "type ids to drop before sampling");
    app->add_option("--out", out, "k-shot training set (canonical JSONL)")->required();
    app->add_option("--dev-out", dev_out, "also write an equally sized dev sample");
  }

  void operator()(Context& ctx) const {
    ctx.manifest.seeds["seed"] = seed;
    auto pool = load_data(ctx, data, parse_dataset_format(format), nullptr, "train");
    if (!exclude.empty()) pool = exclude_types(pool, exclude);
    nlohmann::ordered_json summary;
    summary["k"] = k;
    summary["types"] = pool.schema.size();
    if (dev_out.empty()) {
      const auto sample = sample_fewshot(pool, k, seed);
      save_dataset(sample, out);
      summary["train"] = sample.size();
    } else {
      const auto split = sample_fewshot_split(pool, k, seed);
      save_dataset(split.train, out);
      save_dataset(split.dev, dev_out);
      ctx.output(dev_out);
      summary["train"] = split.train.size();
      summary["dev"] = split.dev.size();
    }
    ctx.output(out);
    ctx.out << summary.dump() << "\n";
  }
};

struct GeneratePairs {
  std::string corpus, dict, out;
  std::size_t count = 1000, shards = 1;
  double alpha = 0.4;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus, "entity-linked sentences (JSONL)")->required();
    app->add_option("--dict", dict, "entity type dictionary (JSON)")->required();
    app->add_option("--count", count, "pairs per polarity")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--alpha", alpha, "entity hiding probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    app->add_option("--seed", seed, "base seed")->capture_default_str();
    app->add_option("--shards", shards, "corpus shards processed concurrently")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--out", out, "pair file (JSONL)")->required();
  }

  void operator()(Context& ctx) const {
    ctx.manifest.seeds["seed"] = seed;
    ctx.input(corpus);
    ctx.input(dict);
    const auto sentences = load_linked_corpus(corpus);
    const auto dictionary = TypeDictionary::load(dict);
    SelfSupConfig cfg;
    cfg.c = count;
    cfg.alpha = alpha;
    cfg.seed = seed;
    const auto pairs = shards == 1 ? generate_pairs(sentences, dictionary, cfg)
                                   : generate_pairs_sharded(sentences, dictionary, cfg, shards);
    write_text(out, pairs_to_jsonl(pairs));
    ctx.output(out);
    std::size_t hidden = 0;
    for (const auto& p : pairs.pairs) hidden += p.a.hidden + p.b.hidden;
    nlohmann::ordered_json summary;
    summary["positive"] = pairs.count(Polarity::positive);
    summary["negative"] = pairs.count(Polarity::negative);
    summary["hidden_fraction"] = static_cast<double>(hidden) / static_cast<double>(2 * pairs.size());
    ctx.out << summary.dump() << "\n";
  }
};

struct Train {
  ModelOptions model;
  std::string train, dev, test, out, mode = "prompt";
  std::size_t shots = 0;
  TrainConfig defaults;
  double lr = defaults.learning_rate;
  std::size_t batch_size = defaults.batch_size, epochs = defaults.epochs, eval_every = defaults.eval_every_steps;
  double weight_decay = defaults.weight_decay, clip_norm = defaults.clip_norm;
  bool lambda_learnable = false;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    model.add(app);
    app->add_option("--mode", mode, "ft or prompt")->check(CLI::IsMember({"ft", "prompt"}))->capture_default_str();
    app->add_option("--train", train, "training data")->required();
    app->add_option("--dev", dev, "dev data (default: a k-shot sample from --train when --shots is set)");
    app->add_option("--test", test, "test data");
    app->add_option("--shots", shots, "examples per type sampled from --train (0 uses all)")->capture_default_str();
    app->add_option("--seed", seed, "seed for sampling, initialization and shuffling")->capture_default_str();
    app->add_option("--lr", lr, "learning rate")->capture_default_str();
    app->add_option("--batch-size", batch_size, "batch size")->capture_default_str();
    app->add_option("--epochs", epochs, "epochs")->capture_default_str();
    app->add_option("--eval-every", eval_every, "dev evaluation interval in steps")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "decoupled weight decay")->capture_default_str();
    app->add_option("--clip-norm", clip_norm, "global gradient norm limit")->capture_default_str();
    app->add_flag("--lambda-learnable", lambda_learnable, "learn the label-word weights");
    app->add_option("--out", out, "directory for the best checkpoint and report")->required();
  }

  void operator()(Context& ctx) const {
    ctx.manifest.seeds["seed"] = seed;
    auto verbalizer = load_verbalizer(ctx, model.verbalizer);
    const auto& schema = verbalizer.schema();
    const auto format = model.dataset_format();
    auto train_set = load_data(ctx, train, format, &schema, "train");
    TypingDataset dev_set{"dev", schema, {}};
    TypingDataset test_set{"test", schema, {}};
    if (!dev.empty()) dev_set = load_data(ctx, dev, format, &schema, "dev");
    if (!test.empty()) test_set = load_data(ctx, test, format, &schema, "test");
    if (shots > 0) {
      if (dev.empty()) {
        auto split = sample_fewshot_split(train_set, shots, seed);
        train_set = std::move(split.train);
        dev_set = std::move(split.dev);
      } else {
        train_set = sample_fewshot(train_set, shots, seed);
      }
    }

    TrainConfig cfg;
    cfg.mode = parse_train_mode(mode);
    cfg.template_spec = model.spec();
    cfg.learning_rate = lr;
    cfg.batch_size = batch_size;
    cfg.epochs = epochs;
    cfg.eval_every_steps = eval_every;
    cfg.weight_decay = weight_decay;
    cfg.clip_norm = clip_norm;
    cfg.lambda_learnable = lambda_learnable;
    cfg.seed = seed;
    cfg.validate();

    const auto backend = make_backend(ctx, model.backend);
    std::set<std::string> words;
    collect_words(train_set, words);
    collect_words(dev_set, words);
    collect_words(test_set, words);
    auto state = make_state(ctx, *backend, model.state, words, verbalizer, seed);

    auto result = fet::train(cfg, train_set, dev_set, test_set, std::move(verbalizer), *backend, std::move(state));
    const fs::path dir(out);
    fs::create_directories(dir);
    result.state.save(dir / "state");
    ctx.output((dir / "state").string());
    result.verbalizer.save(dir / "verbalizer.json");
    ctx.output((dir / "verbalizer.json").string());
    if (result.head) {
      result.head->save(dir / "head.json");
      ctx.output((dir / "head.json").string());
    }
    result.report.checkpoint = (dir / "state").string();
    const std::string report = result.report.to_json() + "\n";
    write_text(dir / "report.json", report);
    ctx.output((dir / "report.json").string());
    ctx.out << report;
  }
};

struct PretrainSelfsup {
  ModelOptions model;
  std::string pairs, schema, related, out, separator = "/";
  std::size_t expansion_k = 0;
  SelfSupConfig defaults;
  double gamma = defaults.gamma, lr = defaults.learning_rate, weight_decay = defaults.weight_decay,
         clip_norm = defaults.clip_norm;
  std::size_t batch_size = defaults.batch_size, epochs = defaults.epochs, max_steps = 0;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    model.add(app, false);
    app->add_option("--pairs", pairs, "pair file from generate-pairs")->required();
    auto* s = app->add_option("--schema", schema, "type labels, one per line (builds the verbalizer)");
    s->excludes(app->get_option("--verbalizer"));
    app->add_option("--separator", separator, "level separator in --schema labels")->capture_default_str();
    app->add_option("--related", related, "related-word source for --schema");
    app->add_option("--expansion-k", expansion_k, "related words added per type")->capture_default_str();
    app->add_option("--gamma", gamma, "negative-pair penalty")->capture_default_str();
    app->add_option("--seed", seed, "seed for initialization and shuffling")->capture_default_str();
    app->add_option("--lr", lr, "learning rate")->capture_default_str();
    app->add_option("--batch-size", batch_size, "pairs per step")->capture_default_str();
    app->add_option("--epochs", epochs, "passes over the pairs")->capture_default_str();
    app->add_option("--max-steps", max_steps, "stop after this many steps (0: no limit)")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "decoupled weight decay")->capture_default_str();
    app->add_option("--clip-norm", clip_norm, "global gradient norm limit")->capture_default_str();
    app->add_option("--out", out, "directory for the pre-trained state")->required();
  }

  void operator()(Context& ctx) const {
    ctx.manifest.seeds["seed"] = seed;
    std::optional<Verbalizer> verbalizer;
    if (!schema.empty()) {
      ctx.input(schema);
      const auto label_schema =
          parse_label_schema(read_lines(schema), separator, fs::path(schema).stem().string());
      std::optional<RelatedWordSource> source;
      if (!related.empty()) {
        ctx.input(related);
        source = RelatedWordSource::load(related);
      }
      verbalizer = build_verbalizer(label_schema, source ? &*source : nullptr, expansion_k);
    } else {
      verbalizer = load_verbalizer(ctx, model.verbalizer);
    }
    ctx.input(pairs);
    const auto pair_data = load_pairs(pairs);

    SelfSupConfig cfg;
    cfg.c = std::max<std::size_t>(1, pair_data.size());
    cfg.gamma = gamma;
    cfg.seed = seed;
    cfg.learning_rate = lr;
    cfg.batch_size = batch_size;
    cfg.epochs = epochs;
    cfg.max_steps = max_steps;
    cfg.weight_decay = weight_decay;
    cfg.clip_norm = clip_norm;
    cfg.validate();

    const auto backend = make_backend(ctx, model.backend);
    std::set<std::string> words;
    for (const auto& p : pair_data.pairs) {
      words.insert(p.a.tokens.begin(), p.a.tokens.end());
      words.insert(p.b.tokens.begin(), p.b.tokens.end());
    }
    auto state = make_state(ctx, *backend, model.state, words, *verbalizer, seed);
    auto result = pretrain(cfg, pair_data, *verbalizer, *backend, std::move(state));

    const fs::path dir(out);
    fs::create_directories(dir);
    result.state.save(dir / "state");
    ctx.output((dir / "state").string());
    verbalizer->save(dir / "verbalizer.json");
    ctx.output((dir / "verbalizer.json").string());

    nlohmann::ordered_json summary;
    summary["steps"] = result.step_losses.size();
    summary["initial_loss"] = result.step_losses.empty() ? 0.0 : result.step_losses.front();
    summary["final_loss"] = result.step_losses.empty() ? 0.0 : result.step_losses.back();
    summary["step_losses"] = result.step_losses;
    const std::string report = summary.dump() + "\n";
    write_text(dir / "pretrain.json", report);
    ctx.output((dir / "pretrain.json").string());
    ctx.out << report;
  }
};

// Reads {"id", "predicted_type"} rows and lines them up with the gold set.
std::pair<std::vector<EntityType>, std::vector<EntityType>> align_predictions(Context& ctx, const std::string& pred,
                                                                              const std::string& gold,
                                                                              DatasetFormat format) {
  const auto golds = load_data(ctx, gold, format, nullptr, "gold");
  ctx.input(pred);
  std::map<std::string, EntityType> by_id;
  std::istringstream in(read_text(pred));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json row = json::parse(line);
      const auto id = row.at("id").get<std::string>();
      if (!by_id.emplace(id, EntityType::parse(row.at("predicted_type").get<std::string>())).second) {
        throw DataError("duplicate prediction id '" + id + "'");
      }
    } catch (const json::exception& e) {
      throw DataError(pred + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw DataError(pred + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<EntityType> p, g;
  for (const auto& x : golds.examples) {
    auto it = by_id.find(x.id);
    if (it == by_id.end()) throw DataError("no prediction for gold example '" + x.id + "'");
    p.push_back(it->second);
    g.push_back(x.gold_type);
  }
  if (by_id.size() != g.size()) {
    spdlog::warn("{} predictions have no gold example and are ignored", by_id.size() - g.size());
  }
  return {std::move(p), std::move(g)};
}

struct Evaluate {
  std::string pred, gold, format = "canonical", macro = "mean-pr", out;

  void add(CLI::App* app) {
    app->add_option("--pred", pred, "predictions (JSONL with id and predicted_type)")->required();
    app->add_option("--gold", gold, "gold dataset")->required();
    app->add_option("--format", format, "format of --gold")
        ->check(CLI::IsMember({"canonical", "fewnerd", "ontonotes", "bbn"}))
        ->capture_default_str();
    app->add_option("--macro", macro, "loose macro aggregation")
        ->check(CLI::IsMember({"mean-pr", "mean-f1"}))
        ->capture_default_str();
    app->add_option("--out", out, "write the result here instead of standard output");
  }

  void operator()(Context& ctx) const {
    const auto [p, g] = align_predictions(ctx, pred, gold, parse_dataset_format(format));
    const auto result =
        evaluate(p, g, macro == "mean-f1" ? MacroAverage::mean_f1 : MacroAverage::mean_precision_recall);
    ctx.emit(out, result.to_json() + "\n");
  }
};

struct Predict {
  ModelOptions model;
  std::string data, mode = "prompt", head, out;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    model.add(app);
    app->add_option("--data", data, "examples to type")->required();
    app->add_option("--mode", mode, "ft or prompt")->check(CLI::IsMember({"ft", "prompt"}))->capture_default_str();
    app->add_option("--head", head, "fine-tuning head (ft mode)");
    app->add_option("--seed", seed, "seed for a fresh state when --state is absent")->capture_default_str();
    app->add_option("--out", out, "predictions (JSONL); standard output by default");
  }

  void operator()(Context& ctx) const {
    ctx.manifest.seeds["seed"] = seed;
    const auto verbalizer = load_verbalizer(ctx, model.verbalizer);
    const auto& schema = verbalizer.schema();
    // Labels are optional at prediction time, so the file's own labels are not checked against the schema.
    const auto dataset = load_data(ctx, data, model.dataset_format(), nullptr, "predict");
    const auto backend = make_backend(ctx, model.backend);
    std::set<std::string> words;
    collect_words(dataset, words);
    auto state = make_state(ctx, *backend, model.state, words, verbalizer, seed);

    std::string text;
    auto write_row = [&](const std::string& id, const TypeScores& scores) {
      nlohmann::ordered_json row;
      row["id"] = id;
      row["predicted_type"] = schema.at(argmax_type(scores)).canonical_id();
      nlohmann::ordered_json dist = nlohmann::ordered_json::object();
      for (std::size_t t = 0; t < schema.size(); ++t) dist[schema.at(t).canonical_id()] = scores.values[t];
      row["normalized_scores"] = dist;
      text += row.dump() + "\n";
    };
    if (parse_train_mode(mode) == TrainMode::ft) {
      if (head.empty()) throw ConfigError("--head is required in ft mode");
      ctx.input(head);
      const auto h = FineTuneHead::load(head);
      for (const auto& x : dataset.examples) write_row(x.id, ft_scores(x, h, *backend, state));
    } else {
      const auto spec = model.spec();
      if (spec.kind() == TemplateKind::soft) {
        ensure_special_tokens(*backend, state, spec.special_token_names(), seed);
      }
      const LabelWordIndex index(verbalizer, *backend, state);
      for (const auto& x : dataset.examples) {
        write_row(x.id, score_types(backend->mask_distribution(render(spec, x), state), verbalizer, index));
      }
    }
    ctx.emit(out, text);
  }
};

struct ReportTypes {
  std::string pred, gold, format = "canonical", out;
  std::size_t top = 5;

  void add(CLI::App* app) {
    app->add_option("--pred", pred, "predictions (JSONL with id and predicted_type)")->required();
    app->add_option("--gold", gold, "gold dataset")->required();
    app->add_option("--format", format, "format of --gold")
        ->check(CLI::IsMember({"canonical", "fewnerd", "ontonotes", "bbn"}))
        ->capture_default_str();
    app->add_option("--top", top, "most frequent predictions listed per type")->capture_default_str();
    app->add_option("--out", out, "CSV path; standard output by default");
  }

  void operator()(Context& ctx) const {
    const auto [p, g] = align_predictions(ctx, pred, gold, parse_dataset_format(format));
    ctx.emit(out, to_csv(per_type_report(p, g), top));
  }
};

std::map<std::string, std::string> resolved_options(const CLI::App* app) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const auto& results = opt->results();
    std::string value;
    if (results.empty()) {
      value = opt->get_default_str();
    } else {
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
    }
    out[opt->get_lnames().front()] = value;
  }
  return out;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CapabilityError*>(&e)) return kCapabilityError;
  if (dynamic_cast<const ConfigError*>(&e)) return kUsageError;
  if (dynamic_cast<const Error*>(&e)) return kDataError;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kDataError;
  return kInternalError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("fet", sink);
  logger->set_pattern("[%l] %v");
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  struct RestoreLogger {
    std::shared_ptr<spdlog::logger> previous;
    ~RestoreLogger() { spdlog::set_default_logger(previous); }
  } restore{previous};

  CLI::App app{"Fine-grained entity typing with prompt-learning", "fet"};
  app.set_config("--config", "", "TOML file with option values; flags override it");
  app.require_subcommand(1);
  std::string manifest_path = "manifest.json";
  std::string log_level = "warn";
  app.add_option("--manifest", manifest_path, "where to write the run manifest")->capture_default_str();
  app.add_option("--log-level", log_level, "stderr log level")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  PrepareVerbalizer prepare;
  SampleFewshot sample;
  GeneratePairs pairs;
  Train train_cmd;
  PretrainSelfsup pretrain_cmd;
  Evaluate evaluate_cmd;
  Predict predict_cmd;
  ReportTypes report;

  std::map<std::string, std::function<void(Context&)>> handlers;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    handlers[name] = [&cmd](Context& ctx) { cmd(ctx); };
  };
  add("prepare-verbalizer", "build a verbalizer from a label schema", prepare);
  add("sample-fewshot", "draw a k-shot training set", sample);
  add("generate-pairs", "mine positive and negative pairs from an entity-linked corpus", pairs);
  add("train", "train a prompt or fine-tuning model", train_cmd);
  add("pretrain-selfsup", "self-supervised pre-training on sentence pairs", pretrain_cmd);
  add("evaluate", "score predictions against gold labels", evaluate_cmd);
  add("predict", "type the mentions of a dataset", predict_cmd);
  add("report-types", "per-type error breakdown as CSV", report);

  Context ctx{out, {}};
  ctx.manifest.version = kVersion;
  int code = kOk;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    logger->set_level(spdlog::level::from_str(log_level));
    CLI::App* sub = app.get_subcommands().front();
    ctx.manifest.subcommand = sub->get_name();
    ctx.manifest.config = resolved_options(sub);
    handlers.at(sub->get_name())(ctx);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << app.get_subcommands().front()->help();
    code = kUsageError;
    ctx.manifest.error = e.what();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = exit_code_for(e);
    ctx.manifest.error = e.what();
  }
  if (ctx.manifest.subcommand.empty() && !app.get_subcommands().empty()) {
    ctx.manifest.subcommand = app.get_subcommands().front()->get_name();
  }
  ctx.manifest.exit_code = code;
  ctx.manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  try {
    ctx.manifest.write(manifest_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    if (code == kOk) code = kDataError;
  }
  return code;
}

}  // namespace fet::cli
