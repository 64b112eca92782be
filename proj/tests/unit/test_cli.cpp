#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

#include "cli.hpp"
#include "fet/metrics.hpp"
#include "manifest.hpp"
#include "synthetic_world.hpp"
#include "temp_dir.hpp"

using namespace fet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

class Cli : public ::testing::Test {
 protected:
  fet::testing::TempDir tmp;
  fet::testing::SyntheticWorld world;

  std::string path(const std::string& name) const { return (tmp / name).string(); }

  RunResult run(std::vector<std::string> args, bool with_manifest = true) {
    if (with_manifest) {
      args.insert(args.begin(), path("manifest.json"));
      args.insert(args.begin(), "--manifest");
    }
    std::ostringstream out, err;
    RunResult r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
  }

  json manifest() const { return json::parse(slurp(tmp / "manifest.json")); }

  void write_world_files() {
    save_dataset(world.dataset("pool", 6, false, 1), tmp / "pool.jsonl");
    save_dataset(world.dataset("test", 5, true, 2), tmp / "test.jsonl");
    world.verbalizer().save(tmp / "verbalizer.json");
    spit(tmp / "toy.json", world.toy_config().to_json());
  }

  void write_corpus() {
    std::string text;
    for (const auto& s : world.linked_corpus(600, 3)) {
      json row;
      row["tokens"] = s.tokens;
      row["mention"] = {s.mention.begin, s.mention.end};
      row["entity_id"] = s.entity_id;
      row["surface"] = s.surface;
      text += row.dump() + "\n";
    }
    spit(tmp / "corpus.jsonl", text);
    json dict = json::object();
    for (std::size_t t = 0; t < world.type_count(); ++t) {
      const auto& id = world.schema().at(t).canonical_id();
      for (std::size_t e = 0; e < world.options().entities_per_type; ++e) {
        dict[world.entity_id(t, e)] = id.substr(0, id.find('/'));
      }
    }
    spit(tmp / "dict.json", dict.dump());
    std::string labels;
    for (const auto& t : world.schema().types()) labels += t.canonical_id() + "\n";
    spit(tmp / "schema.txt", labels);
  }
};

}  // namespace

TEST_F(Cli, MissingSubcommandIsUsageError) {
  const auto r = run({});
  EXPECT_EQ(r.code, cli::kUsageError);
  EXPECT_EQ(manifest()["exit_code"], 2);
  EXPECT_FALSE(manifest()["error"].get<std::string>().empty());
}

TEST_F(Cli, UnknownOptionIsUsageError) {
  EXPECT_EQ(run({"evaluate", "--bogus"}).code, cli::kUsageError);
  EXPECT_EQ(run({"evaluate", "--macro", "median", "--pred", "a", "--gold", "b"}).code, cli::kUsageError);
  EXPECT_EQ(manifest()["subcommand"], "evaluate");
}

TEST_F(Cli, HelpExitsCleanly) {
  const auto r = run({"--help"}, false);
  EXPECT_EQ(r.code, cli::kOk);
  EXPECT_NE(r.out.find("sample-fewshot"), std::string::npos);
  const auto sub = run({"train", "--help"}, false);
  EXPECT_EQ(sub.code, cli::kOk);
  EXPECT_NE(sub.out.find("--lambda-learnable"), std::string::npos);
}

TEST_F(Cli, MissingInputIsDataError) {
  const auto r = run({"evaluate", "--pred", path("nope.jsonl"), "--gold", path("nope2.jsonl")});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find("cannot open"), std::string::npos) << r.err;
  EXPECT_EQ(manifest()["exit_code"], 3);
}

TEST_F(Cli, BadDataReportsLine) {
  spit(tmp / "bad.jsonl", "{\"tokens\": [\"a\"], \"mention_span\": [0, 1], \"label\": \"x\"}\n{oops\n");
  const auto r = run({"sample-fewshot", "--data", path("bad.jsonl"), "--k", "1", "--out", path("o.jsonl")});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, UnavailableBackendIsCapabilityError) {
  write_world_files();
  spit(tmp / "bert.json", R"({"kind": "bert-base"})");
  const auto r = run({"predict", "--backend", path("bert.json"), "--verbalizer", path("verbalizer.json"), "--data",
                      path("test.jsonl")});
  EXPECT_EQ(r.code, cli::kCapabilityError);
  EXPECT_EQ(manifest()["exit_code"], 4);
}

TEST_F(Cli, PrepareVerbalizerFromSchema) {
  const std::string data = FET_TEST_DATA_DIR;
  const auto r = run({"prepare-verbalizer", "--schema", data + "/schema.txt", "--related",
                      data + "/related_words.json", "--expansion-k", "2", "--out", path("v.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto v = Verbalizer::load(tmp / "v.json");
  EXPECT_EQ(v.type_count(), 3u);
  EXPECT_EQ(json::parse(r.out)["types"], 3);
  EXPECT_EQ(run({"prepare-verbalizer", "--out", path("v2.json")}).code, cli::kUsageError);
}

TEST_F(Cli, SampleFewshotIsByteIdenticalAndLeavesInputAlone) {
  write_world_files();
  const auto before = cli::sha256_file(tmp / "pool.jsonl");
  for (const char* name : {"a.jsonl", "b.jsonl"}) {
    const auto r = run({"sample-fewshot", "--data", path("pool.jsonl"), "--k", "2", "--seed", "7", "--out", path(name)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  EXPECT_EQ(slurp(tmp / "a.jsonl"), slurp(tmp / "b.jsonl"));
  EXPECT_EQ(cli::sha256_file(tmp / "pool.jsonl"), before);
  const auto m = manifest();
  EXPECT_EQ(m["subcommand"], "sample-fewshot");
  EXPECT_EQ(m["seeds"]["seed"], 7);
  EXPECT_EQ(m["inputs"][path("pool.jsonl")], before);
  EXPECT_EQ(m["config"]["k"], "2");
  EXPECT_EQ(m["exit_code"], 0);
  const auto sample = load_dataset(tmp / "a.jsonl", DatasetFormat::canonical);
  EXPECT_EQ(sample.size(), 2 * world.type_count());
}

TEST_F(Cli, ConfigFileSuppliesDefaultsAndFlagsWin) {
  write_world_files();
  spit(tmp / "run.toml", "[sample-fewshot]\nk = 3\nseed = 4\n");
  auto r = run({"--config", path("run.toml"), "sample-fewshot", "--data", path("pool.jsonl"), "--out", path("c.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["train"], 3 * world.type_count());
  EXPECT_EQ(manifest()["seeds"]["seed"], 4);
  r = run({"--config", path("run.toml"), "sample-fewshot", "--data", path("pool.jsonl"), "--k", "1", "--out",
           path("d.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["train"], world.type_count());
}

TEST_F(Cli, PredictThenEvaluate) {
  write_world_files();
  auto r = run({"predict", "--backend", path("toy.json"), "--verbalizer", path("verbalizer.json"), "--data",
                path("test.jsonl"), "--out", path("pred.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(slurp(tmp / "pred.jsonl"));
  std::string line;
  std::vector<EntityType> preds;
  while (std::getline(lines, line)) {
    const auto row = json::parse(line);
    double total = 0;
    for (const auto& [_, v] : row["normalized_scores"].items()) total += v.get<double>();
    EXPECT_NEAR(total, 1.0, 1e-9);
    preds.push_back(EntityType::parse(row["predicted_type"].get<std::string>()));
  }
  const auto gold = load_dataset(tmp / "test.jsonl", DatasetFormat::canonical);
  ASSERT_EQ(preds.size(), gold.size());

  r = run({"evaluate", "--pred", path("pred.jsonl"), "--gold", path("test.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::vector<EntityType> golds;
  for (const auto& x : gold.examples) golds.push_back(x.gold_type);
  const auto expected = evaluate(preds, golds);
  const auto got = json::parse(r.out);
  EXPECT_EQ(r.out, expected.to_json() + "\n");
  EXPECT_DOUBLE_EQ(got["strict_acc"].get<double>(), expected.strict_accuracy);

  r = run({"report-types", "--pred", path("pred.jsonl"), "--gold", path("test.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("gold_type,support,", 0), 0u) << r.out;
}

TEST_F(Cli, EvaluateRejectsMissingPrediction) {
  write_world_files();
  spit(tmp / "pred.jsonl", "{\"id\": \"nobody\", \"predicted_type\": \"location\"}\n");
  EXPECT_EQ(run({"evaluate", "--pred", path("pred.jsonl"), "--gold", path("test.jsonl")}).code, cli::kDataError);
}

TEST_F(Cli, TrainWritesCheckpointAndReport) {
  write_world_files();
  const std::vector<std::string> args = {"train", "--backend", path("toy.json"), "--verbalizer",
                                         path("verbalizer.json"), "--train", path("pool.jsonl"), "--test",
                                         path("test.jsonl"), "--shots", "1", "--lr", "0.01", "--epochs", "4",
                                         "--eval-every", "2", "--seed", "3", "--out", path("run1")};
  auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = json::parse(r.out);
  EXPECT_EQ(report["mode"], "prompt");
  EXPECT_TRUE(fs::exists(tmp / "run1" / "state" / "weights.bin"));
  EXPECT_EQ(slurp(tmp / "run1" / "report.json"), r.out);

  auto again = args;
  again.back() = path("run2");
  ASSERT_EQ(run(again).code, 0);
  EXPECT_EQ(slurp(tmp / "run1" / "state" / "weights.bin"), slurp(tmp / "run2" / "state" / "weights.bin"));

  r = run({"predict", "--backend", path("toy.json"), "--verbalizer", path("run1/verbalizer.json"), "--state",
           path("run1/state"), "--data", path("test.jsonl")});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(Cli, FineTuneModeSavesHead) {
  write_world_files();
  auto r = run({"train", "--mode", "ft", "--backend", path("toy.json"), "--verbalizer", path("verbalizer.json"),
                "--train", path("pool.jsonl"), "--epochs", "2", "--lr", "0.01", "--out", path("ft")});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(tmp / "ft" / "head.json"));
  r = run({"predict", "--mode", "ft", "--backend", path("toy.json"), "--verbalizer", path("verbalizer.json"),
           "--state", path("ft/state"), "--head", path("ft/head.json"), "--data", path("pool.jsonl")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(run({"predict", "--mode", "ft", "--verbalizer", path("verbalizer.json"), "--data", path("pool.jsonl")}).code,
            cli::kUsageError);
}

TEST_F(Cli, GeneratePairsThenPretrain) {
  write_world_files();
  write_corpus();
  auto r = run({"generate-pairs", "--corpus", path("corpus.jsonl"), "--dict", path("dict.json"), "--count", "40",
                "--seed", "2", "--shards", "2", "--out", path("pairs.jsonl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = json::parse(r.out);
  EXPECT_EQ(summary["positive"], 40);
  EXPECT_EQ(summary["negative"], 40);
  EXPECT_EQ(load_pairs(tmp / "pairs.jsonl").size(), 80u);

  r = run({"pretrain-selfsup", "--backend", path("toy.json"), "--pairs", path("pairs.jsonl"), "--verbalizer",
           path("verbalizer.json"), "--max-steps", "3", "--lr", "0.01", "--out", path("pre")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["steps"], 3);
  EXPECT_TRUE(fs::exists(tmp / "pre" / "state" / "meta.json"));

  r = run({"pretrain-selfsup", "--pairs", path("pairs.jsonl"), "--schema", path("schema.txt"), "--verbalizer",
           path("verbalizer.json"), "--out", path("pre2")});
  EXPECT_EQ(r.code, cli::kUsageError);

  r = run({"generate-pairs", "--corpus", path("corpus.jsonl"), "--dict", path("dict.json"), "--count", "100000",
           "--out", path("too_many.jsonl")});
  EXPECT_EQ(r.code, cli::kDataError);
  EXPECT_NE(r.err.find("positive"), std::string::npos) << r.err;
}
