#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "fet/datasets.hpp"
#include "fet/errors.hpp"
#include "fet/templates.hpp"

using namespace fet;

namespace {

TypingExample example(std::vector<std::string> tokens, std::size_t b, std::size_t e) {
  return {"x", std::move(tokens), {b, e}, EntityType::parse("person")};
}

std::vector<std::string> golden_lines(const std::string& name) {
  std::ifstream in(std::string(FET_GOLDEN_DIR) + "/templates/" + name + ".txt");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST(RenderHard, FounderSentence) {
  const auto jobs = example({"Steve", "Jobs", "found", "Apple", "."}, 0, 2);
  EXPECT_EQ(render(TemplateSpec::hard(HardTemplate::t3), jobs).text(),
            "Steve Jobs found Apple. In this sentence, Steve Jobs is a [MASK].");
  const auto ny = example({"He", "is", "from", "New", "York"}, 3, 5);
  EXPECT_EQ(render(TemplateSpec::hard(HardTemplate::t1), ny).text(), "He is from New York. New York is [MASK].");
  EXPECT_EQ(render(TemplateSpec::hard(HardTemplate::t2), example({"A"}, 0, 1)).text(), "A. A is a [MASK].");
}

TEST(RenderHard, TracksSpans) {
  const auto p = render(TemplateSpec::hard(HardTemplate::t3), example({"He", "is", "from", "New", "York"}, 3, 5));
  EXPECT_EQ(p.sentence_length, 5u);
  EXPECT_EQ(p.tokens[p.mask_index], kMaskToken);
  EXPECT_GT(p.mask_index, p.sentence_length);
  EXPECT_EQ(p.tokens[p.mention_copy.begin], "New");
  EXPECT_EQ(p.tokens[p.mention_copy.end - 1], "York");
  EXPECT_EQ(p.mention_surface(), "New York");
  EXPECT_FALSE(p.hidden);
  EXPECT_TRUE(p.special_token_names.empty());
}

TEST(RenderHard, EmptyMentionIsRenderError) {
  EXPECT_THROW(render(TemplateSpec::hard(HardTemplate::t1), example({"a", "b"}, 1, 1)), RenderError);
  EXPECT_THROW(render(TemplateSpec::hard(HardTemplate::t1), example({"a", "b"}, 1, 3)), RenderError);
}

TEST(RenderHard, SuffixRemovalRecoversSentence) {
  const auto x = example({"Paris", "is", "nice", "."}, 0, 1);
  for (auto id : {HardTemplate::t1, HardTemplate::t2, HardTemplate::t3, HardTemplate::t3b}) {
    const auto p = render(TemplateSpec::hard(id), x);
    EXPECT_EQ(std::vector<std::string>(p.tokens.begin(), p.tokens.begin() + 4), x.tokens);
  }
}

TEST(RenderSoft, SuffixAndSpecialNames) {
  const auto ny = example({"He", "is", "from", "New", "York"}, 3, 5);
  const auto p = render(TemplateSpec::soft(2), ny);
  EXPECT_EQ(p.text(), "He is from New York [P] New York [P1] [P2] [MASK]");
  EXPECT_EQ(p.special_token_names, (std::vector<std::string>{"[P]", "[P1]", "[P2]"}));
  EXPECT_EQ(render(TemplateSpec::soft(1), example({"X"}, 0, 1)).text(), "X [P] X [P1] [MASK]");
  EXPECT_EQ(TemplateSpec::soft(5).special_token_names().size(), 6u);
}

TEST(TemplateSpec, SoftLengthRange) {
  EXPECT_THROW(TemplateSpec::soft(0), ConfigError);
  EXPECT_THROW(TemplateSpec::soft(17), ConfigError);
  EXPECT_NO_THROW(TemplateSpec::soft(16));
  EXPECT_THROW(TemplateSpec::parse("t9"), ConfigError);
  EXPECT_EQ(TemplateSpec::parse("t3b").name(), "t3b");
  EXPECT_EQ(TemplateSpec::parse("soft", 3).soft_length(), 3u);
}

TEST(ApplyHiding, DegenerateProbabilities) {
  const auto p = render(TemplateSpec::hard(HardTemplate::t3), example({"New", "York", "is", "big"}, 0, 2));
  std::mt19937_64 rng(1);
  EXPECT_EQ(apply_hiding(p, 0.0, rng), p);
  const auto h = apply_hiding(p, 1.0, rng);
  EXPECT_TRUE(h.hidden);
  EXPECT_EQ(h.text(), "[Hide] is big. In this sentence, [Hide] is a [MASK].");
  EXPECT_EQ(h.tokens[h.mask_index], kMaskToken);
  EXPECT_EQ(h.tokens[h.mention.begin], kHideToken);
  EXPECT_EQ(h.tokens[h.mention_copy.begin], kHideToken);
  EXPECT_EQ(count_occurrences(h.tokens, {"New", "York"}), 0u);
  EXPECT_THROW(apply_hiding(p, 1.5, rng), ConfigError);
}

TEST(ApplyHiding, ReplacesEveryOccurrence) {
  const auto p = render(TemplateSpec::soft(2), example({"Bob", "met", "Bob", "."}, 0, 1));
  const auto h = hide_mention(p);
  EXPECT_EQ(count_occurrences(h.tokens, {"Bob"}), 0u);
  EXPECT_EQ(count_occurrences(h.tokens, {std::string(kHideToken)}), 3u);
  EXPECT_EQ(h.text().find("Bob"), std::string::npos);
}

TEST(ApplyHiding, HiddenFractionMatchesAlpha) {
  const auto p = render(TemplateSpec::hard(HardTemplate::t3), example({"New", "York", "is", "big"}, 0, 2));
  std::mt19937_64 rng(2024);
  std::size_t hidden = 0;
  for (int i = 0; i < 10000; ++i) hidden += apply_hiding(p, 0.4, rng).hidden;
  EXPECT_NEAR(hidden / 10000.0, 0.4, 0.02);
}

TEST(Render, ExactlyOneMaskOnRandomCorpora) {
  std::mt19937_64 rng(5);
  const std::vector<std::string> pool = {"a", "b", "c", ".", "?", "New", "York"};
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> tokens(1 + rng() % 8);
    for (auto& t : tokens) t = pool[rng() % pool.size()];
    const std::size_t b = rng() % tokens.size();
    const std::size_t e = b + 1 + rng() % (tokens.size() - b);
    for (const auto& spec : {TemplateSpec::hard(HardTemplate::t1), TemplateSpec::hard(HardTemplate::t3b),
                             TemplateSpec::soft(1 + rng() % 4)}) {
      auto p = render(spec, example(tokens, b, e));
      EXPECT_EQ(count_occurrences(p.tokens, {std::string(kMaskToken)}), 1u);
      p = hide_mention(p);
      EXPECT_EQ(count_occurrences(p.tokens, {std::string(kMaskToken)}), 1u);
      EXPECT_EQ(p.tokens[p.mask_index], kMaskToken);
    }
  }
}

TEST(Render, IsPure) {
  const auto x = example({"Jobs", "ran", "Apple"}, 0, 1);
  EXPECT_EQ(render(TemplateSpec::soft(3), x), render(TemplateSpec::soft(3), x));
}

class GoldenTemplates : public ::testing::TestWithParam<std::pair<const char*, TemplateSpec>> {};

TEST_P(GoldenTemplates, MatchFixtures) {
  const auto& [name, spec] = GetParam();
  const auto data =
      load_dataset(std::string(FET_GOLDEN_DIR) + "/templates/examples.jsonl", DatasetFormat::canonical);
  const auto expected = golden_lines(name);
  ASSERT_EQ(expected.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(render(spec, data.examples[i]).text(), expected[i]) << name << " line " << i + 1;
  }
}

INSTANTIATE_TEST_SUITE_P(AllTemplates, GoldenTemplates,
                         ::testing::Values(std::pair{"t1", TemplateSpec::hard(HardTemplate::t1)},
                                           std::pair{"t2", TemplateSpec::hard(HardTemplate::t2)},
                                           std::pair{"t3", TemplateSpec::hard(HardTemplate::t3)},
                                           std::pair{"t3b", TemplateSpec::hard(HardTemplate::t3b)},
                                           std::pair{"soft1", TemplateSpec::soft(1)},
                                           std::pair{"soft2", TemplateSpec::soft(2)},
                                           std::pair{"soft5", TemplateSpec::soft(5)}),
                         [](const auto& info) { return std::string(info.param.first); });

TEST(Detokenize, PunctuationAttaches) {
  EXPECT_EQ(detokenize({"Hello", ",", "world", "!"}), "Hello, world!");
  EXPECT_EQ(detokenize({"Ada", "'s", "notes", ")"}), "Ada's notes)");
}
