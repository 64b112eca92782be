#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fet/errors.hpp"
#include "fet/templates.hpp"
#include "fet/toy_backend.hpp"
#include "temp_dir.hpp"

using namespace fet;

namespace {

ToyBackendConfig city_config() {
  return ToyBackendConfig::from_json(R"({
    "rules": [
      {"mention": "New York", "words": {"city": 0.9}},
      {"keyword": "summit", "words": {"mountain": 0.5, "location": 0.2}}
    ],
    "vocabulary": ["person"]
  })");
}

PromptedInput prompt(std::vector<std::string> tokens, std::size_t b, std::size_t e,
                     TemplateSpec spec = TemplateSpec::hard(HardTemplate::t3)) {
  return render(spec, TypingExample{"x", std::move(tokens), {b, e}, EntityType::parse("location")});
}

const std::vector<std::string> kWords = {"He", "is", "from", "New", "York", "we", "reached", "the", "summit", "Bob"};

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(Vocabulary, AddFindAndSpecials) {
  Vocabulary v;
  const auto mask = v.add_special(kMaskToken);
  const auto a = v.add("a");
  EXPECT_EQ(v.add("a"), a);
  EXPECT_EQ(v.id("a"), a);
  EXPECT_EQ(v.mask_id(), mask);
  EXPECT_TRUE(v.is_special(mask));
  EXPECT_FALSE(v.is_special(a));
  EXPECT_FALSE(v.find("zzz").has_value());
  EXPECT_THROW(v.id("zzz"), EncodeError);
}

TEST(ToyBackend, MentionRulePeaksDistribution) {
  ToyBackend backend(city_config());
  const auto state = backend.initial_state(kWords, 1);
  const auto d = backend.mask_distribution(prompt({"He", "is", "from", "New", "York"}, 3, 5), state);
  const auto city = static_cast<std::size_t>(state.vocabulary.id("city"));
  EXPECT_EQ(std::max_element(d.probabilities.begin(), d.probabilities.end()) - d.probabilities.begin(),
            static_cast<std::ptrdiff_t>(city));
  EXPECT_GT(d[city], 0.89);
  EXPECT_NEAR(sum(d.probabilities), 1.0, 1e-6);
  EXPECT_EQ(d.size(), state.vocabulary.size());
}

TEST(ToyBackend, FreshStateOutputsThePrior) {
  ToyBackend backend(city_config());
  const auto state = backend.initial_state(kWords, 1);
  const auto p = prompt({"we", "reached", "the", "summit"}, 3, 4);
  const auto d = backend.mask_distribution(p, state);
  const auto q = backend.prior(p, state);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(d[i], q[i], 1e-15);
  // q = (rule + eps) / (1 + V eps) with the rule's leftover spread uniformly
  const double v = static_cast<double>(state.vocabulary.size());
  const double eps = 1e-4;
  const auto mountain = static_cast<std::size_t>(state.vocabulary.id("mountain"));
  EXPECT_NEAR(q[mountain], (0.5 + 0.3 / v + eps) / (1 + v * eps), 1e-15);
}

TEST(ToyBackend, NoRuleMeansUniform) {
  ToyBackend backend(city_config());
  const auto state = backend.initial_state(kWords, 1);
  const auto d = backend.mask_distribution(prompt({"Bob", "is", "from"}, 0, 1), state);
  for (double p : d.probabilities) EXPECT_NEAR(p, 1.0 / static_cast<double>(d.size()), 1e-15);
}

TEST(ToyBackend, HiddenMentionDisablesMentionRules) {
  ToyBackend backend(city_config());
  const auto state = backend.initial_state(kWords, 1);
  const auto d = backend.mask_distribution(hide_mention(prompt({"He", "is", "from", "New", "York"}, 3, 5)), state);
  EXPECT_NEAR(d[static_cast<std::size_t>(state.vocabulary.id("city"))], 1.0 / static_cast<double>(d.size()), 1e-12);
}

TEST(ToyBackend, RejectsBadInputs) {
  ToyBackend backend(city_config());
  const auto state = backend.initial_state(kWords, 1);
  auto p = prompt({"He", "is", "from", "New", "York"}, 3, 5);
  p.tokens.push_back(std::string(kMaskToken));
  EXPECT_THROW(backend.mask_distribution(p, state), EncodeError);
  EXPECT_THROW(backend.mask_distribution(prompt({"unseen"}, 0, 1), state), EncodeError);
}

TEST(ToyBackend, Deterministic) {
  ToyBackend backend(city_config());
  const auto a = backend.initial_state(kWords, 9);
  const auto b = backend.initial_state(kWords, 9);
  EXPECT_EQ(a, b);
  const auto p = prompt({"He", "is", "from", "New", "York"}, 3, 5);
  EXPECT_EQ(backend.mask_distribution(p, a).probabilities, backend.mask_distribution(p, b).probabilities);
  EXPECT_NE(backend.initial_state(kWords, 10), a);
}

TEST(ToyBackend, ClsEmbeddingWidthAndDistinctness) {
  ToyBackend backend(city_config());
  const auto state = backend.initial_state(kWords, 1);
  const TypingExample x{"a", {"He", "is", "from", "New", "York"}, {3, 5}, EntityType::parse("location")};
  const TypingExample y{"b", {"we", "reached", "the", "summit"}, {3, 4}, EntityType::parse("location")};
  const auto hx = backend.cls_embedding(x, state);
  EXPECT_EQ(hx.size(), 32u);
  EXPECT_EQ(hx, backend.cls_embedding(x, state));
  EXPECT_NE(hx, backend.cls_embedding(y, state));
}

TEST(ToyBackend, RegisterSpecialTokens) {
  ToyBackend backend(city_config());
  auto state = backend.initial_state(kWords, 1);
  const auto before = state.vocabulary.size();
  const auto ids = backend.register_special_tokens(state, {"[P]", "[P1]"}, 3);
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_NE(ids[0], ids[1]);
  EXPECT_EQ(state.vocabulary.size(), before + 2);
  EXPECT_EQ(backend.register_special_tokens(state, {"[P]", "[P1]"}, 3), ids);
  EXPECT_EQ(state.vocabulary.size(), before + 2);
  for (const auto& b : state.blocks) EXPECT_EQ(b.rows, before + 2);
  EXPECT_THROW(backend.register_special_tokens(state, {"summit"}, 3), ConfigError);

  const auto d = backend.mask_distribution(prompt({"He", "is", "from", "New", "York"}, 3, 5, TemplateSpec::soft(1)),
                                           state);
  EXPECT_EQ(d.size(), before + 2);
  EXPECT_NEAR(sum(d.probabilities), 1.0, 1e-9);
}

TEST(ToyBackend, HideTokenIsSpecial) {
  ToyBackend backend(city_config());
  auto state = backend.initial_state(kWords, 1);
  const auto id = state.vocabulary.id(kHideToken);
  EXPECT_TRUE(state.vocabulary.is_special(id));
  EXPECT_EQ(backend.register_special_tokens(state, {std::string(kHideToken)}, 1), std::vector<TokenId>{id});
}

TEST(ToyBackendConfig, JsonRoundTrip) {
  const auto c = city_config();
  const auto again = ToyBackendConfig::from_json(c.to_json());
  EXPECT_EQ(again.to_json(), c.to_json());
  ASSERT_EQ(again.rules.size(), 2u);
  EXPECT_EQ(again.rules[0].trigger, ToyRule::Trigger::mention);
  EXPECT_THROW(ToyBackendConfig::from_json(R"({"rules": [{"words": {}}]})"), ConfigError);
}

class StatePersistence : public ::testing::Test {
 protected:
  fet::testing::TempDir tmp;
  std::filesystem::path dir = tmp / "state";
};

TEST_F(StatePersistence, SaveLoadIsBitExact) {
  ToyBackend backend(city_config());
  auto state = backend.initial_state(kWords, 4);
  backend.register_special_tokens(state, {"[P]", "[P1]"}, 4);
  for (auto& v : state.blocks[1].values) v = std::sin(v + 0.1) / 3.0;
  state.save(dir);
  const auto loaded = EncoderState::load(dir);
  EXPECT_EQ(loaded, state);
  const auto p = prompt({"He", "is", "from", "New", "York"}, 3, 5);
  EXPECT_EQ(backend.mask_distribution(p, loaded).probabilities, backend.mask_distribution(p, state).probabilities);
}

TEST_F(StatePersistence, DetectsTruncation) {
  ToyBackend backend(city_config());
  backend.initial_state(kWords, 4).save(dir);
  const auto blob = dir / "weights.bin";
  std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 8);
  EXPECT_THROW(EncoderState::load(dir), Error);
}

TEST_F(StatePersistence, DetectsVocabularyTampering) {
  ToyBackend backend(city_config());
  backend.initial_state(kWords, 4).save(dir);
  std::string text;
  {
    std::ifstream in(dir / "vocab.json");
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto pos = text.find("summit");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 6, "sumMit");
  std::ofstream(dir / "vocab.json") << text;
  EXPECT_THROW(EncoderState::load(dir), Error);
}

TEST(EnsureSpecialTokens, CapabilityErrorWhenUnsupported) {
  class Frozen final : public MlmBackend {
   public:
    std::string kind() const override { return "frozen"; }
    std::size_t hidden_width() const override { return 1; }
    bool supports_token_registration() const override { return false; }
    EncoderState initial_state(const std::vector<std::string>&, std::uint64_t) const override { return {}; }
    std::vector<TokenId> register_special_tokens(EncoderState&, const std::vector<std::string>&,
                                                 std::uint64_t) const override {
      return {};
    }
    std::vector<TokenId> label_word_tokens(const std::string&, const EncoderState&) const override { return {}; }
    MaskDistribution mask_distribution(const PromptedInput&, const EncoderState&) const override { return {}; }
    void backward_mask_distribution(const PromptedInput&, const EncoderState&, const MaskDistribution&,
                                    std::span<const double>, StateGradient&) const override {}
    std::vector<double> cls_embedding(const TypingExample&, const EncoderState&) const override { return {}; }
    void backward_cls_embedding(const TypingExample&, const EncoderState&, std::span<const double>,
                                StateGradient&) const override {}
  } frozen;
  EncoderState state;
  EXPECT_THROW(ensure_special_tokens(frozen, state, {"[P]"}, 0), CapabilityError);
}
