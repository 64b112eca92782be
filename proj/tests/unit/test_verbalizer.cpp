#include <gtest/gtest.h>

#include <filesystem>

#include "fet/errors.hpp"
#include "fet/verbalizer.hpp"
#include "temp_dir.hpp"

using namespace fet;

namespace {

std::vector<std::string> words_of(const Verbalizer& v, std::size_t t) {
  std::vector<std::string> out;
  for (const auto& lw : v.words(t)) out.push_back(lw.word);
  return out;
}

RelatedWordSource city_source() {
  return RelatedWordSource({{"city",
                             {"metropolis", "town", "municipality", "urban", "suburb", "municipal", "megalopolis",
                              "civilization", "downtown", "country", "village"}},
                            {"mountain", {"peak", "town", "new york", "hill"}}});
}

}  // namespace

TEST(BuildVerbalizer, BaseWordsAreAllLevels) {
  const auto schema = parse_label_schema({"Location/City"}, "/");
  const auto v = build_verbalizer(schema, nullptr, 0);
  ASSERT_EQ(v.type_count(), 1u);
  EXPECT_EQ(words_of(v, 0), (std::vector<std::string>{"location", "city"}));
  for (const auto& lw : v.words(0)) EXPECT_EQ(lw.weight, 1.0);
}

TEST(BuildVerbalizer, ExpandsFromTheLeafUpToK) {
  const auto schema = parse_label_schema({"location/city"}, "/");
  const auto source = city_source();
  const auto v = build_verbalizer(schema, &source, 10);
  const auto w = words_of(v, 0);
  ASSERT_EQ(w.size(), 12u);
  EXPECT_EQ(w[0], "location");
  EXPECT_EQ(w[1], "city");
  EXPECT_EQ(w[2], "metropolis");
  EXPECT_EQ(w[11], "country");
}

TEST(BuildVerbalizer, SkipsPhrasesAndCollisions) {
  const auto schema = parse_label_schema({"location/city", "location/mountain"}, "/");
  const auto source = city_source();
  const auto v = build_verbalizer(schema, &source, 3);
  // city takes "town" first, so mountain skips it; "new york" is a phrase
  EXPECT_EQ(words_of(v, 0), (std::vector<std::string>{"location", "city", "metropolis", "town", "municipality"}));
  EXPECT_EQ(words_of(v, 1), (std::vector<std::string>{"location", "mountain", "peak", "hill"}));
  EXPECT_EQ(v.shared_base_words(), (std::vector<std::string>{"location"}));
}

TEST(BuildVerbalizer, ExpansionWordsNeverShared) {
  const auto schema = parse_label_schema({"location/city", "location/mountain", "person/artist"}, "/");
  const auto source = city_source();
  const auto v = build_verbalizer(schema, &source, 10);
  std::map<std::string, std::set<std::size_t>> owners;
  for (std::size_t t = 0; t < v.type_count(); ++t)
    for (const auto& lw : v.words(t)) owners[lw.word].insert(t);
  for (const auto& [word, types] : owners) {
    if (types.size() > 1) {
      const auto& shared = v.shared_base_words();
      EXPECT_NE(std::find(shared.begin(), shared.end(), word), shared.end()) << word;
    }
  }
}

TEST(BuildVerbalizer, ExpansionWithoutSourceIsConfigError) {
  const auto schema = parse_label_schema({"location/city"}, "/");
  EXPECT_THROW(build_verbalizer(schema, nullptr, 2), ConfigError);
}

TEST(BuildVerbalizer, SingleTypeUnion) {
  const auto v = build_verbalizer(parse_label_schema({"other"}, "/"), nullptr, 0);
  EXPECT_EQ(v.union_vocabulary(), (std::vector<std::string>{"other"}));
}

TEST(Verbalizer, UnionIsFirstSeenOrder) {
  const auto schema = parse_label_schema({"location/city", "location/mountain", "person"}, "/");
  const auto v = build_verbalizer(schema, nullptr, 0);
  EXPECT_EQ(v.union_vocabulary(), (std::vector<std::string>{"location", "city", "mountain", "person"}));
  EXPECT_EQ(v.union_index("mountain"), 2u);
  EXPECT_FALSE(v.union_index("nothing").has_value());
}

TEST(Verbalizer, RejectsInvalidWeights) {
  const auto schema = parse_label_schema({"a"}, "/");
  EXPECT_THROW(Verbalizer(schema, {{}}), ConfigError);
  EXPECT_THROW(Verbalizer(schema, {{{"a", -1.0}}}), ConfigError);
  EXPECT_THROW(Verbalizer(schema, {{{"a", 0.0}}}), ConfigError);
}

TEST(Verbalizer, SetWeightsClampsAtZero) {
  const auto schema = parse_label_schema({"a/b"}, "/");
  auto v = build_verbalizer(schema, nullptr, 0);
  v.set_weights(0, {-0.5, 2.0});
  EXPECT_EQ(v.words(0)[0].weight, 0.0);
  EXPECT_EQ(v.words(0)[1].weight, 2.0);
}

TEST(Verbalizer, JsonRoundTripIsByteStable) {
  const auto schema = parse_label_schema({"person/artist", "location/city"}, "/");
  const auto source = city_source();
  const auto v = build_verbalizer(schema, &source, 4);
  const auto again = Verbalizer::from_json(v.to_json());
  EXPECT_EQ(again, v);
  EXPECT_EQ(again.to_json(), v.to_json());
  EXPECT_EQ(build_verbalizer(schema, &source, 4).to_json(), v.to_json());
  // keys sorted: location/city before person/artist
  const auto text = v.to_json();
  EXPECT_LT(text.find("location/city"), text.find("person/artist"));
}

TEST(Verbalizer, SaveAndLoad) {
  const fet::testing::TempDir tmp;
  const auto path = tmp / "verbalizer.json";
  const auto v = build_verbalizer(parse_label_schema({"a/b", "c"}, "/"), nullptr, 0);
  v.save(path);
  EXPECT_EQ(Verbalizer::load(path), v);
}

TEST(RelatedWordSource, LoadsRankedLists) {
  const auto s = RelatedWordSource::from_json(R"({"city": ["town", "village"]})");
  EXPECT_EQ(s.related("city"), (std::vector<std::string>{"town", "village"}));
  EXPECT_TRUE(s.related("unknown").empty());
}
