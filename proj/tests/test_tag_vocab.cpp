#include <gtest/gtest.h>

#include "folkart/tag_vocab.hpp"
#include "test_support.hpp"

using namespace folkart;

namespace {

DatasetManifest tagged_manifest() {
  DatasetManifest m;
  m.registry = ClassRegistry({"Warli", "Gond"});
  auto add = [&](std::string id, std::string cls, std::vector<std::string> tags, Split s) {
    ImageRecord r;
    r.id = std::move(id);
    r.path = r.id + ".png";
    r.class_label = std::move(cls);
    r.raw_tags = std::move(tags);
    r.split = s;
    m.records.push_back(r);
  };
  add("a", "Warli", {"Dancing", "celebrated", "tree"}, Split::train);
  add("b", "Warli", {"dance", "Feast"}, Split::train);
  add("c", "Gond", {"trees", "deer"}, Split::train);
  add("d", "Gond", {"secret_test_only"}, Split::test);
  add("e", "Gond", {"validation_only", "dance"}, Split::validation);
  return m;
}

}  // namespace

TEST(Normalize, CaseSpaceUnderscore) {
  EXPECT_EQ(normalize_tag("  Tree  of   Life "), "tree_of_life");
  EXPECT_EQ(normalize_tag("LOTUS"), "lotus");
  EXPECT_EQ(normalize_tag("   "), "");
}

TEST(Synonyms, CelebrationGroupCollapses) {
  auto map = seed_synonyms();
  for (const char* s : {"celebrated", "celebrating", "feast", "celebration", "festivity"})
    EXPECT_EQ(map.lookup(s), "celebration") << s;
  EXPECT_EQ(map.lookup("Celebrated"), "celebration");
  EXPECT_EQ(map.lookup("unknown tag"), "unknown_tag");
}

TEST(Synonyms, ConflictsRejected) {
  SynonymMap m;
  m.add("feast", "celebration");
  EXPECT_THROW(m.add("feast", "meal"), std::invalid_argument);
  EXPECT_THROW(m.add("celebration", "party"), std::invalid_argument);
  EXPECT_THROW(m.add("party", "feast"), std::invalid_argument);
  EXPECT_THROW(m.add("", "x"), std::invalid_argument);
}

TEST(Synonyms, ParseSerializeRoundTrip) {
  auto m = SynonymMap::parse("# comment\nfeast -> celebration\n\nDancing -> dance\n");
  EXPECT_EQ(m.lookup("dancing"), "dance");
  auto back = SynonymMap::parse(m.serialize());
  EXPECT_EQ(back.entries(), m.entries());
  EXPECT_THROW(SynonymMap::parse("no arrow here"), std::invalid_argument);
}

TEST(Canonicalize, IdempotentProperty) {
  auto map = seed_synonyms();
  std::vector<std::string> raw = {"Celebrated", "STAR", "lotus flower", "cows", "whatever", "  ", "dots"};
  auto once = canonicalize_tags(raw, map);
  auto twice = canonicalize_tags(once, map);
  EXPECT_EQ(once, twice);
  EXPECT_TRUE(once.count("celebration"));
  EXPECT_TRUE(once.count("stars"));
  EXPECT_TRUE(once.count("lotus"));
  EXPECT_TRUE(once.count("cow"));
  EXPECT_FALSE(once.count(""));
}

TEST(Vocabulary, TrainSplitOnlyOrderedByFrequency) {
  auto res = build_vocabulary(tagged_manifest(), seed_synonyms());
  // dance: 2, celebration: 2, trees: 2, deer: 1
  EXPECT_EQ(res.vocabulary.tags(), (std::vector<std::string>{"celebration", "dance", "trees", "deer"}));
  EXPECT_FALSE(res.vocabulary.find("secret_test_only"));
  EXPECT_FALSE(res.vocabulary.find("validation_only"));
  EXPECT_EQ(res.dropped_by_cap, 0u);
}

TEST(Vocabulary, CapKeepsMostFrequent) {
  auto res = build_vocabulary(tagged_manifest(), seed_synonyms(), 2);
  EXPECT_EQ(res.vocabulary.size(), 2u);
  EXPECT_EQ(res.distinct_tags, 4u);
  EXPECT_EQ(res.dropped_by_cap, 2u);
}

TEST(Vocabulary, DuplicatesAndEmptyRejected) {
  EXPECT_THROW(TagVocabulary({"a", "a"}), std::invalid_argument);
  EXPECT_THROW(TagVocabulary({"a", ""}), std::invalid_argument);
  DatasetManifest m = tagged_manifest();
  for (auto& r : m.records) r.raw_tags.clear();
  EXPECT_THROW(build_vocabulary(m, seed_synonyms()), std::invalid_argument);
}

TEST(Vocabulary, FileRoundTrip) {
  auto dir = folkart::testing::scratch_dir("vocab");
  TagVocabulary v({"sun", "stars", "lotus"});
  v.save(dir / "v.txt");
  EXPECT_EQ(TagVocabulary::load(dir / "v.txt"), v);
  EXPECT_EQ(v.fingerprint(), TagVocabulary::load(dir / "v.txt").fingerprint());
}

TEST(MultiHot, OutOfVocabularyCounted) {
  TagVocabulary v({"sun", "stars", "lotus", "cow", "lizard"});
  std::size_t dropped = 0;
  auto enc = encode_multi_hot({"sun", "peacock", "cow"}, v, &dropped);
  EXPECT_EQ(enc.bits, (std::vector<std::uint8_t>{1, 0, 0, 1, 0}));
  EXPECT_EQ(dropped, 1u);
  EXPECT_EQ(enc.popcount(), 2u);
}

TEST(MultiHot, EncodeDecodeRoundTripProperty) {
  TagVocabulary v({"a", "b", "c", "d", "e", "f", "g"});
  for (unsigned mask = 0; mask < (1u << 7); ++mask) {
    std::set<std::string> tags;
    for (std::size_t i = 0; i < 7; ++i)
      if (mask & (1u << i)) tags.insert(v.tag(i));
    auto enc = encode_multi_hot(tags, v);
    ASSERT_EQ(enc.size(), 7u);
    ASSERT_EQ(enc.popcount(), tags.size());
    ASSERT_EQ(decode_multi_hot(enc, v), tags);
  }
}

TEST(MultiHot, DecodeLengthMismatch) {
  TagVocabulary v({"a", "b"});
  MultiHotVector bad;
  bad.bits = {1, 0, 1};
  EXPECT_THROW(decode_multi_hot(bad, v), std::invalid_argument);
}

TEST(Suggester, FilenameStub) {
  FilenameTagSuggester s;
  ImageRecord r;
  r.path = "/x/warli-dance_sun.png";
  auto tags = s.suggest(r);
  EXPECT_FALSE(tags.empty());
}

TEST(MultiHot, TableTwoVectors) {
  TagVocabulary v({"sun", "stars", "lotus", "cow", "lizard"});
  auto map = seed_synonyms();
  const std::vector<std::vector<std::string>> images = {
      {"Sun", "Stars", "Cow"}, {"Lotus", "Cow"}, {"Stars", "Lizard"}, {"Sun", "Stars"}};
  const std::vector<std::vector<std::uint8_t>> expected = {
      {1, 1, 0, 1, 0}, {0, 0, 1, 1, 0}, {0, 1, 0, 0, 1}, {1, 1, 0, 0, 0}};
  for (std::size_t i = 0; i < images.size(); ++i)
    EXPECT_EQ(encode_multi_hot(canonicalize_tags(images[i], map), v).bits, expected[i]) << "image " << i + 1;
}
