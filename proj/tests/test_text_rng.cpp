#include <gtest/gtest.h>

#include <set>

#include "nlueval/rng.hpp"
#include "nlueval/text.hpp"

using namespace nlueval;

TEST(Text, DecodeEncodeRoundTrip) {
  const std::string s = "Sætning på dansk, Ísland, 日本, \xF0\x9F\x98\x80";
  EXPECT_EQ(text::encode(text::decode(s)), s);
  EXPECT_EQ(text::length("æøå"), 3u);
  EXPECT_EQ(text::length(""), 0u);
}

TEST(Text, InvalidUtf8BecomesReplacement) {
  const auto cps = text::decode("a\xFF" "b");
  ASSERT_EQ(cps.size(), 3u);
  EXPECT_EQ(cps[1], U'\uFFFD');
}

TEST(Text, LowercaseCoversNordicLetters) {
  EXPECT_EQ(text::to_lower("ÆØÅ ÞÐ ÄÖÜ Abc"), "æøå þð äöü abc");
}

TEST(Text, CollapseNewlinesRemapsOffsets) {
  std::vector<std::size_t> offsets{0, 5, 8};
  const std::string out = text::collapse_newlines("ab\n\n\ncd\nef", &offsets);
  EXPECT_EQ(out, "ab\ncd\nef");
  // byte 5 ('c') moves to 3, byte 8 ('e') to 6
  EXPECT_EQ(offsets, (std::vector<std::size_t>{0, 3, 6}));
  EXPECT_FALSE(text::contains_blank_line(out));
  EXPECT_TRUE(text::contains_blank_line("a\n\nb"));
}

TEST(Text, EditDistance) {
  EXPECT_EQ(text::edit_distance(U"kitten", U"sitting"), 3u);
  EXPECT_EQ(text::edit_distance(U"", U"abc"), 3u);
  EXPECT_EQ(text::edit_distance(U"same", U"same"), 0u);
}

TEST(Text, SplitWhitespace) {
  EXPECT_EQ(text::split_whitespace("  a\tb \n c  "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(text::split_whitespace("   ").empty());
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng rng(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(42, i));
  EXPECT_EQ(seeds.size(), 1000u);
  EXPECT_EQ(derive_seed(42, 3), derive_seed(42, 3));
  EXPECT_NE(derive_seed(42, 3), derive_seed(43, 3));
}

TEST(Rng, SampleIndicesAreDistinct) {
  Rng rng(5);
  const auto idx = sample_indices(50, 20, rng);
  ASSERT_EQ(idx.size(), 20u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 20u);
  for (auto i : idx) EXPECT_LT(i, 50u);
}

TEST(Rng, SampleIndicesUniformOverPositions) {
  // Each index should land in a 1-of-10 draw about 1/10 of the time.
  std::vector<int> hits(10, 0);
  Rng rng(11);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) ++hits[sample_indices(10, 1, rng)[0]];
  for (int h : hits) EXPECT_NEAR(h / double(trials), 0.1, 0.01);
}

TEST(Rng, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}
