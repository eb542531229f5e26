#include <gtest/gtest.h>

#include <set>

#include "folkart/rng.hpp"
#include "folkart/util.hpp"
#include "test_support.hpp"

using namespace folkart;

TEST(Hash, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Hash, LineHashSeparatesBoundaries) {
  EXPECT_NE(hash_lines({"ab", "c"}), hash_lines({"a", "bc"}));
  EXPECT_EQ(hash_lines({"x", "y"}), hash_lines({"x", "y"}));
  EXPECT_EQ(hash_lines({"x"}).size(), 16u);
}

TEST(Text, TrimLowerSplitJoin) {
  EXPECT_EQ(text::trim("  a b \t\n"), "a b");
  EXPECT_EQ(text::trim("   "), "");
  EXPECT_EQ(text::lower("MaDhuBani"), "madhubani");
  EXPECT_EQ(text::split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(text::join({"a", "b", "c"}, ", "), "a, b, c");
}

TEST(Text, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -2.5}) EXPECT_EQ(text::parse_double(text::format_double(v)), v);
  EXPECT_EQ(text::format_fixed(91.8333, 2), "91.83");
  EXPECT_EQ(text::parse_int(" 42 "), 42);
  EXPECT_THROW(text::parse_int("4x"), std::invalid_argument);
  EXPECT_THROW(text::parse_double(""), std::invalid_argument);
  auto v = text::parse_list<int>("1, 2,3", [](std::string_view s) { return text::parse_int(s); });
  EXPECT_EQ(v, (std::vector<int>{1, 2, 3}));
}

TEST(Csv, QuotedFields) {
  auto f = csv::parse_line(R"(a,"b,c","say ""hi""",)");
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[1], "b,c");
  EXPECT_EQ(f[2], "say \"hi\"");
  EXPECT_EQ(f[3], "");
  EXPECT_THROW(csv::parse_line("\"open"), std::invalid_argument);
}

TEST(Csv, EscapeRoundTrip) {
  std::vector<std::string> row = {"plain", "with,comma", "with \"quote\"", ""};
  EXPECT_EQ(csv::parse_line(csv::join_row(row)), row);
}

TEST(Io, WriteCreatesParents) {
  auto dir = folkart::testing::scratch_dir("util_io");
  auto p = dir / "a" / "b" / "c.txt";
  io::write_file(p, "x\ny\n");
  EXPECT_EQ(io::read_file(p), "x\ny\n");
  EXPECT_EQ(io::read_lines(p), (std::vector<std::string>{"x", "y"}));
  EXPECT_THROW(io::read_file(dir / "missing"), std::runtime_error);
}

TEST(RngTest, DeterministicPerSeed) {
  Rng a(42), b(42), c(43);
  std::vector<std::uint64_t> va, vb, vc;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.next());
    vb.push_back(b.next());
    vc.push_back(c.next());
  }
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
}

TEST(RngTest, UniformIndexInRangeAndCovers) {
  Rng r(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    auto v = r.uniform_index(7);
    ASSERT_LT(v, 7u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(RngTest, Uniform01HalfOpen) {
  Rng r(5);
  for (int i = 0; i < 10000; ++i) {
    double u = r.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(RngTest, ShuffleIsPermutation) {
  Rng r(9);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto orig = v;
  r.shuffle(v);
  EXPECT_NE(v, orig);
  std::sort(v.begin(), v.end());
  EXPECT_EQ(v, orig);
}

TEST(RngTest, DerivedStreamsDiffer) {
  std::set<std::uint64_t> s;
  for (std::uint64_t k = 0; k < 100; ++k) s.insert(Rng::derive(7, k));
  EXPECT_EQ(s.size(), 100u);
  EXPECT_EQ(Rng::derive(7, 3), Rng::derive(7, 3));
}
