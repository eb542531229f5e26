#include <gtest/gtest.h>

#include "folkart/forest.hpp"

using namespace folkart;

namespace {

struct Table {
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t cols = 0;
  FeatureTable view() const { return {values, labels.size(), cols}; }
};

// Two informative features (quadrant label) and two noise columns.
Table quadrants(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Table t;
  t.cols = 4;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    t.values.insert(t.values.end(), {a, rng.uniform(-1, 1), b, rng.uniform(-1, 1)});
    t.labels.push_back((a > 0 ? 1 : 0) + (b > 0 ? 2 : 0));
  }
  return t;
}

}  // namespace

TEST(Tree, SingleSplitThresholdIsMidpoint) {
  std::vector<double> x = {1.0, 2.0, 4.0, 6.0};
  std::vector<int> y = {0, 0, 1, 1};
  FeatureTable X{x, 4, 1};
  Rng rng(1);
  ForestConfig cfg;
  cfg.min_samples_split = 2;
  auto t = DecisionTree::fit(X, y, 2, {0, 1, 2, 3}, cfg, rng);
  ASSERT_EQ(t.nodes().size(), 3u);
  EXPECT_EQ(t.nodes()[0].threshold, 3.0);
  EXPECT_EQ(t.depth(), 1);
  EXPECT_EQ(t.predict(std::vector<double>{3.0}), 0);
  EXPECT_EQ(t.predict(std::vector<double>{3.0001}), 1);
}

TEST(Tree, PureOrTinyNodesAreLeaves) {
  std::vector<double> x = {1, 2, 3};
  std::vector<int> y = {1, 1, 1};
  FeatureTable X{x, 3, 1};
  Rng rng(1);
  auto pure = DecisionTree::fit(X, y, 2, {0, 1, 2}, ForestConfig{}, rng);
  EXPECT_EQ(pure.nodes().size(), 1u);
  EXPECT_EQ(pure.predict(std::vector<double>{0.0}), 1);
  std::vector<int> mixed = {0, 1, 1};
  ForestConfig cfg;
  cfg.min_samples_split = 4;
  auto tiny = DecisionTree::fit(X, mixed, 2, {0, 1, 2}, cfg, rng);
  EXPECT_EQ(tiny.nodes().size(), 1u);
  EXPECT_EQ(tiny.predict(std::vector<double>{0.0}), 1);
}

TEST(Tree, MajorityTiesToLowestLabel) {
  std::vector<double> x = {1, 1, 1, 1};
  std::vector<int> y = {2, 1, 2, 1};
  FeatureTable X{x, 4, 1};
  Rng rng(1);
  auto t = DecisionTree::fit(X, y, 3, {0, 1, 2, 3}, ForestConfig{}, rng);
  EXPECT_EQ(t.predict(std::vector<double>{1}), 1);
}

TEST(Tree, DepthBoundedProperty) {
  auto data = quadrants(300, 4);
  for (int depth : {1, 2, 3, 6}) {
    ForestConfig cfg;
    cfg.max_depth = depth;
    cfg.min_samples_split = 2;
    Rng rng(2);
    std::vector<std::size_t> all(300);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto t = DecisionTree::fit(data.view(), data.labels, 4, all, cfg, rng);
    EXPECT_LE(t.depth(), depth);
  }
}

TEST(Forest, LearnsQuadrants) {
  auto train = quadrants(400, 5), test = quadrants(200, 6);
  ForestConfig cfg;
  cfg.n_estimators = 50;
  cfg.seed = 3;
  auto f = RandomForest::fit(train.view(), train.labels, 4, cfg);
  auto pred = f.predict(test.view());
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == test.labels[i];
  EXPECT_GE(hits, 190);
}

TEST(Forest, DeterministicAndSerializable) {
  auto d = quadrants(150, 7);
  ForestConfig cfg;
  cfg.n_estimators = 20;
  cfg.seed = 11;
  auto a = RandomForest::fit(d.view(), d.labels, 4, cfg);
  auto b = RandomForest::fit(d.view(), d.labels, 4, cfg);
  EXPECT_EQ(a.to_json(), b.to_json());
  auto c = RandomForest::from_json(nlohmann::json::parse(a.to_json().dump()));
  EXPECT_EQ(c.predict(d.view()), a.predict(d.view()));
  cfg.seed = 12;
  EXPECT_NE(RandomForest::fit(d.view(), d.labels, 4, cfg).to_json(), a.to_json());
}

TEST(Forest, VoteFractionsSumToOne) {
  auto d = quadrants(100, 8);
  ForestConfig cfg;
  cfg.n_estimators = 17;
  auto f = RandomForest::fit(d.view(), d.labels, 4, cfg);
  for (std::size_t r = 0; r < 20; ++r) {
    auto v = f.vote_fractions(d.view().row(r));
    EXPECT_NEAR(std::accumulate(v.begin(), v.end(), 0.0), 1.0, 1e-12);
  }
  EXPECT_THROW(f.predict(std::vector<double>{1, 2}), std::invalid_argument);
}

TEST(Forest, InputValidation) {
  std::vector<double> x = {1, 2, std::nan(""), 4};
  std::vector<int> y = {0, 1};
  EXPECT_THROW(RandomForest::fit({x, 2, 2}, y, 2, {}), std::invalid_argument);
  x[2] = 3;
  EXPECT_THROW(RandomForest::fit({x, 2, 2}, std::vector<int>{0, 2}, 2, {}), std::out_of_range);
  EXPECT_THROW(RandomForest::fit({x, 2, 2}, std::vector<int>{0}, 2, {}), std::invalid_argument);
  ForestConfig bad;
  bad.min_samples_split = 1;
  EXPECT_THROW(RandomForest::fit({x, 2, 2}, y, 2, bad), std::invalid_argument);
}

TEST(ForestConfig, JsonRoundTrip) {
  ForestConfig c{400, 35, 4, 3, false, 9};
  EXPECT_EQ(ForestConfig::from_json(c.to_json()), c);
}
