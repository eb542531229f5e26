#include <gtest/gtest.h>

#include "folkart/metrics.hpp"
#include "folkart/rng.hpp"
#include "test_support.hpp"

using namespace folkart;
using folkart::testing::ap_oracle;

TEST(Accuracy, Examples) {
  std::vector<int> t(12);
  std::iota(t.begin(), t.end(), 0);
  auto p = t;
  EXPECT_DOUBLE_EQ(accuracy(p, t), 100.0);
  p[4] = 5;
  EXPECT_NEAR(accuracy(p, t), 91.67, 0.005);
  std::vector<int> wrong(12, 99);
  EXPECT_DOUBLE_EQ(accuracy(wrong, t), 0.0);
  EXPECT_THROW(accuracy(std::vector<int>{}, std::vector<int>{}), std::invalid_argument);
  EXPECT_THROW(accuracy(std::vector<int>{1}, std::vector<int>{1, 2}), std::invalid_argument);
}

TEST(Confusion, SingleOffDiagonal) {
  std::vector<std::string> classes = {"Bhil", "Gond", "Warli"};
  std::vector<int> truth = {0, 1, 1, 2}, pred = {0, 0, 1, 2};
  auto cm = confusion(pred, truth, classes);
  EXPECT_EQ(cm.at(1, 0), 1);
  EXPECT_EQ(cm.trace(), 3);
  EXPECT_EQ(cm.total(), 4);
  auto pc = cm.per_class_accuracy();
  EXPECT_DOUBLE_EQ(*pc[0], 100.0);
  EXPECT_DOUBLE_EQ(*pc[1], 50.0);
  EXPECT_THROW(confusion(std::vector<int>{3}, std::vector<int>{0}, classes), std::out_of_range);
}

TEST(Confusion, InvariantsProperty) {
  Rng rng(3);
  std::vector<std::string> classes(12);
  for (int i = 0; i < 12; ++i) classes[i] = "c" + std::to_string(i);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(200);
    std::vector<int> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.uniform_index(12));
      t[i] = rng.uniform01() < 0.5 ? p[i] : static_cast<int>(rng.uniform_index(12));
    }
    auto cm = confusion(p, t, classes);
    EXPECT_EQ(cm.total(), static_cast<std::int64_t>(n));
    EXPECT_NEAR(cm.overall_accuracy(), accuracy(p, t), 1e-12);
    std::int64_t rows = 0;
    for (std::size_t c = 0; c < 12; ++c) {
      rows += cm.row_sum(c);
      const auto want = std::count(t.begin(), t.end(), static_cast<int>(c));
      EXPECT_EQ(cm.row_sum(c), want);
      EXPECT_EQ(cm.per_class_accuracy()[c].has_value(), want > 0);
    }
    EXPECT_EQ(rows, static_cast<std::int64_t>(n));
  }
}

TEST(Confusion, CsvLayout) {
  auto cm = confusion(std::vector<int>{0, 1}, std::vector<int>{0, 0}, {"A", "B"});
  EXPECT_EQ(cm.to_csv(), "true\\predicted,A,B\nA,1,1\nB,0,0\n");
}

TEST(AveragePrecision, Examples) {
  EXPECT_NEAR(average_precision({0.9, 0.8, 0.7}, {1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(average_precision({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}), 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(average_precision({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}), 1.0);
  EXPECT_THROW(average_precision({0.1, 0.2}, {0, 0}), std::domain_error);
  EXPECT_THROW(average_precision({0.1}, {0, 1}), std::invalid_argument);
}

TEST(AveragePrecision, TiesKeepOriginalOrder) {
  EXPECT_DOUBLE_EQ(average_precision({0.5, 0.5}, {1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({0.5, 0.5}, {0, 1}), 0.5);
}

TEST(AveragePrecision, MatchesOracleOnRandomInstances) {
  Rng rng(2024);
  int checked = 0;
  while (checked < 1000) {
    const std::size_t n = 1 + rng.uniform_index(8);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_index(5)) / 4.0;  // coarse grid forces ties
      y[i] = rng.uniform01() < 0.4;
    }
    if (std::count(y.begin(), y.end(), 1) == 0) continue;
    ASSERT_NEAR(average_precision(s, y), ap_oracle(s, y), 1e-12);
    ++checked;
  }
}

TEST(AveragePrecision, InvariantUnderMonotoneTransform) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(10), g(10);
    std::vector<int> y(10);
    for (std::size_t i = 0; i < 10; ++i) {
      s[i] = rng.uniform(-1, 1);
      g[i] = 3.0 * s[i] * s[i] * s[i] + 7.0;
      y[i] = i % 3 == 0;
    }
    EXPECT_DOUBLE_EQ(average_precision(s, y), average_precision(g, y));
  }
}

TEST(MeanAveragePrecision, ExampleAndExclusion) {
  Eigen::MatrixXd scores(2, 3), labels(2, 3);
  scores << 0.9, 0.1, 0.5,
            0.1, 0.9, 0.5;
  labels << 1, 1, 0,
            0, 0, 0;
  auto r = mean_average_precision(scores, labels);
  EXPECT_NEAR(r.map, 75.0, 1e-12);
  EXPECT_EQ(r.excluded_tags, 1u);
  EXPECT_FALSE(r.per_tag_ap[2].has_value());
  EXPECT_THROW(mean_average_precision(scores, Eigen::MatrixXd::Zero(2, 3)), std::domain_error);
  EXPECT_THROW(mean_average_precision(scores, Eigen::MatrixXd::Zero(3, 3)), std::invalid_argument);
}

TEST(MeanAveragePrecision, PerfectRankingIsHundred) {
  Eigen::MatrixXd scores(4, 2), labels(4, 2);
  scores << 0.9, 0.2, 0.8, 0.9, 0.1, 0.8, 0.0, 0.1;
  labels << 1, 0, 1, 1, 0, 1, 0, 0;
  EXPECT_DOUBLE_EQ(mean_average_precision(scores, labels).map, 100.0);
}
