#include <gtest/gtest.h>

#include <cmath>

#include "folkart/head.hpp"

using namespace folkart;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

double batch_loss(const DenseHead& head, const Matrix& x, const Matrix& y) {
  return loss_and_gradient(activate(head.logits(x), head.config().activation), y, head.config().activation).loss;
}

// Central differences over every head parameter against backward().
void check_gradients(OutputActivation act, std::uint64_t seed) {
  Rng rng(seed);
  DenseHead head = build_head({8, 5, 4, act}, seed);
  const Eigen::Index n = 3;
  Matrix x = random_matrix(8, n, rng);
  Matrix y = Matrix::Zero(4, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (act == OutputActivation::softmax) y(static_cast<Eigen::Index>(rng.uniform_index(4)), j) = 1.0;
    else
      for (Eigen::Index i = 0; i < 4; ++i) y(i, j) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
  }
  head.zero_grad();
  auto lg = loss_and_gradient(activate(head.forward_train(x), act), y, act);
  Matrix grad_x = head.backward(lg.grad_logits);

  const double h = 1e-4;
  auto compare = [](double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
  };
  for (const auto& block : head.parameters()) {
    for (std::size_t i = 0; i < block.size; ++i) {
      const double saved = block.value[i];
      block.value[i] = saved + h;
      const double up = batch_loss(head, x, y);
      block.value[i] = saved - h;
      const double down = batch_loss(head, x, y);
      block.value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      if (std::abs(numeric) < 1e-9 && std::abs(block.grad[i]) < 1e-9) continue;
      EXPECT_LT(compare(block.grad[i], numeric), 1e-3) << "param " << i;
    }
  }
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Matrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double numeric = (batch_loss(head, xp, y) - batch_loss(head, xm, y)) / (2 * h);
      if (std::abs(numeric) < 1e-9 && std::abs(grad_x(i, j)) < 1e-9) continue;
      EXPECT_LT(compare(grad_x(i, j), numeric), 1e-3);
    }
}

}  // namespace

TEST(Softmax, RowsSumToOneProperty) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    Vector logits(12);
    for (Eigen::Index i = 0; i < 12; ++i) logits(i) = rng.uniform(-50, 50);
    Vector p = softmax(logits);
    EXPECT_NEAR(p.sum(), 1.0, 1e-6);
    Eigen::Index a, b;
    p.maxCoeff(&a);
    logits.maxCoeff(&b);
    EXPECT_EQ(a, b);
    Vector shifted = softmax((logits.array() + 1000.0).matrix());
    EXPECT_TRUE(shifted.isApprox(p, 1e-9));
  }
}

TEST(Softmax, ClosedForms) {
  Vector l(2);
  l << 1, 0;
  Vector p = softmax(l);
  EXPECT_NEAR(p(0), std::exp(1.0) / (std::exp(1.0) + 1), 1e-12);
  EXPECT_NEAR(p(0), 0.7311, 1e-4);
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
}

TEST(Losses, ClosedForms) {
  std::vector<double> uniform(12, 1.0 / 12.0);
  EXPECT_NEAR(cross_entropy(uniform, 3), std::log(12.0), 1e-9);
  std::vector<double> one_hot(12, 0.0);
  one_hot[3] = 1.0;
  EXPECT_NEAR(cross_entropy(uniform, one_hot), std::log(12.0), 1e-9);
  EXPECT_NEAR(cross_entropy(one_hot, one_hot), 0.0, 1e-12);
  std::vector<double> half(7, 0.5), labels = {1, 0, 1, 1, 0, 0, 1};
  EXPECT_NEAR(binary_cross_entropy(half, labels), std::log(2.0), 1e-9);
  EXPECT_NEAR(binary_cross_entropy(std::vector<double>{0.25}, std::vector<double>{1}), std::log(4.0), 1e-12);
  EXPECT_NEAR(binary_cross_entropy(labels, labels), 0.0, 1e-9);
}

TEST(Losses, InvalidLabels) {
  std::vector<double> p = {0.5, 0.5};
  EXPECT_THROW(cross_entropy(p, std::vector<double>{1, 1}), std::invalid_argument);
  EXPECT_THROW(cross_entropy(p, std::vector<double>{0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(cross_entropy(p, 2), std::invalid_argument);
  EXPECT_THROW(binary_cross_entropy(p, std::vector<double>{1}), std::invalid_argument);
}

TEST(Losses, NonNegativeProperty) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    Vector l(5);
    for (Eigen::Index i = 0; i < 5; ++i) l(i) = rng.uniform(-5, 5);
    Vector p = softmax(l);
    std::vector<double> pv(p.data(), p.data() + 5);
    EXPECT_GE(cross_entropy(pv, rng.uniform_index(5)), 0.0);
    std::vector<double> y(5);
    for (auto& v : y) v = rng.uniform01() < 0.5;
    EXPECT_GE(binary_cross_entropy(pv, y), 0.0);
  }
}

TEST(Head, ParameterCountAndShapes) {
  auto h = build_head({2048, 1024, 12, OutputActivation::softmax}, 1);
  EXPECT_EQ(h.parameter_count(), 2110476u);
  auto t = build_head({1280, 1024, 1500, OutputActivation::sigmoid}, 1);
  EXPECT_EQ(t.w2().rows(), 1500);
  EXPECT_EQ(t.w2().cols(), 1024);
  EXPECT_THROW(build_head({0, 4, 2, OutputActivation::softmax}, 1), std::invalid_argument);
}

TEST(Head, DeterministicPerSeed) {
  auto a = build_head({8, 5, 4, OutputActivation::softmax}, 9);
  auto b = build_head({8, 5, 4, OutputActivation::softmax}, 9);
  auto c = build_head({8, 5, 4, OutputActivation::softmax}, 10);
  EXPECT_EQ(a.w1(), b.w1());
  EXPECT_EQ(a.b2(), b.b2());
  EXPECT_NE(a.w1(), c.w1());
}

TEST(Head, ZeroWeightsGiveUniform) {
  auto h = build_head({6, 3, 12, OutputActivation::softmax}, 1);
  h.w1().setZero();
  h.b1().setZero();
  h.w2().setZero();
  h.b2().setZero();
  Matrix x = Matrix::Ones(6, 2);
  Matrix p = h.forward(x);
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p.data()[i], 1.0 / 12.0, 1e-15);
  EXPECT_THROW(h.forward(Matrix::Ones(5, 1)), std::invalid_argument);
}

TEST(Head, GradientCheckSoftmax) {
  for (std::uint64_t s : {1, 2, 3}) check_gradients(OutputActivation::softmax, s);
}

TEST(Head, GradientCheckSigmoid) {
  for (std::uint64_t s : {4, 5, 6}) check_gradients(OutputActivation::sigmoid, s);
}

TEST(Head, JsonRoundTrip) {
  auto h = build_head({8, 5, 4, OutputActivation::sigmoid}, 3);
  auto back = DenseHead::from_json(nlohmann::json::parse(h.to_json().dump()));
  EXPECT_EQ(back.config(), h.config());
  EXPECT_EQ(back.w1(), h.w1());
  EXPECT_EQ(back.b1(), h.b1());
  EXPECT_EQ(back.w2(), h.w2());
  EXPECT_EQ(back.b2(), h.b2());
  auto j = h.to_json();
  j["config"]["hidden_dim"] = 6;
  EXPECT_THROW(DenseHead::from_json(j), std::invalid_argument);
}

TEST(Head, ArgmaxTiesToLowest) {
  std::vector<double> v = {0.4, 0.2, 0.4};
  EXPECT_EQ(argmax(v), 0u);
  EXPECT_THROW(argmax(std::vector<double>{}), std::invalid_argument);
}
