#include <gtest/gtest.h>

#include "folkart/backbone.hpp"

using namespace folkart;

namespace {

NormalizedTensor random_tensor(std::uint64_t seed) {
  Rng rng(seed);
  NormalizedTensor t;
  t.side = 224;
  t.values.resize(224 * 224 * 3);
  for (auto& v : t.values) v = static_cast<float>(rng.uniform(-2, 2));
  return t;
}

// Constant over 16x16 blocks, so pooled inputs (and pre-activations) stay away from zero.
NormalizedTensor blocky_tensor(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> blocks(14 * 14 * 3);
  for (auto& v : blocks) v = static_cast<float>(rng.uniform(-2, 2));
  NormalizedTensor t;
  t.side = 224;
  t.values.resize(224 * 224 * 3);
  for (int y = 0; y < 224; ++y)
    for (int x = 0; x < 224; ++x)
      for (int c = 0; c < 3; ++c)
        t.values[(static_cast<std::size_t>(y) * 224 + x) * 3 + c] = blocks[((y / 16) * 14 + x / 16) * 3 + c];
  return t;
}

}  // namespace

TEST(Registry, DeskBackbonesAvailable) {
  auto names = BackboneRegistry::instance().names();
  for (const char* n : {"desk-conv3", "desk-conv5", "desk-conv7"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), n), names.end()) << n;
    auto bb = create_backbone(n);
    EXPECT_EQ(bb->profile().name, n);
    EXPECT_EQ(bb->profile().input_side, 224);
  }
}

TEST(Registry, PretrainedNamesNeedProvider) {
  for (const char* n : {"vgg16", "resnet50", "efficientnet_b0", "inception_v3"})
    EXPECT_THROW(create_backbone(n), std::runtime_error) << n;
  EXPECT_THROW(create_backbone("alexnet"), std::invalid_argument);
}

TEST(Registry, CustomFactory) {
  BackboneRegistry::instance().add("test-conv", [] {
    return std::make_unique<DeskConvBackbone>(DeskConvSpec{"test-conv", 8, 3, 2, 4});
  });
  EXPECT_TRUE(BackboneRegistry::instance().contains("test-conv"));
  EXPECT_EQ(create_backbone("test-conv")->profile().gap_dim, 4);
}

TEST(DeskConv, GeometryValidated) {
  EXPECT_THROW(DeskConvBackbone(DeskConvSpec{"x", 5, 3, 1, 4}), std::invalid_argument);
  EXPECT_THROW(DeskConvBackbone(DeskConvSpec{"x", 4, 0, 1, 4}), std::invalid_argument);
}

TEST(DeskConv, FeaturesDeterministicAndNonNegative) {
  auto a = create_backbone("desk-conv5");
  auto b = create_backbone("desk-conv5");
  std::vector<NormalizedTensor> batch = {random_tensor(1), random_tensor(2)};
  Matrix fa = a->features(batch);
  EXPECT_EQ(fa.rows(), 24);
  EXPECT_EQ(fa.cols(), 2);
  EXPECT_EQ(fa, b->features(batch));
  EXPECT_GE(fa.minCoeff(), 0.0);
  EXPECT_EQ(fa, a->forward_train(batch));
}

TEST(DeskConv, RejectsWrongSide) {
  auto bb = create_backbone("desk-conv3");
  NormalizedTensor t;
  t.side = 299;
  t.values.assign(299 * 299 * 3, 0.0f);
  EXPECT_THROW(bb->features(std::vector<NormalizedTensor>{t}), std::invalid_argument);
}

// Linear functional of the pooled features; gradients against central differences.
TEST(DeskConv, BackwardMatchesFiniteDifferences) {
  DeskConvBackbone bb(DeskConvSpec{"fd-conv", 16, 3, 1, 3});
  std::vector<NormalizedTensor> batch = {blocky_tensor(3), blocky_tensor(4)};
  Rng rng(5);
  Matrix w(3, 2);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1, 1);
  auto loss = [&] { return bb.features(batch).cwiseProduct(w).sum(); };
  bb.zero_grad();
  bb.forward_train(batch);
  bb.backward(w);
  const double h = 1e-4;
  for (const auto& block : bb.parameters()) {
    for (std::size_t i = 0; i < block.size; ++i) {
      const double saved = block.value[i];
      block.value[i] = saved + h;
      const double up = loss();
      block.value[i] = saved - h;
      const double down = loss();
      block.value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::abs(numeric), std::abs(block.grad[i]), 1e-6});
      EXPECT_LT(std::abs(numeric - block.grad[i]) / denom, 1e-3) << "param " << i;
    }
  }
}

TEST(DeskConv, CloneAndStateRoundTrip) {
  auto a = create_backbone("desk-conv3");
  auto& conv = dynamic_cast<DeskConvBackbone&>(*a);
  conv.weights()(0, 0) += 0.5;
  auto c = a->clone();
  std::vector<NormalizedTensor> batch = {random_tensor(6)};
  EXPECT_EQ(c->features(batch), a->features(batch));

  auto fresh = create_backbone("desk-conv3");
  fresh->load_state(nlohmann::json::parse(a->state().dump()));
  EXPECT_EQ(fresh->features(batch), a->features(batch));
  EXPECT_THROW(create_backbone("desk-conv5")->load_state(a->state()), std::invalid_argument);
}
