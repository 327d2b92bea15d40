#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fusionloc/error.hpp"
#include "fusionloc/model/point_branch.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace fusionloc;
using namespace fusionloc::model;
using fusionloc::testing::ball_query_oracle;
using fusionloc::testing::fps_oracle;
using fusionloc::testing::projected_gradient_check;

namespace {

Tensor random_scan(std::size_t batch, std::size_t n, double extent, Rng& rng) {
  return nn::uniform_tensor({batch, n, 2}, extent, rng);
}

}  // namespace

TEST(FarthestPointSample, LineExample) {
  const std::vector<double> pts{0, 0, 1, 0, 2, 0, 3, 0};
  EXPECT_EQ(farthest_point_sample(pts, 2, 0), (std::vector<std::int32_t>{0, 3}));
}

TEST(FarthestPointSample, FullSampleCoversAllIndices) {
  const std::vector<double> pts{0, 0, 5, 1, 2, 2, 3, 7, 1, 1};
  for (std::size_t start = 0; start < 5; ++start) {
    auto idx = farthest_point_sample(pts, 5, start);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(idx, (std::vector<std::int32_t>{0, 1, 2, 3, 4}));
  }
}

TEST(FarthestPointSample, DuplicatesBreakTiesByLowestIndex) {
  const std::vector<double> pts(12, 1.5);
  EXPECT_EQ(farthest_point_sample(pts, 4, 2), (std::vector<std::int32_t>{2, 0, 1, 3}));
}

TEST(FarthestPointSample, TooManyThrows) {
  const std::vector<double> pts{0, 0, 1, 1};
  EXPECT_THROW(farthest_point_sample(pts, 3, 0), ArgumentError);
}

TEST(FarthestPointSample, MatchesOracleOnIntegerGrids) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 10)(rng);
    std::vector<double> pts(2 * n);
    for (auto& v : pts) v = static_cast<double>(std::uniform_int_distribution<int>(0, 4)(rng));
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    ASSERT_EQ(farthest_point_sample(pts, m, start), fps_oracle(pts, m, start)) << trial;
  }
}

TEST(BallQuery, AllWithinRadius) {
  const std::vector<double> pts{0, 0, 0.1, 0, 0, 0.1};
  const std::vector<double> centers{0, 0, 0.05, 0.05};
  EXPECT_EQ(ball_query(pts, centers, 1.0, 3), (std::vector<std::int32_t>{0, 1, 2, 0, 1, 2}));
}

TEST(BallQuery, SingleMemberRepeats) {
  const std::vector<double> pts{0, 0, 5, 5, 9, 9};
  const std::vector<double> centers{5.1, 5};
  EXPECT_EQ(ball_query(pts, centers, 0.5, 8), std::vector<std::int32_t>(8, 1));
}

TEST(BallQuery, EmptyGroupUsesNearest) {
  const std::vector<double> pts{0, 0, 5, 5, 9, 9};
  const std::vector<double> centers{8, 8};
  EXPECT_EQ(ball_query(pts, centers, 0.5, 2), (std::vector<std::int32_t>{2, 2}));
}

TEST(BallQuery, MatchesBruteForce) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
    const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 10)(rng);
    const double r = std::uniform_real_distribution<double>(0.05, 1.5)(rng);
    std::vector<double> pts(2 * n), centers(2 * m);
    for (auto& v : pts) v = coord(rng);
    for (auto& v : centers) v = coord(rng);
    ASSERT_EQ(ball_query(pts, centers, r, k), ball_query_oracle(pts, centers, r, k)) << trial;
  }
}

TEST(SetAbstraction, ReferenceLayerShapes) {
  Rng rng(1);
  const auto layers = default_set_abstraction();
  ASSERT_EQ(layers.size(), 3u);
  EXPECT_EQ(layers[0], (SetAbstractionParams{256, 0.2, 32, {16, 16, 32}}));
  EXPECT_EQ(layers[1], (SetAbstractionParams{128, 0.4, 16, {32, 32, 64}}));
  EXPECT_EQ(layers[2], (SetAbstractionParams{64, 0.8, 8, {64, 64, 64}}));
  SetAbstraction sa1(layers[0], 0, rng);
  SetAbstraction sa2(layers[1], 32, rng);
  SetAbstraction sa3(layers[2], 64, rng);
  nn::NoGradGuard guard;
  PointFeatureMatrix h{random_scan(1, 1024, 6.0, rng), Tensor{}};
  h = sa1.forward(h, nullptr);
  EXPECT_EQ(h.centers.shape(), (nn::Shape{1, 256, 2}));
  EXPECT_EQ(h.features.shape(), (nn::Shape{1, 256, 32}));
  h = sa3.forward(sa2.forward(h, nullptr), nullptr);
  EXPECT_EQ(h.features.shape(), (nn::Shape{1, 64, 64}));
}

TEST(SetAbstraction, IdenticalGroupEqualsSinglePointMlp) {
  Rng rng(2);
  SetAbstraction sa({1, 0.1, 4, {5, 3}}, 0, rng);
  const Tensor scan = Tensor::full({1, 6, 2}, 0.7);
  const auto out = sa.forward({scan, Tensor{}}, nullptr);
  Rng rng_b(2);
  nn::Mlp mlp({2, 5, 3}, rng_b, true);
  const Tensor single = mlp.forward(Tensor::zeros({1, 2}));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out.features[c], single[c]);
}

TEST(PointSelfAttention, SaturatedGates) {
  Rng rng(3);
  PointSelfAttention att(4, rng);
  const Tensor f = nn::normal_tensor({1, 3, 4}, 1.0, rng);
  auto& last = att.mlp().layer(att.mlp().layer_count() - 1);
  for (auto& w : last.weight().data()) w = 0.0;
  for (auto& b : last.bias().data()) b = 50.0;
  Tensor out = att.forward(f);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out[i], f[i], 1e-15);
  for (auto& b : last.bias().data()) b = -50.0;
  out = att.forward(f);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out[i], 0.0, 1e-20);
}

TEST(PointSelfAttention, PreservesShapeAndNeverGrows) {
  Rng rng(4);
  PointSelfAttention att(8, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor f = nn::normal_tensor({2, 5, 8}, 3.0, rng);
    const Tensor out = att.forward(f);
    ASSERT_EQ(out.shape(), f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) ASSERT_LE(std::abs(out[i]), std::abs(f[i]));
  }
}

TEST(GroupAll, SingleRowAndPermutationInvariance) {
  Rng rng(5);
  GroupAll group(6, 10, rng);
  const Tensor one = nn::normal_tensor({1, 1, 6}, 1.0, rng);
  const Tensor direct = nn::relu(group.mlp().layer(0).forward(one));
  const Tensor pooled = group.forward(one);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(pooled[c], direct[c]);

  const std::size_t m = 9;
  const Tensor f = nn::normal_tensor({1, m, 6}, 1.0, rng);
  const Tensor base = group.forward(f);
  std::mt19937_64 perm_rng(6);
  std::vector<std::int32_t> perm(m);
  for (int trial = 0; trial < 1000; ++trial) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), perm_rng);
    const Tensor out = group.forward(nn::gather_rows(f, perm, {1, m}));
    for (std::size_t c = 0; c < 10; ++c) ASSERT_EQ(out[c], base[c]);
  }
}

TEST(GroupAll, OutputDimensions) {
  for (std::size_t d : {256u, 512u, 1024u, 2048u}) {
    Rng rng(7);
    GroupAll group(64, d, rng);
    EXPECT_EQ(group.forward(Tensor::zeros({2, 4, 64})).shape(), (nn::Shape{2, d}));
  }
}

TEST(PointBranch, DefaultConfigShapeAndEvalDeterminism) {
  Rng rng(8);
  PointBranch branch(PointBranchConfig{}, rng);
  branch.set_training(false);
  nn::NoGradGuard guard;
  const Tensor scan = random_scan(1, 1024, 6.0, rng);
  Rng r1(1), r2(2);
  const Tensor a = branch.forward(scan, r1);
  const Tensor b = branch.forward(scan, r2);
  EXPECT_EQ(a.shape(), (nn::Shape{1, 256}));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(PointBranch, InvariantToPermutationWithFixedStart) {
  // Groups large enough to hold every point: membership no longer depends on
  // index order, and point 0 stays first so the sampling start is unchanged.
  PointBranchConfig cfg;
  cfg.d_point = 8;
  cfg.n_fixed = 16;
  cfg.layers = {{6, 10.0, 16, {4, 4}}, {3, 10.0, 6, {4}}};
  Rng rng(9);
  PointBranch branch(cfg, rng);
  branch.set_training(false);
  const Tensor scan = random_scan(1, 16, 2.0, rng);
  const Tensor base = branch.forward(scan, rng);
  std::vector<std::int32_t> perm(16);
  std::mt19937_64 perm_rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin() + 1, perm.end(), perm_rng);
    const Tensor out = branch.forward(nn::gather_rows(scan, perm, {1, 16}), rng);
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out[i], base[i], 1e-12);
  }
}

TEST(PointBranch, TrainingStartDependsOnRng) {
  PointBranchConfig cfg;
  cfg.d_point = 8;
  cfg.n_fixed = 64;
  cfg.layers = {{8, 0.5, 4, {4}}};
  Rng rng(11);
  PointBranch branch(cfg, rng);
  const Tensor scan = random_scan(1, 64, 2.0, rng);
  Rng r1(1), r2(1);
  const Tensor a = branch.forward(scan, r1);
  const Tensor b = branch.forward(scan, r2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(PointBranch, GradientsMatchFiniteDifferences) {
  PointBranchConfig cfg;
  cfg.d_point = 4;
  cfg.n_fixed = 16;
  cfg.layers = {{8, 0.6, 4, {2, 2}}, {4, 1.2, 4, {2, 2}}};
  Rng rng(12);
  PointBranch branch(cfg, rng);
  branch.set_training(false);
  Tensor scan = random_scan(2, 16, 1.0, rng);
  scan.set_requires_grad(true);
  std::vector<std::pair<std::string, Tensor>> inputs{{"scan", scan}};
  for (const auto& p : branch.parameters()) inputs.emplace_back(p.name, p.tensor);
  const auto result = projected_gradient_check([&] { return branch.forward(scan, rng); }, inputs);
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst;
}

TEST(PointBranchConfig, RejectsInconsistentLayers) {
  PointBranchConfig cfg;
  cfg.n_fixed = 128;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PointBranchConfig{};
  cfg.layers[1].mlp_widths.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
}
