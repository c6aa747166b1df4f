// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <random>

#include "fixtures.hpp"
#include "foldpc/bitstream.hpp"
#include "foldpc/folding_model.hpp"
#include "foldpc/loss.hpp"
#include "foldpc/selftest.hpp"
#include "foldpc/testing/oracles.hpp"
#include "foldpc/training.hpp"

using namespace foldpc;

namespace {

std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = {fixtures::uniform(rng, lo, hi), fixtures::uniform(rng, lo, hi), fixtures::uniform(rng, lo, hi)};
  return pts;
}

std::uint64_t first_layer_checksum(const FoldingModel& m) {
  const DenseLayout& d = m.layout.encoder.front();
  std::vector<std::uint8_t> bytes;
  for (std::size_t k = 0; k < d.in * d.out + d.out; ++k) {
    const auto bits = std::bit_cast<std::uint64_t>(m.params[d.weight_offset + k]);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return fnv1a(bytes);
}

const std::vector<Vec3> kToyCloud{{0.1, 0.2, 0.0}, {0.8, -0.3, 0.1}, {-0.5, 0.4, 0.3}, {0.2, -0.7, -0.2}};

}  // namespace

TEST(Model, LayoutOfTheDefaultNetwork) {
  const FoldingModel m = init_model(0);
  ASSERT_EQ(m.layout.encoder.size(), 4u);
  EXPECT_EQ(m.layout.encoder[0].in, 3u);
  EXPECT_EQ(m.layout.encoder[3].out, 128u);
  ASSERT_EQ(m.layout.fold_first.size(), 3u);
  EXPECT_EQ(m.layout.fold_first[0].in, 131u);
  EXPECT_EQ(m.layout.fold_first[0].out, 64u);
  EXPECT_EQ(m.layout.fold_first[2].out, 3u);
  EXPECT_EQ(m.layout.fold_second[0].in, 131u);
  // 4 encoder layers + 2 folding layers of (131*64+64) + (64*64+64) + (64*3+3)
  const std::size_t encoder = (3 * 128 + 128) + 3 * (128 * 128 + 128);
  const std::size_t folding = 2 * ((131 * 64 + 64) + (64 * 64 + 64) + (64 * 3 + 3));
  EXPECT_EQ(m.params.size(), encoder + folding);
}

TEST(Model, InitializationIsSeededAndBounded) {
  const FoldingModel a = init_model(0);
  EXPECT_EQ(a.params, init_model(0).params);
  EXPECT_NE(a.params, init_model(1).params);
  for (const auto* group : {&a.layout.encoder, &a.layout.fold_first, &a.layout.fold_second}) {
    for (const DenseLayout& d : *group) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(d.in));
      for (std::size_t k = 0; k < d.in * d.out + d.out; ++k) EXPECT_LE(std::abs(a.params[d.weight_offset + k]), bound);
    }
  }
}

TEST(Model, GoldenFirstLayerChecksumForSeedZero) {
  // regression anchor recorded from the first implementation
  EXPECT_EQ(first_layer_checksum(init_model(0)), 0x1dee040b7f233783ULL);
  EXPECT_EQ(init_model(0).params[0], -0.39283678647632336);
}

TEST(Encoder, PermutationAndDuplicationInvariant) {
  const FoldingModel m = init_model(3);
  std::vector<Vec3> pts = random_points(100, 4);
  const Codeword y = encode_cloud(m, pts);
  ASSERT_EQ(y.size(), 128u);
  std::vector<Vec3> shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(5));
  EXPECT_EQ(encode_cloud(m, shuffled), y);
  std::vector<Vec3> doubled = pts;
  doubled.insert(doubled.end(), pts.begin(), pts.end());
  EXPECT_EQ(encode_cloud(m, doubled), y);
  EXPECT_EQ(encode_cloud(m, pts, Execution{4}), y);
}

TEST(Encoder, SinglePointGivesItsFeatures) {
  const FoldingModel m = init_model(2);
  const std::vector<Vec3> one{{0.3, -0.2, 0.9}};
  EXPECT_EQ(encode_cloud(m, one), encoder_features(m, one));
}

TEST(Fold, ZeroWeightsPutEveryPointAtTheOrigin) {
  FoldingModel m = init_model(0);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  const Grid g = make_grid(5, 3);
  const Codeword y = encode_cloud(m, random_points(10, 1));
  const Reconstruction r = fold(m, g, y);
  ASSERT_EQ(r.size(), 15u);
  for (const Vec3& p : r) EXPECT_EQ(p, (Vec3{0, 0, 0}));
}

TEST(Fold, MatchesStraightLineReference) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const FoldingModel m = init_model(seed);
    const Grid g = make_grid(2, 2);
    const Reconstruction fast = fold(m, g, encode_cloud(m, kToyCloud));
    const std::vector<Vec3> ref = oracle::reference_fold(m, m.params, kToyCloud, g);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(fast[i].x, ref[i].x, 1e-12);
      EXPECT_NEAR(fast[i].y, ref[i].y, 1e-12);
      EXPECT_NEAR(fast[i].z, ref[i].z, 1e-12);
    }
  }
  // larger grid crossing several work chunks, any thread count
  const FoldingModel m = init_model(7);
  const Grid g = make_grid(13, 11);
  const std::vector<Vec3> cloud = random_points(50, 8);
  const Reconstruction fast = fold(m, g, encode_cloud(m, cloud), Execution{3});
  const std::vector<Vec3> ref = oracle::reference_fold(m, m.params, cloud, g);
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i].x, ref[i].x, 1e-12);
}

TEST(Fold, OutputLengthMatchesGrid) {
  const FoldingModel m = init_model(0);
  const Codeword y = encode_cloud(m, kToyCloud);
  for (auto [w, h] : {std::pair{1, 1}, std::pair{7, 3}, std::pair{10, 10}})
    EXPECT_EQ(fold(m, make_grid(w, h), y).size(), static_cast<std::size_t>(w * h));
}

TEST(Chamfer, HandExamplesAndHomogeneity) {
  const std::vector<Vec3> x = random_points(30, 1);
  EXPECT_EQ(chamfer(x, x), 0.0);
  EXPECT_EQ(chamfer(std::vector<Vec3>{{0, 0, 0}}, std::vector<Vec3>{{1, 0, 0}, {0, 1, 0}}), 3.0);
  const std::vector<Vec3> y = random_points(40, 2);
  std::vector<Vec3> x2, y2;
  for (const Vec3& p : x) x2.push_back(2.0 * p);
  for (const Vec3& p : y) y2.push_back(2.0 * p);
  EXPECT_NEAR(chamfer(x2, y2), 4.0 * chamfer(x, y), 1e-12);
}

TEST(Chamfer, EqualsPairwiseOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_points(1 + seed * 2, seed);
    const auto b = random_points(50 - seed, seed + 100);
    EXPECT_NEAR(chamfer(a, b), oracle::pairwise_chamfer(a, b), 1e-12);
  }
}

TEST(Repulsion, HandExamplesAndTranslationInvariance) {
  EXPECT_EQ(repulsion(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}), 0.0);
  EXPECT_NEAR(repulsion(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}), 2.0, 1e-15);
  const auto pts = random_points(50, 9);
  std::vector<Vec3> moved;
  for (const Vec3& p : pts) moved.push_back(p + Vec3{0.25, -0.5, 0.125});
  EXPECT_NEAR(repulsion(moved), repulsion(pts), 1e-12);
  EXPECT_NEAR(repulsion(pts), oracle::pairwise_repulsion(pts), 1e-12);
  EXPECT_THROW(repulsion(std::vector<Vec3>{{0, 0, 0}}), Error);
}

TEST(Gradient, MatchesFiniteDifferencesOnToyModel) {
  const Grid g = make_grid(2, 2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FoldingModel m = init_model(seed, toy_dims());
    const LossAndGrad lg = loss_and_grad(m, kToyCloud, g);
    const oracle::GradientCheck gc = oracle::finite_difference_check(m, lg.gradient, kToyCloud, g, 20, seed);
    EXPECT_EQ(gc.directions, 20u);
    EXPECT_LT(gc.max_relative_error, 1e-4) << "seed " << seed;
    EXPECT_NEAR(lg.loss.total, oracle::reference_loss(m, m.params, kToyCloud, g), 1e-12);
  }
}

TEST(Gradient, MatchesFiniteDifferencesOnDefaultModel) {
  const Grid g = make_grid(3, 3);
  const std::vector<Vec3> cloud = random_points(12, 33);
  const FoldingModel m = init_model(4);
  const LossAndGrad lg = loss_and_grad(m, cloud, g);
  EXPECT_LT(oracle::finite_difference_check(m, lg.gradient, cloud, g, 10, 1).max_relative_error, 1e-4);
}

TEST(Gradient, UniformReconstructionHasNoRepulsionGradient) {
  const std::vector<Vec3> grid_points{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  // cloud == recon: chamfer gradient vanishes too, so the whole gradient is zero
  const SpatialIndex index(grid_points);
  const auto grad = loss_gradient_wrt_recon(grid_points, grid_points, correspond(grid_points, index, grid_points));
  for (const Vec3& v : grad) {
    EXPECT_NEAR(v.x, 0.0, 1e-9);
    EXPECT_NEAR(v.y, 0.0, 1e-9);
    EXPECT_NEAR(v.z, 0.0, 1e-9);
  }
}

TEST(Gradient, RepeatableAndThreadIndependent) {
  const std::vector<Vec3> cloud = random_points(300, 2);
  const Grid g = make_grid(cloud.size());
  const FoldingModel m = init_model(1);
  const LossAndGrad a = loss_and_grad(m, cloud, g);
  const LossAndGrad b = loss_and_grad(m, cloud, g);
  const LossAndGrad c = loss_and_grad(m, cloud, g, Execution{4});
  EXPECT_EQ(a.gradient, b.gradient);
  EXPECT_EQ(a.gradient, c.gradient);
  EXPECT_EQ(a.loss.total, c.loss.total);
}

TEST(Train, ZeroIterationsReturnsInitialFold) {
  const std::vector<Vec3> cloud = random_points(30, 1);
  TrainConfig cfg;
  cfg.iterations = 0;
  const TrainResult r = train(cloud, cfg);
  const FoldingModel m = init_model(0);
  EXPECT_EQ(r.model.params, m.params);
  EXPECT_EQ(r.reconstruction, fold(m, r.grid, encode_cloud(m, cloud)));
}

TEST(Train, DeterministicAcrossRunsAndThreads) {
  const auto pc = normalize(fixtures::plane(200)).first;
  TrainConfig cfg;
  cfg.iterations = 20;
  const TrainResult a = train(pc.positions, cfg);
  const TrainResult b = train(pc.positions, cfg, Execution{3});
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(a.reconstruction, b.reconstruction);
}

TEST(Train, ReducesLossOnSmallSheet) {
  const auto pc = normalize(fixtures::plane(256)).first;
  TrainConfig cfg;
  cfg.iterations = 150;
  std::vector<double> losses;
  const TrainResult r = train(pc.positions, cfg, Execution{2}, {}, [&](std::uint32_t, const LossReport& l) {
    losses.push_back(l.total);
  });
  EXPECT_EQ(losses.size(), 150u);
  EXPECT_LT(r.final_loss.chamfer, 0.5 * r.initial_loss.chamfer);
}

TEST(Train, RejectsBadSettings) {
  const std::vector<Vec3> cloud = random_points(10, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0;
  EXPECT_THROW(train(cloud, cfg), Error);
  EXPECT_THROW(train(std::vector<Vec3>{}, TrainConfig{}), Error);
}

TEST(Train, DivergenceIsReportedWithIteration) {
  const std::vector<Vec3> cloud = random_points(16, 1);
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.learning_rate = 1e300;
  try {
    train(cloud, cfg);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("diverged at iteration"), std::string::npos) << e.what();
  }
}
