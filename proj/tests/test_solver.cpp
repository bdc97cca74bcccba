#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace acam;
using acam::test::make_problem;
using acam::test::max_error;
using acam::test::noise_for;
using acam::test::noiseless_config;

TEST(WeightedResidual, ZeroAtTruth) {
  const auto p = make_problem(noiseless_config(), 1);
  EXPECT_EQ(weighted_residual(p.scenario.true_mics, p.z, noise_for(p), p.scenario.c), 0.0);
}

TEST(WeightedResidual, UnitWeightsAllOnes) {
  // One event, N = 8 single-reference, z = g(x) - 1 so that e is all ones.
  const MicArray m = make_cube_array(0.5);
  MeasurementSet z;
  z.strategy = PairingStrategy::single_reference(0);
  z.mic_count = 8;
  z.events = {{0, 0, Vec3(0.1, 0.2, 2.0)}};
  z.values = predict(m, z, 340.0) - Eigen::VectorXd::Ones(7);
  EXPECT_NEAR(weighted_residual(m, z, assemble_noise(1.0, z.strategy, 8, 1), 340.0), 7.0, 1e-12);
}

TEST(WeightedResidual, MatchesNaiveDoubleLoop) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  auto p = make_problem(noiseless_config(), 3);
  p.z.events.resize(5);
  p.z.values.conservativeResize(35);
  for (auto& v : p.z.values) v += 1e-4 * g(rng);
  // A dense, non-diagonal SPD block covariance.
  Eigen::MatrixXd a(7, 7);
  for (auto& v : a.reshaped()) v = g(rng);
  const Eigen::MatrixXd block = (a * a.transpose() + 7.0 * Eigen::MatrixXd::Identity(7, 7)) * 1e-8;
  const NoiseModel noise(block, 5);

  const Eigen::VectorXd e = predict(p.init, p.z, 340.0) - p.z.values;
  const Eigen::MatrixXd winv = noise.weight_matrix().inverse();
  double naive = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i)
    for (Eigen::Index j = 0; j < e.size(); ++j) naive += e[i] * winv(i, j) * e[j];
  const double got = weighted_residual(p.init, p.z, noise, 340.0);
  EXPECT_NEAR(got, naive, 1e-12 * std::abs(naive));
}

TEST(WeightedResidual, DimensionMismatch) {
  const auto p = make_problem(noiseless_config(), 1);
  const MicArray seven(std::vector<Vec3>(7, Vec3(0, 0, 0)));
  EXPECT_THROW(weighted_residual(seven, p.z, noise_for(p), 340.0), DimensionMismatch);
}

TEST(GaussNewton, NoiselessExactRecovery) {
  const auto p = make_problem(noiseless_config(), 1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = gauss_newton(p.init, p.z, noise_for(p), p.scenario.c, p.config.solver);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(res.converged);
  EXPECT_LE(res.iterations_used, 50);
  EXPECT_LT(max_error(res.estimate, p.scenario.true_mics), 1e-9);
  EXPECT_EQ(res.step_norm_trace.size(), static_cast<std::size_t>(res.iterations_used));
  EXPECT_LT(secs, 1.0);
}

TEST(GaussNewton, ResidualNonIncreasingPerStep) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto cfg = noiseless_config();
    cfg.boards = 20;
    const auto p = make_problem(cfg, seed);
    const auto noise = noise_for(p);
    SolverOptions opts;
    opts.step_threshold = 1e-12;
    double prev = weighted_residual(p.init, p.z, noise, p.scenario.c);
    for (int k = 1; k <= 8; ++k) {
      opts.max_iterations = k;
      const auto res = gauss_newton(p.init, p.z, noise, p.scenario.c, opts);
      EXPECT_LE(res.final_weighted_residual, prev * (1.0 + 1e-12) + 1e-20) << "seed " << seed << " step " << k;
      prev = res.final_weighted_residual;
      if (res.converged) break;
    }
  }
}

TEST(GaussNewton, StationaryAtSolution) {
  auto cfg = noiseless_config();
  cfg.noise_level = NoiseLevel::Lv2;
  cfg.source_position_error_std = 0.1;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto p = make_problem(cfg, seed);
    const auto noise = noise_for(p);
    SolverOptions opts;
    opts.step_threshold = 1e-9;
    const auto res = gauss_newton(p.init, p.z, noise, p.scenario.c, opts);
    ASSERT_TRUE(res.converged);
    const Eigen::MatrixXd j = jacobian(res.estimate, p.z, p.scenario.c);
    const Eigen::VectorXd e = predict(res.estimate, p.z, p.scenario.c) - p.z.values;
    const double w = 1.0 / (cfg.weight_sigma() * cfg.weight_sigma());
    const double grad = (j.transpose() * e * w).norm();
    const double scale = (j.transpose() * p.z.values * w).norm();
    EXPECT_LT(grad, 1e-6 * (1.0 + scale)) << "seed " << seed;
  }
}

TEST(GaussNewton, UniformReweightingLeavesIteratesUnchanged) {
  auto cfg = noiseless_config();
  cfg.noise_level = NoiseLevel::Lv3;
  cfg.source_position_error_std = 0.1;
  const auto p = make_problem(cfg, 4);
  const auto noise = noise_for(p);
  SolverOptions opts;
  opts.step_threshold = 1e-12;
  opts.max_iterations = 10;
  const auto a = gauss_newton(p.init, p.z, noise, p.scenario.c, opts);
  for (double factor : {0.01, 3.0, 1e4}) {
    const auto b = gauss_newton(p.init, p.z, noise.scaled(factor), p.scenario.c, opts);
    ASSERT_EQ(a.step_norm_trace.size(), b.step_norm_trace.size());
    for (std::size_t k = 0; k < a.step_norm_trace.size(); ++k)
      EXPECT_NEAR(a.step_norm_trace[k], b.step_norm_trace[k], 1e-10);
    EXPECT_LT(max_error(a.estimate, b.estimate), 1e-10);
  }
}

TEST(GaussNewton, MicrophonePermutationCommutes) {
  auto cfg = noiseless_config();
  cfg.noise_level = NoiseLevel::Lv2;
  cfg.source_position_error_std = 0.1;
  const auto p = make_problem(cfg, 5);
  // Reference 0 keeps its index; the others are permuted, so every
  // measurement block is a row permutation of the original.
  const std::vector<std::size_t> perm{0, 5, 3, 7, 1, 6, 2, 4};  // new index i holds old mic perm[i]
  std::vector<Vec3> init(8);
  for (std::size_t i = 0; i < 8; ++i) init[i] = p.init[perm[i]];
  MeasurementSet zp = p.z;
  for (std::size_t k = 0; k < p.z.events.size(); ++k)
    for (std::size_t i = 1; i < 8; ++i) zp.values[7 * k + (i - 1)] = p.z.values[7 * k + (perm[i] - 1)];

  const auto a = gauss_newton(p.init, p.z, noise_for(p), p.scenario.c);
  const auto b = gauss_newton(MicArray(init), zp, noise_for(p), p.scenario.c);
  ASSERT_EQ(a.iterations_used, b.iterations_used);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_LT((b.estimate[i] - a.estimate[perm[i]]).norm(), 1e-9);
}

TEST(GaussNewton, FixedMicrophonesStayPut) {
  auto cfg = noiseless_config();
  cfg.known_reference = true;
  const auto p = make_problem(cfg, 2);
  SolverOptions opts;
  opts.fixed_mics = p.scenario.known_mics;
  opts.step_threshold = 1e-9;
  const auto res = gauss_newton(p.init, p.z, noise_for(p), p.scenario.c, opts);
  ASSERT_EQ(p.scenario.known_mics.size(), 1u);
  const auto k = p.scenario.known_mics[0];
  EXPECT_EQ(res.estimate[k], p.init[k]);
  EXPECT_LT(max_error(res.estimate, p.scenario.true_mics), 1e-9);
}

TEST(GaussNewton, PerMicrophoneModeDecreasesResidual) {
  const auto p = make_problem(noiseless_config(), 6);
  const auto noise = noise_for(p);
  SolverOptions opts;
  opts.mode = UpdateMode::PerMicrophone;
  opts.step_threshold = 1e-12;
  double prev = weighted_residual(p.init, p.z, noise, p.scenario.c);
  const double init_err = max_error(p.init, p.scenario.true_mics);
  double err = init_err;
  for (int sweeps : {1, 2, 5, 20, 100}) {
    opts.max_iterations = sweeps;
    const auto res = gauss_newton(p.init, p.z, noise, p.scenario.c, opts);
    EXPECT_LE(res.final_weighted_residual, prev) << sweeps << " sweeps";
    prev = res.final_weighted_residual;
    err = max_error(res.estimate, p.scenario.true_mics);
  }
  EXPECT_LT(err, init_err);
}

TEST(GaussNewton, IterationCapReportsNotConverged) {
  const auto p = make_problem(noiseless_config(), 1);
  SolverOptions opts;
  opts.max_iterations = 1;
  const auto res = gauss_newton(p.init, p.z, noise_for(p), p.scenario.c, opts);
  EXPECT_FALSE(res.converged);
  EXPECT_EQ(res.iterations_used, 1);
  EXPECT_EQ(res.step_norm_trace.size(), 1u);
}

TEST(GaussNewton, Underdetermined) {
  auto p = make_problem(noiseless_config(), 1);
  p.z.events.resize(3);
  p.z.values.conservativeResize(21);  // 21 < 3 * 8
  EXPECT_THROW(gauss_newton(p.init, p.z, assemble_noise(1e-4, p.z.strategy, 8, 3), 340.0), UnderdeterminedProblem);

  MeasurementSet small;
  small.strategy = PairingStrategy::all_pairs();
  small.mic_count = 3;
  small.events = std::vector<EmissionEvent>(20, {0, 0, Vec3(0, 0, 2)});
  small.values = Eigen::VectorXd::Zero(60);
  const MicArray three(std::vector<Vec3>{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)});
  EXPECT_THROW(gauss_newton(three, small, assemble_noise(1e-4, small.strategy, 3, 20), 340.0), UnderdeterminedProblem);
}

TEST(GaussNewton, IllConditioned) {
  // Every emission from the same point: the normal matrix is singular.
  auto p = make_problem(noiseless_config(), 1);
  for (auto& e : p.z.events) e.source_position = Vec3(0.1, 0.2, 2.0);
  p.z.values = predict(p.scenario.true_mics, p.z, 340.0);
  EXPECT_THROW(gauss_newton(p.init, p.z, noise_for(p), 340.0), IllConditioned);

  // A well-posed problem against a very strict limit.
  const auto q = make_problem(noiseless_config(), 2);
  SolverOptions strict;
  strict.condition_limit = 10.0;
  try {
    gauss_newton(q.init, q.z, noise_for(q), 340.0, strict);
    FAIL() << "expected IllConditioned";
  } catch (const IllConditioned& e) {
    EXPECT_GT(e.condition(), 10.0);
  }
}

TEST(GaussNewton, DampingFloorRegularizes) {
  auto p = make_problem(noiseless_config(), 1);
  for (auto& e : p.z.events) e.source_position = Vec3(0.1, 0.2, 2.0);
  p.z.values = predict(p.scenario.true_mics, p.z, 340.0);
  SolverOptions opts;
  opts.damping_floor = 1e-3;
  const auto res = gauss_newton(p.init, p.z, noise_for(p), 340.0, opts);
  EXPECT_LE(res.final_weighted_residual, weighted_residual(p.init, p.z, noise_for(p), 340.0));
}

TEST(GaussNewton, DivergenceCarriesTrace) {
  auto p = make_problem(noiseless_config(), 1);
  p.z.values[0] = std::numeric_limits<double>::infinity();
  try {
    gauss_newton(p.init, p.z, noise_for(p), 340.0);
    FAIL() << "expected Divergence";
  } catch (const Divergence& e) {
    EXPECT_TRUE(e.step_norm_trace().empty());
  }
}

TEST(GaussNewton, DimensionAndOptionChecks) {
  const auto p = make_problem(noiseless_config(), 1);
  EXPECT_THROW(gauss_newton(MicArray(std::vector<Vec3>(7, Vec3(0, 0, 0))), p.z, noise_for(p), 340.0), DimensionMismatch);
  EXPECT_THROW(gauss_newton(p.init, p.z, assemble_noise(1e-4, p.z.strategy, 8, 3), 340.0), DimensionMismatch);
  SolverOptions bad;
  bad.max_iterations = 0;
  EXPECT_THROW(gauss_newton(p.init, p.z, noise_for(p), 340.0, bad), InvalidArgument);
  bad = {};
  bad.step_threshold = 0.0;
  EXPECT_THROW(gauss_newton(p.init, p.z, noise_for(p), 340.0, bad), InvalidArgument);
}
