#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "acam/baseline_grid.hpp"
#include "acam/error.hpp"
#include "acam/gccphat.hpp"
#include "acam/geometry.hpp"
#include "acam/parallel.hpp"
#include "acam/solver.hpp"
#include "acam/tdoa_model.hpp"

namespace acam {

enum class NoiseLevel { Lv1, Lv2, Lv3, Lv4, Custom };

// TDOA noise standard deviations of the four preset levels, seconds.
inline constexpr double kLv1Sigma = 0.0666e-3;
inline constexpr double kLv2Sigma = 0.333e-3;
inline constexpr double kLv3Sigma = 0.999e-3;
inline constexpr double kLv4Sigma = 1.332e-3;

inline double preset_sigma(NoiseLevel lv) {
  switch (lv) {
    case NoiseLevel::Lv1: return kLv1Sigma;
    case NoiseLevel::Lv2: return kLv2Sigma;
    case NoiseLevel::Lv3: return kLv3Sigma;
    case NoiseLevel::Lv4: return kLv4Sigma;
    case NoiseLevel::Custom: break;
  }
  throw InvalidArgument("custom noise level has no preset sigma");
}

inline std::string to_string(NoiseLevel lv) {
  switch (lv) {
    case NoiseLevel::Lv1: return "lv1";
    case NoiseLevel::Lv2: return "lv2";
    case NoiseLevel::Lv3: return "lv3";
    case NoiseLevel::Lv4: return "lv4";
    case NoiseLevel::Custom: return "custom";
  }
  return "custom";
}

inline NoiseLevel parse_noise_level(const std::string& s) {
  if (s == "lv1") return NoiseLevel::Lv1;
  if (s == "lv2") return NoiseLevel::Lv2;
  if (s == "lv3") return NoiseLevel::Lv3;
  if (s == "lv4") return NoiseLevel::Lv4;
  if (s == "custom") return NoiseLevel::Custom;
  throw InvalidArgument("unknown noise level '" + s + "' (expected lv1..lv4 or custom)");
}

enum class Method { GaussNewton, Grid };

/// Everything a Monte-Carlo run depends on. Defaults follow the simulation
/// setup: 0.5 m cube, 340 m/s, 0.1 m source error, 0.5 m initial error,
/// 100 trials, 69 boards x 6 sources.
struct SimConfig {
  NoiseLevel noise_level = NoiseLevel::Lv1;
  double custom_sigma = 0.0;  // seconds, used when noise_level == Custom (0 = noiseless)
  double source_position_error_std = 0.1;
  double init_range = 0.5;
  int trials = 100;
  PairingStrategy strategy = PairingStrategy::single_reference(0);
  // Adds a microphone with known position (index 8 for the cube); with a
  // single-reference strategy it becomes the reference.
  bool known_reference = false;
  Vec3 known_reference_position = Vec3(0.0, 0.35, 0.0);
  int boards = 69;
  int sources_per_board = 6;
  double board_source_radius = 0.3;
  std::uint64_t seed = 1;
  double speed_of_sound = 340.0;
  double cube_side = 0.5;
  bool redraw_scenario = false;
  Method method = Method::GaussNewton;
  SolverOptions solver;
  double grid_half_width = 0.5;
  double grid_resolution = 0.05;
  unsigned threads = 0;  // 0 = hardware concurrency

  // Solver weighting. The weights only rescale the objective, so noiseless
  // runs fall back to a unit sigma.
  double noise_sigma() const { return noise_level == NoiseLevel::Custom ? custom_sigma : preset_sigma(noise_level); }
  double weight_sigma() const {
    const double s = noise_sigma();
    return s > 0.0 ? s : 1e-4;
  }

  std::size_t unknown_mic_count() const { return 8; }
  std::size_t mic_count() const { return unknown_mic_count() + (known_reference ? 1 : 0); }

  PairingStrategy effective_strategy() const {
    if (known_reference && !strategy.is_all_pairs()) return PairingStrategy::single_reference(unknown_mic_count());
    return strategy;
  }

  void validate() const {
    if (trials < 1) throw InvalidArgument("trials must be >= 1");
    if (boards < 1 || sources_per_board < 1) throw InvalidArgument("boards and sources_per_board must be >= 1");
    if (noise_level == NoiseLevel::Custom && !(custom_sigma >= 0.0)) throw InvalidArgument("custom sigma must be >= 0");
    if (!(source_position_error_std >= 0.0)) throw InvalidArgument("source position error std must be >= 0");
    if (!(init_range >= 0.0)) throw InvalidArgument("init_range must be >= 0");
    if (!(speed_of_sound > 0.0)) throw InvalidArgument("speed of sound must be positive");
    if (!(cube_side > 0.0)) throw InvalidArgument("cube side must be positive");
    if (!(board_source_radius > 0.0)) throw InvalidArgument("board source radius must be positive");
    effective_strategy().validate(mic_count());
    solver.validate();
    if (method == Method::Grid) {
      if (!known_reference || strategy.is_all_pairs())
        throw InvalidArgument("grid method needs known_reference with a single-ref strategy");
      GridOptions g;
      g.search_half_width = grid_half_width;
      g.resolution = grid_resolution;
      g.validate();
    }
  }
};

struct Scenario {
  MicArray true_mics;
  std::vector<Pose> poses;
  BoardLayout board = BoardLayout::ring(1, 1.0);
  double c = 340.0;
  std::vector<EmissionEvent> events;      // board-major, then source index
  std::vector<std::size_t> known_mics;    // indices with known positions
  Vec3 known_ref_in_board1 = Vec3::Zero();
};

// Independent 64-bit seed for stream `stream` / item `index` of a run.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline std::vector<EmissionEvent> make_events(const std::vector<Pose>& poses, const BoardLayout& board) {
  std::vector<EmissionEvent> events;
  events.reserve(poses.size() * board.size());
  for (std::size_t k = 0; k < poses.size(); ++k)
    for (std::size_t j = 0; j < board.size(); ++j) events.push_back({k, j, board_to_camera(poses[k], board[j])});
  return events;
}

/// Board poses drawn in front of the camera: translation x, y ~ U(-1, 1) m,
/// z ~ U(1, 3) m; orientation = facing the camera (board +z toward -z of the
/// camera) composed with a rotation of U(0, 45 deg) about a uniformly random axis.
inline Scenario generate_scenario(const SimConfig& config, std::uint64_t seed) {
  if (config.boards < 1 || config.sources_per_board < 1) throw InvalidArgument("boards and sources_per_board must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lateral(-1.0, 1.0), depth(1.0, 3.0), tilt(0.0, std::numbers::pi / 4.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Scenario sc;
  sc.c = config.speed_of_sound;
  auto mics = make_cube_array(config.cube_side).positions();
  if (config.known_reference) {
    mics.push_back(config.known_reference_position);
    sc.known_mics.push_back(mics.size() - 1);
  }
  sc.true_mics = MicArray(std::move(mics));
  sc.board = BoardLayout::ring(static_cast<std::size_t>(config.sources_per_board), config.board_source_radius);

  const Mat3 facing = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
  sc.poses.reserve(static_cast<std::size_t>(config.boards));
  for (int k = 0; k < config.boards; ++k) {
    const Vec3 t(lateral(rng), lateral(rng), depth(rng));
    Vec3 axis(gauss(rng), gauss(rng), gauss(rng));
    if (axis.norm() < 1e-12) axis = Vec3::UnitX();
    const Mat3 r = axis_angle(axis, tilt(rng)) * facing;
    sc.poses.emplace_back(r, t);
  }
  sc.events = make_events(sc.poses, sc.board);
  if (config.known_reference)
    sc.known_ref_in_board1 = sc.poses.front().inverse().apply(config.known_reference_position);
  return sc;
}

/// Noisy TDOAs. Each event's source is displaced by N(0, source_std^2) per
/// axis before the model is evaluated, then N(0, sigma^2) is added to every
/// entry. The returned events keep the nominal source positions.
inline MeasurementSet simulate_measurements(const Scenario& sc, const SimConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto strategy = config.effective_strategy();
  std::vector<EmissionEvent> perturbed = sc.events;
  if (config.source_position_error_std > 0.0) {
    for (auto& ev : perturbed)
      for (int a = 0; a < 3; ++a) ev.source_position[a] += config.source_position_error_std * gauss(rng);
  }
  MeasurementSet z;
  z.strategy = strategy;
  z.events = sc.events;
  z.mic_count = sc.true_mics.size();
  z.values = predict(sc.true_mics, perturbed, strategy, sc.c);
  const double sigma = config.noise_sigma();
  if (sigma > 0.0)
    for (Eigen::Index i = 0; i < z.values.size(); ++i) z.values[i] += sigma * gauss(rng);
  return z;
}

/// sqrt(mean over trials and microphones of |x_hat_i - x_i|^2).
inline double rmse(const std::vector<MicArray>& estimates, const MicArray& truth) {
  if (estimates.empty()) throw InvalidArgument("no estimates");
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& est : estimates) {
    if (est.size() != truth.size()) throw DimensionMismatch("estimate and truth differ in microphone count");
    for (std::size_t i = 0; i < truth.size(); ++i) {
      acc += (est[i] - truth[i]).squaredNorm();
      ++count;
    }
  }
  return std::sqrt(acc / static_cast<double>(count));
}

struct TrialOutcome {
  std::vector<double> mic_errors;  // meters, one per unknown microphone
  bool converged = false;
  bool failed = false;  // solver threw; excluded from RMSE
  int iterations = 0;
  std::string message;
};

struct McReport {
  SimConfig config;
  double rmse = 0.0;  // over non-failed trials
  double convergence_rate = 0.0;
  std::size_t failed_trials = 0;
  std::vector<TrialOutcome> trials;
  double wall_time = 0.0;  // seconds

  // Recomputes RMSE from per-trial errors.
  double recompute_rmse() const {
    double acc = 0.0;
    std::size_t count = 0;
    for (const auto& t : trials) {
      if (t.failed) continue;
      for (double e : t.mic_errors) {
        acc += e * e;
        ++count;
      }
    }
    return count ? std::sqrt(acc / static_cast<double>(count)) : std::numeric_limits<double>::quiet_NaN();
  }
};

// Seed streams.
inline constexpr std::uint64_t kScenarioStream = 1;
inline constexpr std::uint64_t kTrialStream = 2;
inline constexpr std::uint64_t kInitStream = 3;

// Uniform point in a ball of the given radius.
template <typename Rng>
Vec3 uniform_in_ball(Rng& rng, double radius) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
  const double n = dir.norm();
  if (n < 1e-300) return Vec3::Zero();
  return dir / n * (radius * std::cbrt(unit(rng)));
}

/// Initial guess: each unknown microphone displaced uniformly within a ball
/// of radius init_range around its true position; known ones stay exact.
inline MicArray initial_guess(const Scenario& sc, double init_range, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vec3> pts = sc.true_mics.positions();
  std::vector<bool> known(pts.size(), false);
  for (auto k : sc.known_mics) known[k] = true;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (!known[i]) pts[i] += uniform_in_ball(rng, init_range);
  return MicArray(std::move(pts));
}

/// Scenario used by trial `trial` of a run.
inline Scenario trial_scenario(const SimConfig& config, std::size_t trial) {
  const std::uint64_t idx = config.redraw_scenario ? trial : 0;
  return generate_scenario(config, derive_seed(config.seed, kScenarioStream, idx));
}

/// One Monte-Carlo trial: fresh measurement noise and initial guess.
inline TrialOutcome run_trial(const SimConfig& config, const Scenario& sc, std::size_t trial) {
  TrialOutcome out;
  try {
    const MeasurementSet z = simulate_measurements(sc, config, derive_seed(config.seed, kTrialStream, trial));
    const MicArray init = initial_guess(sc, config.init_range, derive_seed(config.seed, kInitStream, trial));
    CalibrationResult res;
    if (config.method == Method::Grid) {
      GridOptions g;
      g.search_half_width = config.grid_half_width;
      g.resolution = config.grid_resolution;
      g.nominal_array = init;
      g.known_ref_in_board1 = sc.known_ref_in_board1;
      res = grid_calibrate(z, sc.poses, g, sc.c, assemble_noise(config.weight_sigma(), z.strategy, z.mic_count, z.events.size()));
    } else {
      SolverOptions opts = config.solver;
      opts.fixed_mics = sc.known_mics;
      res = gauss_newton(init, z, assemble_noise(config.weight_sigma(), z.strategy, z.mic_count, z.events.size()), sc.c,
                         opts);
    }
    std::vector<bool> known(sc.true_mics.size(), false);
    for (auto k : sc.known_mics) known[k] = true;
    for (std::size_t i = 0; i < sc.true_mics.size(); ++i)
      if (!known[i]) out.mic_errors.push_back((res.estimate[i] - sc.true_mics[i]).norm());
    out.converged = res.converged;
    out.iterations = res.iterations_used;
  } catch (const Error& e) {
    out.failed = true;
    out.converged = false;
    out.message = e.what();
  }
  return out;
}

/// Runs config.trials independent trials (in parallel, deterministic given
/// the seed). Trials whose solver throws count as failed and non-converged and
/// are left out of the RMSE; trials that hit the iteration cap are kept.
inline McReport run_monte_carlo(const SimConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  McReport rep;
  rep.config = config;
  rep.trials.resize(static_cast<std::size_t>(config.trials));
  std::optional<Scenario> fixed;
  if (!config.redraw_scenario) fixed = trial_scenario(config, 0);
  parallel_for(rep.trials.size(), resolve_threads(config.threads), [&](std::size_t t) {
    rep.trials[t] = fixed ? run_trial(config, *fixed, t) : run_trial(config, trial_scenario(config, t), t);
  });
  std::size_t converged = 0;
  for (const auto& t : rep.trials) {
    if (t.failed) ++rep.failed_trials;
    if (t.converged) ++converged;
  }
  rep.convergence_rate = static_cast<double>(converged) / static_cast<double>(rep.trials.size());
  rep.rmse = rep.recompute_rmse();
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Synthetic recording of one event of a scenario (see acam::synth_emission).
inline AudioBuffer synth_emission(const Scenario& sc, const EmissionEvent& event, double sample_rate, double snr_db,
                                  std::uint64_t seed) {
  return synth_emission(sc.true_mics, event, sc.c, sample_rate, snr_db, seed);
}

}  // namespace acam
