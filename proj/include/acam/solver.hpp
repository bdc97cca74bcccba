#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "acam/error.hpp"
#include "acam/geometry.hpp"
#include "acam/tdoa_model.hpp"

namespace acam {

enum class UpdateMode {
  Joint,          // full stacked increment per iteration
  PerMicrophone,  // one microphone's 3 coordinates per inner step, one sweep per iteration
};

struct SolverOptions {
  int max_iterations = 50;
  double step_threshold = 1e-3;  // meters, on the Euclidean norm of the increment
  // Relative Tikhonov term: H + lambda * mean(diag H) * I. When the factorization
  // fails it is escalated x10 (from kFirstDamping) up to kMaxDamping.
  double damping_floor = 0.0;
  double condition_limit = 1e14;
  UpdateMode mode = UpdateMode::Joint;
  // Microphones whose positions are known; they contribute rows but are never updated.
  std::vector<std::size_t> fixed_mics;

  static constexpr double kFirstDamping = 1e-8;
  static constexpr double kMaxDamping = 1e-2;

  void validate() const {
    if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
    if (!(step_threshold > 0.0)) throw InvalidArgument("step_threshold must be positive");
    if (!(damping_floor >= 0.0)) throw InvalidArgument("damping_floor must be non-negative");
    if (!(condition_limit > 1.0)) throw InvalidArgument("condition_limit must exceed 1");
  }
};

struct CalibrationResult {
  MicArray estimate;
  int iterations_used = 0;
  double final_weighted_residual = 0.0;
  bool converged = false;
  std::vector<double> step_norm_trace;  // meters, one per iteration
};

/// ||g(x) - z||^2 in the W^-1 norm.
inline double weighted_residual(const MicArray& mics, const MeasurementSet& z, const NoiseModel& noise, double c) {
  z.validate();
  if (mics.size() != z.mic_count)
    throw DimensionMismatch("array has " + std::to_string(mics.size()) + " microphones, measurements expect " +
                            std::to_string(z.mic_count));
  if (noise.event_count() != z.events.size() || noise.block_size() != z.block_size())
    throw DimensionMismatch("noise model does not match measurement layout");
  return noise.weighted_norm_sq(predict(mics, z, c) - z.values);
}

namespace detail {

// Columns of the free microphones, in increasing microphone order.
inline std::vector<std::size_t> free_mics(std::size_t mic_count, const std::vector<std::size_t>& fixed) {
  std::vector<bool> is_fixed(mic_count, false);
  for (auto f : fixed) {
    if (f >= mic_count) throw InvalidArgument("fixed microphone index " + std::to_string(f) + " out of range");
    is_fixed[f] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mic_count; ++i)
    if (!is_fixed[i]) out.push_back(i);
  return out;
}

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& j, const std::vector<std::size_t>& mics) {
  Eigen::MatrixXd out(j.rows(), 3 * static_cast<Eigen::Index>(mics.size()));
  for (std::size_t k = 0; k < mics.size(); ++k)
    out.middleCols<3>(3 * static_cast<Eigen::Index>(k)) = j.middleCols<3>(3 * static_cast<Eigen::Index>(mics[k]));
  return out;
}

// W^-1 applied block-wise to the rows of `m`.
inline Eigen::MatrixXd apply_weight(const NoiseModel& noise, const Eigen::MatrixXd& m) {
  const auto b = static_cast<Eigen::Index>(noise.block_size());
  if (noise.is_diagonal()) {
    const Eigen::VectorXd w = noise.block_inverse().diagonal().replicate(static_cast<Eigen::Index>(noise.event_count()), 1);
    return w.asDiagonal() * m;
  }
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(noise.event_count()); ++k)
    out.middleRows(k * b, b) = noise.block_inverse() * m.middleRows(k * b, b);
  return out;
}

inline double condition_number(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// Solves H dx = -b. The conditioning test applies to H plus the configured
// damping floor; automatic escalation only retries a failed factorization.
inline Eigen::VectorXd solve_increment(const Eigen::MatrixXd& h, const Eigen::VectorXd& b, const SolverOptions& opts) {
  const double scale = std::max(h.diagonal().mean(), std::numeric_limits<double>::min());
  auto damped = [&](double lambda) {
    Eigen::MatrixXd hd = h;
    if (lambda > 0.0) hd.diagonal().array() += lambda * scale;
    return hd;
  };
  const double cond = condition_number(damped(opts.damping_floor));
  if (!(cond <= opts.condition_limit))
    throw IllConditioned("normal matrix is ill-conditioned (condition number " + std::to_string(cond) + ")", cond);

  double lambda = opts.damping_floor;
  for (;;) {
    Eigen::LLT<Eigen::MatrixXd> llt(damped(lambda));
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd dx = llt.solve(-b);
      if (dx.allFinite()) return dx;
    }
    if (lambda >= SolverOptions::kMaxDamping) break;
    lambda = lambda <= 0.0 ? SolverOptions::kFirstDamping : std::min(lambda * 10.0, SolverOptions::kMaxDamping);
  }
  throw IllConditioned("normal matrix could not be factored even with damping", cond);
}

inline MicArray with_updates(const MicArray& base, const std::vector<std::size_t>& mics, const Eigen::VectorXd& dx) {
  std::vector<Vec3> pts = base.positions();
  for (std::size_t k = 0; k < mics.size(); ++k) pts[mics[k]] += dx.segment<3>(3 * static_cast<Eigen::Index>(k));
  return MicArray(std::move(pts));
}

}  // namespace detail

/// Weighted Gauss-Newton on min ||g(x) - z||^2_{W^-1}.
///
/// Each iteration solves (J^T W^-1 J) dx = -J^T W^-1 (g(x) - z) and applies
/// x += dx. Stops with converged = true once ||dx|| < step_threshold (the step
/// is applied first), otherwise after max_iterations.
inline CalibrationResult gauss_newton(const MicArray& initial, const MeasurementSet& z, const NoiseModel& noise,
                                      double c, const SolverOptions& opts = {}) {
  opts.validate();
  z.validate();
  if (!(c > 0.0)) throw InvalidArgument("speed of sound must be positive");
  if (initial.size() != z.mic_count)
    throw DimensionMismatch("initial guess has " + std::to_string(initial.size()) + " microphones, measurements expect " +
                            std::to_string(z.mic_count));
  if (z.mic_count < 4) throw UnderdeterminedProblem("at least 4 microphones are required for 3-D calibration");
  if (noise.event_count() != z.events.size() || noise.block_size() != z.block_size())
    throw DimensionMismatch("noise model does not match measurement layout");

  const auto free = detail::free_mics(z.mic_count, opts.fixed_mics);
  if (free.empty()) throw InvalidArgument("every microphone is fixed; nothing to estimate");
  if (z.size() < 3 * free.size())
    throw UnderdeterminedProblem(std::to_string(z.size()) + " measurements cannot determine " +
                                 std::to_string(3 * free.size()) + " unknowns");

  CalibrationResult res;
  MicArray x = initial;
  auto diverged = [&](const std::string& why) { return Divergence(why, res.step_norm_trace); };

  for (int it = 0; it < opts.max_iterations; ++it) {
    Eigen::VectorXd step_total = Eigen::VectorXd::Zero(3 * static_cast<Eigen::Index>(free.size()));
    if (opts.mode == UpdateMode::Joint) {
      const Eigen::VectorXd e = predict(x, z, c) - z.values;
      if (!e.allFinite()) throw diverged("residual became non-finite at iteration " + std::to_string(it));
      const Eigen::MatrixXd j = detail::select_columns(jacobian(x, z, c), free);
      const Eigen::MatrixXd wj = detail::apply_weight(noise, j);
      const Eigen::MatrixXd h = j.transpose() * wj;
      const Eigen::VectorXd b = wj.transpose() * e;
      step_total = detail::solve_increment(h, b, opts);
      x = detail::with_updates(x, free, step_total);
    } else {
      for (std::size_t k = 0; k < free.size(); ++k) {
        const std::vector<std::size_t> one{free[k]};
        const Eigen::VectorXd e = predict(x, z, c) - z.values;
        if (!e.allFinite()) throw diverged("residual became non-finite at iteration " + std::to_string(it));
        const Eigen::MatrixXd j = detail::select_columns(jacobian(x, z, c), one);
        const Eigen::MatrixXd wj = detail::apply_weight(noise, j);
        const Eigen::VectorXd dx = detail::solve_increment(j.transpose() * wj, wj.transpose() * e, opts);
        step_total.segment<3>(3 * static_cast<Eigen::Index>(k)) = dx;
        x = detail::with_updates(x, one, dx);
      }
    }
    const double step = step_total.norm();
    res.step_norm_trace.push_back(step);
    res.iterations_used = it + 1;
    if (!std::isfinite(step)) throw diverged("increment became non-finite at iteration " + std::to_string(it));
    if (step < opts.step_threshold) {
      res.converged = true;
      break;
    }
  }

  const Eigen::VectorXd e = predict(x, z, c) - z.values;
  res.final_weighted_residual = noise.weighted_norm_sq(e);
  if (!std::isfinite(res.final_weighted_residual)) throw diverged("final residual is non-finite");
  res.estimate = std::move(x);
  return res;
}

}  // namespace acam
