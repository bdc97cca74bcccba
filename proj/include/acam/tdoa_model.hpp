#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "acam/error.hpp"
#include "acam/geometry.hpp"

namespace acam {

// One row of a measurement block: tdoa = (|x_mic - s| - |x_ref - s|) / c.
struct MicPair {
  std::size_t mic;
  std::size_t ref;
  friend bool operator==(const MicPair&, const MicPair&) = default;
};

/// How TDOAs are formed from one emission.
///
/// Block ordering (every file format relies on it):
///  - SingleReference(r): rows (i, r) for i = 0..N-1, i != r, increasing i.
///  - AllPairs: for r = 0..N-2, for i = r+1..N-1, row (i, r). With r = 0 the
///    first N-1 rows equal the SingleReference(0) block.
class PairingStrategy {
 public:
  enum class Kind { SingleReference, AllPairs };

  static PairingStrategy single_reference(std::size_t ref_index) { return {Kind::SingleReference, ref_index}; }
  static PairingStrategy all_pairs() { return {Kind::AllPairs, 0}; }

  Kind kind() const noexcept { return kind_; }
  bool is_all_pairs() const noexcept { return kind_ == Kind::AllPairs; }
  std::size_t ref_index() const noexcept { return ref_; }

  std::size_t block_size(std::size_t mic_count) const {
    validate(mic_count);
    return is_all_pairs() ? mic_count * (mic_count - 1) / 2 : mic_count - 1;
  }

  std::vector<MicPair> pairs(std::size_t mic_count) const {
    validate(mic_count);
    std::vector<MicPair> out;
    if (is_all_pairs()) {
      out.reserve(mic_count * (mic_count - 1) / 2);
      for (std::size_t r = 0; r + 1 < mic_count; ++r)
        for (std::size_t i = r + 1; i < mic_count; ++i) out.push_back({i, r});
    } else {
      out.reserve(mic_count - 1);
      for (std::size_t i = 0; i < mic_count; ++i)
        if (i != ref_) out.push_back({i, ref_});
    }
    return out;
  }

  void validate(std::size_t mic_count) const {
    if (mic_count < 2) throw InvalidArgument("at least two microphones are needed to form a TDOA");
    if (!is_all_pairs() && ref_ >= mic_count) {
      throw InvalidArgument("reference index " + std::to_string(ref_) + " out of range for " +
                            std::to_string(mic_count) + " microphones");
    }
  }

  std::string name() const { return is_all_pairs() ? "all-pairs" : "single-ref"; }

  friend bool operator==(const PairingStrategy&, const PairingStrategy&) = default;

 private:
  PairingStrategy(Kind k, std::size_t r) : kind_(k), ref_(r) {}
  Kind kind_;
  std::size_t ref_;
};

// Emission of source j while the board sits at position k.
struct EmissionEvent {
  std::size_t board_index = 0;
  std::size_t source_index = 0;
  Vec3 source_position = Vec3::Zero();  // camera frame, meters
};

/// Stacked TDOA vector, one block per emission event, in the strategy's block order.
struct MeasurementSet {
  Eigen::VectorXd values;  // seconds
  PairingStrategy strategy = PairingStrategy::single_reference(0);
  std::vector<EmissionEvent> events;
  std::size_t mic_count = 0;

  std::size_t block_size() const { return strategy.block_size(mic_count); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }

  void validate() const {
    const std::size_t expected = block_size() * events.size();
    if (static_cast<std::size_t>(values.size()) != expected) {
      throw DimensionMismatch("measurement vector has " + std::to_string(values.size()) + " entries, expected " +
                              std::to_string(block_size()) + " x " + std::to_string(events.size()) + " = " +
                              std::to_string(expected));
    }
  }
};

/// Per-block covariance P, repeated along the diagonal of W once per event.
/// W itself is only materialized on request.
class NoiseModel {
 public:
  NoiseModel(Eigen::MatrixXd block_cov, std::size_t event_count, double sigma_tdoa = 0.0)
      : block_cov_(std::move(block_cov)), event_count_(event_count), sigma_(sigma_tdoa) {
    if (block_cov_.rows() != block_cov_.cols() || block_cov_.rows() == 0)
      throw DimensionMismatch("block covariance must be square and non-empty");
    if (!block_cov_.isApprox(block_cov_.transpose(), 1e-12))
      throw InvalidArgument("block covariance must be symmetric");
    llt_.compute(block_cov_);
    if (llt_.info() != Eigen::Success) throw InvalidArgument("block covariance must be positive definite");
    block_inv_ = llt_.solve(Eigen::MatrixXd::Identity(block_cov_.rows(), block_cov_.cols()));
    diagonal_ = block_cov_.isDiagonal(0.0);
  }

  const Eigen::MatrixXd& block_cov() const noexcept { return block_cov_; }
  const Eigen::MatrixXd& block_inverse() const noexcept { return block_inv_; }
  std::size_t block_size() const noexcept { return static_cast<std::size_t>(block_cov_.rows()); }
  std::size_t event_count() const noexcept { return event_count_; }
  double sigma_tdoa() const noexcept { return sigma_; }
  bool is_diagonal() const noexcept { return diagonal_; }

  // Dense W = diag_K(P). Size grows as (K * block)^2; intended for small problems.
  Eigen::MatrixXd weight_matrix() const {
    const auto b = static_cast<Eigen::Index>(block_size());
    const auto n = b * static_cast<Eigen::Index>(event_count_);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index e = 0; e < static_cast<Eigen::Index>(event_count_); ++e) w.block(e * b, e * b, b, b) = block_cov_;
    return w;
  }

  // e^T W^-1 e
  double weighted_norm_sq(const Eigen::VectorXd& e) const {
    const auto b = static_cast<Eigen::Index>(block_size());
    if (e.size() != b * static_cast<Eigen::Index>(event_count_))
      throw DimensionMismatch("residual length does not match noise model");
    double acc = 0.0;
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(event_count_); ++k) {
      const auto seg = e.segment(k * b, b);
      acc += seg.dot(block_inv_ * seg);
    }
    return acc;
  }

  NoiseModel scaled(double factor) const { return NoiseModel(block_cov_ * factor, event_count_, sigma_ * std::sqrt(factor)); }

 private:
  Eigen::MatrixXd block_cov_;
  Eigen::MatrixXd block_inv_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::size_t event_count_;
  double sigma_;
  bool diagonal_ = true;
};

inline constexpr double kDegenerateDistance = 1e-12;

namespace detail {
inline double checked_distance(const Vec3& mic, const Vec3& source) {
  const double d = (mic - source).norm();
  if (!(d >= kDegenerateDistance)) throw DegenerateGeometry("sound source coincides with a microphone");
  return d;
}
}  // namespace detail

/// TDOA of `mic` relative to `mic_ref` for one emission at `source`.
inline double tdoa_pair(const Vec3& mic, const Vec3& mic_ref, const Vec3& source, double c) {
  if (!(c > 0.0)) throw InvalidArgument("speed of sound must be positive");
  return (detail::checked_distance(mic, source) - detail::checked_distance(mic_ref, source)) / c;
}

/// Stacked g(x) for every event.
inline Eigen::VectorXd predict(const MicArray& mics, const std::vector<EmissionEvent>& events,
                               const PairingStrategy& strategy, double c) {
  if (events.empty()) throw InvalidArgument("no emission events");
  if (!(c > 0.0)) throw InvalidArgument("speed of sound must be positive");
  const std::size_t n = mics.size();
  const auto pairs = strategy.pairs(n);
  const auto b = static_cast<Eigen::Index>(pairs.size());
  Eigen::VectorXd out(b * static_cast<Eigen::Index>(events.size()));
  std::vector<double> dist(n);
  for (std::size_t e = 0; e < events.size(); ++e) {
    const Vec3& s = events[e].source_position;
    for (std::size_t i = 0; i < n; ++i) dist[i] = detail::checked_distance(mics[i], s);
    const auto row0 = static_cast<Eigen::Index>(e) * b;
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto& p = pairs[static_cast<std::size_t>(r)];
      out[row0 + r] = (dist[p.mic] - dist[p.ref]) / c;
    }
  }
  return out;
}

inline Eigen::VectorXd predict(const MicArray& mics, const MeasurementSet& z, double c) {
  return predict(mics, z.events, z.strategy, c);
}

/// d g / d x, rows = measurements, cols = 3N (mic i occupies columns 3i..3i+2).
/// Row (i, ref) holds u_i / c in mic i's columns and -u_ref / c in the
/// reference's, where u = (x - s) / |x - s|.
inline Eigen::MatrixXd jacobian(const MicArray& mics, const std::vector<EmissionEvent>& events,
                                const PairingStrategy& strategy, double c) {
  if (events.empty()) throw InvalidArgument("no emission events");
  if (!(c > 0.0)) throw InvalidArgument("speed of sound must be positive");
  const std::size_t n = mics.size();
  const auto pairs = strategy.pairs(n);
  const auto b = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(b * static_cast<Eigen::Index>(events.size()), 3 * static_cast<Eigen::Index>(n));
  std::vector<Vec3> unit(n);
  for (std::size_t e = 0; e < events.size(); ++e) {
    const Vec3& s = events[e].source_position;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 d = mics[i] - s;
      unit[i] = d / detail::checked_distance(mics[i], s) / c;
    }
    const auto row0 = static_cast<Eigen::Index>(e) * b;
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto& p = pairs[static_cast<std::size_t>(r)];
      j.block<1, 3>(row0 + r, 3 * static_cast<Eigen::Index>(p.mic)) = unit[p.mic].transpose();
      j.block<1, 3>(row0 + r, 3 * static_cast<Eigen::Index>(p.ref)) = -unit[p.ref].transpose();
    }
  }
  return j;
}

inline Eigen::MatrixXd jacobian(const MicArray& mics, const MeasurementSet& z, double c) {
  return jacobian(mics, z.events, z.strategy, c);
}

/// Isotropic TDOA noise: P = sigma^2 I, W = diag over `event_count` blocks.
inline NoiseModel assemble_noise(double sigma_tdoa, const PairingStrategy& strategy, std::size_t mic_count,
                                 std::size_t event_count) {
  if (!(sigma_tdoa > 0.0) || !std::isfinite(sigma_tdoa)) throw InvalidArgument("TDOA noise sigma must be positive");
  const auto b = static_cast<Eigen::Index>(strategy.block_size(mic_count));
  return NoiseModel(Eigen::MatrixXd::Identity(b, b) * (sigma_tdoa * sigma_tdoa), event_count, sigma_tdoa);
}

}  // namespace acam
