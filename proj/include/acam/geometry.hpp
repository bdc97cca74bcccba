#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "acam/error.hpp"

namespace acam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

/// Rigid transform taking calibration-board coordinates into the camera frame:
/// p_camera = rotation * p_board + translation.
///
/// Construction rejects rotations that are not orthonormal with det +1 (within
/// 1e-9). Inputs are never re-orthonormalized.
class Pose {
 public:
  static constexpr double kOrthonormalTolerance = 1e-9;

  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {
    if (!rotation_.allFinite() || !translation_.allFinite()) {
      throw InvalidArgument("pose contains non-finite values");
    }
    const double ortho_err = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho_err > kOrthonormalTolerance) {
      throw InvalidArgument("pose rotation is not orthonormal (max |R^T R - I| = " +
                            std::to_string(ortho_err) + ")");
    }
    const double det = rotation_.determinant();
    if (std::abs(det - 1.0) > kOrthonormalTolerance) {
      throw InvalidArgument("pose rotation determinant is " + std::to_string(det) + ", expected +1");
    }
  }

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }

  Pose inverse() const {
    Pose inv;
    inv.rotation_ = rotation_.transpose();
    inv.translation_ = -(inv.rotation_ * translation_);
    return inv;
  }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Maps a board-frame source position into the camera frame.
inline Vec3 board_to_camera(const Pose& pose, const Vec3& source_board) { return pose.apply(source_board); }

// Free-form checkerboard description; carried through files, unused by the math.
struct CheckerSpec {
  int rows = 0;
  int cols = 0;
  double square_size = 0.0;  // meters
};

/// Sound-source positions fixed on the calibration board, in the board frame.
class BoardLayout {
 public:
  explicit BoardLayout(std::vector<Vec3> sources, CheckerSpec checker = {})
      : sources_(std::move(sources)), checker_(checker) {
    if (sources_.empty()) throw InvalidArgument("board layout needs at least one source");
    for (const auto& s : sources_) {
      if (!all_finite(s)) throw InvalidArgument("board source position is not finite");
    }
  }

  std::size_t size() const noexcept { return sources_.size(); }
  const Vec3& operator[](std::size_t j) const { return sources_[j]; }
  const std::vector<Vec3>& sources() const noexcept { return sources_; }
  const CheckerSpec& checker() const noexcept { return checker_; }

  // M sources evenly spaced on a circle of `radius` in the board plane (z = 0),
  // first source on the +x axis.
  static BoardLayout ring(std::size_t count, double radius) {
    if (count == 0) throw InvalidArgument("board layout needs at least one source");
    std::vector<Vec3> pts;
    pts.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(count);
      pts.emplace_back(radius * std::cos(a), radius * std::sin(a), 0.0);
    }
    return BoardLayout(std::move(pts));
  }

 private:
  std::vector<Vec3> sources_;
  CheckerSpec checker_;
};

/// Microphone positions in the camera frame. The N >= 4 requirement is
/// checked by the solvers, not here.
class MicArray {
 public:
  MicArray() = default;
  explicit MicArray(std::vector<Vec3> positions) : positions_(std::move(positions)) {
    for (const auto& p : positions_) {
      if (!all_finite(p)) throw InvalidArgument("microphone position is not finite");
    }
  }

  std::size_t size() const noexcept { return positions_.size(); }
  bool empty() const noexcept { return positions_.empty(); }
  const Vec3& operator[](std::size_t i) const { return positions_[i]; }
  const std::vector<Vec3>& positions() const noexcept { return positions_; }

  // Stacked [x_0; x_1; ...; x_{N-1}], length 3N.
  Eigen::VectorXd stacked() const {
    Eigen::VectorXd x(3 * static_cast<Eigen::Index>(positions_.size()));
    for (std::size_t i = 0; i < positions_.size(); ++i) x.segment<3>(3 * static_cast<Eigen::Index>(i)) = positions_[i];
    return x;
  }

  static MicArray from_stacked(const Eigen::VectorXd& x) {
    if (x.size() % 3 != 0) throw DimensionMismatch("stacked microphone vector length is not a multiple of 3");
    std::vector<Vec3> pts(static_cast<std::size_t>(x.size() / 3));
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = x.segment<3>(3 * static_cast<Eigen::Index>(i));
    return MicArray(std::move(pts));
  }

  // Largest pairwise distance.
  double diameter() const {
    double d = 0.0;
    for (std::size_t i = 0; i < positions_.size(); ++i)
      for (std::size_t j = i + 1; j < positions_.size(); ++j) d = std::max(d, (positions_[i] - positions_[j]).norm());
    return d;
  }

 private:
  std::vector<Vec3> positions_;
};

/// Eight microphones on the vertices of an axis-aligned cube.
///
/// Vertex v (0..7) sits at center + (side/2) * (sx, sy, sz) where sx is -1 when
/// bit 2 of v is clear and +1 otherwise, sy follows bit 1 and sz bit 0. Vertex
/// 0 is therefore the (-,-,-) corner and vertex 7 the (+,+,+) corner.
inline MicArray make_cube_array(double side, const Vec3& center = Vec3::Zero()) {
  if (!(side > 0.0) || !std::isfinite(side)) throw InvalidArgument("cube side must be positive");
  const double h = side / 2.0;
  std::vector<Vec3> pts;
  pts.reserve(8);
  for (int v = 0; v < 8; ++v) {
    const double sx = (v & 4) ? h : -h;
    const double sy = (v & 2) ? h : -h;
    const double sz = (v & 1) ? h : -h;
    pts.push_back(center + Vec3(sx, sy, sz));
  }
  return MicArray(std::move(pts));
}

// Rotation by `angle` radians about unit `axis` (Rodrigues).
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace acam
