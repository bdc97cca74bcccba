#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "acam/error.hpp"
#include "acam/geometry.hpp"
#include "acam/solver.hpp"
#include "acam/tdoa_model.hpp"

namespace acam {

// Exhaustive-search baseline. Needs a reference microphone whose position is
// known in the frame of the first board pose; every other microphone is
// searched independently on a cubic lattice around its nominal position.
struct GridOptions {
  double search_half_width = 0.5;  // meters
  double resolution = 0.05;        // meters
  MicArray nominal_array;          // rough prior, one entry per microphone (reference entry ignored)
  Vec3 known_ref_in_board1 = Vec3::Zero();

  void validate() const {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) throw InvalidArgument("grid resolution must be positive");
    if (!(search_half_width >= resolution) || !std::isfinite(search_half_width))
      throw InvalidArgument("grid half-width must be at least one resolution step (empty grid)");
    if (!all_finite(known_ref_in_board1)) throw InvalidArgument("known reference position is not finite");
  }

  // Lattice nodes per axis: 2 * floor(half_width / resolution) + 1.
  std::size_t nodes_per_axis() const {
    const auto half = static_cast<std::size_t>(std::floor(search_half_width / resolution + 1e-9));
    return 2 * half + 1;
  }
};

/// Grid-search calibration.
///
/// Stage 1 places the reference microphone at pose[0] * known_ref_in_board1.
/// Stage 2 visits, for every other microphone, all lattice nodes
/// nominal + resolution * (ix, iy, iz), |i*| <= floor(half_width / resolution),
/// in lexicographic (ix, iy, iz) order and keeps the first node with the
/// smallest weighted residual over that microphone's rows.
///
/// Requires SingleReference measurements. The result carries one pseudo
/// iteration whose step norm is the distance moved from the nominal array.
inline CalibrationResult grid_calibrate(const MeasurementSet& z, const std::vector<Pose>& poses, const GridOptions& opts,
                                        double c, const std::optional<NoiseModel>& noise = std::nullopt) {
  opts.validate();
  z.validate();
  if (!(c > 0.0)) throw InvalidArgument("speed of sound must be positive");
  if (z.strategy.is_all_pairs()) throw InvalidArgument("grid baseline requires single-reference measurements");
  if (poses.empty()) throw InvalidArgument("grid baseline needs the first board pose to anchor the reference");
  if (opts.nominal_array.size() != z.mic_count)
    throw DimensionMismatch("nominal array has " + std::to_string(opts.nominal_array.size()) +
                            " microphones, measurements expect " + std::to_string(z.mic_count));
  if (noise && (noise->event_count() != z.events.size() || noise->block_size() != z.block_size()))
    throw DimensionMismatch("noise model does not match measurement layout");

  const std::size_t n = z.mic_count;
  const std::size_t ref = z.strategy.ref_index();
  const std::size_t block = z.block_size();
  const std::size_t events = z.events.size();
  const Vec3 anchor = board_to_camera(poses.front(), opts.known_ref_in_board1);

  // Per-event source coordinates and reference distances.
  std::vector<double> sx(events), sy(events), sz(events), ref_dist(events);
  for (std::size_t e = 0; e < events; ++e) {
    const Vec3& s = z.events[e].source_position;
    sx[e] = s.x();
    sy[e] = s.y();
    sz[e] = s.z();
    ref_dist[e] = detail::checked_distance(anchor, s);
  }

  const auto pairs = z.strategy.pairs(n);
  const auto axis_nodes = opts.nodes_per_axis();
  const auto half = static_cast<long>(axis_nodes / 2);

  std::vector<Vec3> est = opts.nominal_array.positions();
  est[ref] = anchor;
  std::vector<double> target(events), weight(events);

  for (std::size_t row = 0; row < block; ++row) {
    const std::size_t mic = pairs[row].mic;
    // Work in distance units: cost = sum w (|node - s| - (c z + d_ref))^2.
    for (std::size_t e = 0; e < events; ++e) {
      const auto idx = static_cast<Eigen::Index>(e * block + row);
      target[e] = c * z.values[idx] + ref_dist[e];
      weight[e] = noise ? noise->block_inverse()(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(row)) : 1.0;
    }
    const Vec3 center = opts.nominal_array[mic];
    double best = std::numeric_limits<double>::infinity();
    Vec3 best_node = center;
    for (long ix = -half; ix <= half; ++ix) {
      const double px = center.x() + static_cast<double>(ix) * opts.resolution;
      for (long iy = -half; iy <= half; ++iy) {
        const double py = center.y() + static_cast<double>(iy) * opts.resolution;
        for (long iz = -half; iz <= half; ++iz) {
          const double pz = center.z() + static_cast<double>(iz) * opts.resolution;
          double cost = 0.0;
          for (std::size_t e = 0; e < events; ++e) {
            const double dx = px - sx[e], dy = py - sy[e], dz = pz - sz[e];
            const double r = std::sqrt(dx * dx + dy * dy + dz * dz) - target[e];
            cost += weight[e] * r * r;
          }
          if (cost < best) {
            best = cost;
            best_node = Vec3(px, py, pz);
          }
        }
      }
    }
    est[mic] = best_node;
  }

  CalibrationResult res;
  res.estimate = MicArray(std::move(est));
  res.iterations_used = 1;
  res.converged = true;
  res.step_norm_trace.push_back((res.estimate.stacked() - opts.nominal_array.stacked()).norm());
  const Eigen::VectorXd e = predict(res.estimate, z, c) - z.values;
  res.final_weighted_residual = noise ? noise->weighted_norm_sq(e) : e.squaredNorm();
  return res;
}

}  // namespace acam
