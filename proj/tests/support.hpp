#pragma once

#include <cstdint>

#include "acam/acam.hpp"

namespace acam::test {

// Noiseless default-sized problem: cube array, 69 boards x 6 sources.
struct Problem {
  SimConfig config;
  Scenario scenario;
  MeasurementSet z;
  MicArray init;
};

inline SimConfig noiseless_config() {
  SimConfig c;
  c.noise_level = NoiseLevel::Custom;
  c.custom_sigma = 0.0;
  c.source_position_error_std = 0.0;
  return c;
}

inline Problem make_problem(const SimConfig& config, std::uint64_t seed) {
  Problem p;
  p.config = config;
  p.scenario = generate_scenario(config, derive_seed(seed, kScenarioStream, 0));
  p.z = simulate_measurements(p.scenario, config, derive_seed(seed, kTrialStream, 0));
  p.init = initial_guess(p.scenario, config.init_range, derive_seed(seed, kInitStream, 0));
  return p;
}

inline NoiseModel noise_for(const Problem& p) {
  return assemble_noise(p.config.weight_sigma(), p.z.strategy, p.z.mic_count, p.z.events.size());
}

inline double max_error(const MicArray& a, const MicArray& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
  return m;
}

}  // namespace acam::test
