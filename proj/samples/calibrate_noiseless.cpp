// Simulates one noiseless dataset and recovers the microphone array from a
// perturbed initial guess.

#include <cstdio>

#include "acam/acam.hpp"

int main() {
  acam::SimConfig config;
  config.noise_level = acam::NoiseLevel::Custom;
  config.custom_sigma = 0.0;
  config.source_position_error_std = 0.0;

  const acam::Scenario sc = acam::trial_scenario(config, 0);
  const acam::MeasurementSet z = acam::simulate_measurements(sc, config, 7);
  const acam::MicArray init = acam::initial_guess(sc, config.init_range, 11);
  const auto noise = acam::assemble_noise(config.weight_sigma(), z.strategy, z.mic_count, z.events.size());

  const acam::CalibrationResult res = acam::gauss_newton(init, z, noise, sc.c, config.solver);
  std::printf("converged=%d iterations=%d\n", res.converged ? 1 : 0, res.iterations_used);
  for (std::size_t i = 0; i < sc.true_mics.size(); ++i) {
    const auto& p = res.estimate[i];
    std::printf("mic %zu: % .6f % .6f % .6f  error %.3g m\n", i, p.x(), p.y(), p.z(), (p - sc.true_mics[i]).norm());
  }
  return res.converged ? 0 : 1;
}
