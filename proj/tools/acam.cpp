// acam: acoustic-camera calibration command-line tool.
//
// Exit codes: 0 success, 2 invalid input (config, file format, dimensions),
// 3 runtime failure, 4 solver non-convergence / TDOA extraction failures.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acam/acam.hpp"
#include "manifest.hpp"

namespace {

using acam::io::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitNotConverged = 4;

// Flags shared by the simulation-driven commands.
struct SimFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string noise_level;
  std::string strategy;
};

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
  cmd->add_option("--config", f.config, "Simulation config JSON")->required();
  cmd->add_option("--out", f.out, "Output directory")->required();
  cmd->add_option("--seed", f.seed, "Override the config seed");
  cmd->add_option("--threads", f.threads, "Worker threads (ACAM_THREADS overrides)");
  cmd->add_option("--noise-level", f.noise_level, "Override noise level")
      ->check(CLI::IsMember({"lv1", "lv2", "lv3", "lv4", "custom"}));
  cmd->add_option("--strategy", f.strategy, "Override pairing strategy")->check(CLI::IsMember({"single-ref", "all-pairs"}));
}

acam::SimConfig load_sim_config(const SimFlags& f) {
  acam::SimConfig c = acam::io::read_sim_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.noise_level.empty()) c.noise_level = acam::parse_noise_level(f.noise_level);
  if (!f.strategy.empty())
    c.strategy = f.strategy == "all-pairs" ? acam::PairingStrategy::all_pairs() : acam::PairingStrategy::single_reference(0);
  c.threads = acam::resolve_threads(f.threads.value_or(c.threads));
  c.validate();
  return c;
}

acam::cli::RunManifest manifest_for(const std::string& command, const std::string& config_path, std::uint64_t seed,
                                    unsigned threads) {
  acam::cli::RunManifest m;
  m.command = command;
  m.config_path = config_path;
  m.seed = seed;
  m.threads = threads;
  m.add_input(config_path);
  return m;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// --- simulate ---------------------------------------------------------------

int cmd_simulate(const SimFlags& f) {
  const auto config = load_sim_config(f);
  auto manifest = manifest_for("simulate", f.config, config.seed, config.threads);
  const auto report = acam::run_monte_carlo(config);
  json j = acam::io::mc_report_json(report);
  j["manifest"] = manifest.to_json();
  acam::io::write_atomic((fs::path(f.out) / "report.json").string(), dump(j));
  acam::io::write_atomic((fs::path(f.out) / "trials.csv").string(), acam::io::per_trial_csv(report));
  std::cout << "rmse_m " << report.rmse << " convergence_rate " << report.convergence_rate << " failed "
            << report.failed_trials << "\n";
  return kExitOk;
}

// --- compare ----------------------------------------------------------------

int cmd_compare(const SimFlags& f) {
  const auto base = load_sim_config(f);
  auto manifest = manifest_for("compare", f.config, base.seed, base.threads);

  std::vector<acam::NoiseLevel> levels;
  if (!f.noise_level.empty() || base.noise_level == acam::NoiseLevel::Custom)
    levels.push_back(base.noise_level);
  else
    levels = {acam::NoiseLevel::Lv1, acam::NoiseLevel::Lv2, acam::NoiseLevel::Lv3, acam::NoiseLevel::Lv4};

  std::string table = "noise_level,sigma_s,ours1_single_ref_rmse_m,ours2_all_pairs_rmse_m,ours3_known_ref_rmse_m,"
                      "baseline_grid_rmse_m\n";
  json rows = json::array();
  for (const auto lv : levels) {
    acam::SimConfig c = base;
    c.noise_level = lv;
    c.method = acam::Method::GaussNewton;
    c.known_reference = false;
    c.strategy = acam::PairingStrategy::single_reference(0);
    const auto ours1 = acam::run_monte_carlo(c);
    c.strategy = acam::PairingStrategy::all_pairs();
    const auto ours2 = acam::run_monte_carlo(c);
    c.strategy = acam::PairingStrategy::single_reference(0);
    c.known_reference = true;
    const auto ours3 = acam::run_monte_carlo(c);
    c.method = acam::Method::Grid;
    const auto grid = acam::run_monte_carlo(c);

    const double sigma = c.noise_sigma();
    table += acam::to_string(lv) + "," + acam::io::format_double(sigma) + "," + acam::io::format_double(ours1.rmse) + "," +
             acam::io::format_double(ours2.rmse) + "," + acam::io::format_double(ours3.rmse) + "," +
             acam::io::format_double(grid.rmse) + "\n";
    auto summary = [](const acam::McReport& r) {
      return json{{"rmse_m", r.rmse}, {"convergence_rate", r.convergence_rate}, {"failed_trials", r.failed_trials}};
    };
    rows.push_back({{"noise_level", acam::to_string(lv)},
                    {"sigma_s", sigma},
                    {"ours1_single_ref", summary(ours1)},
                    {"ours2_all_pairs", summary(ours2)},
                    {"ours3_known_ref", summary(ours3)},
                    {"baseline_grid", summary(grid)}});
    std::cout << acam::to_string(lv) << ": ours1 " << ours1.rmse << " ours2 " << ours2.rmse << " ours3 " << ours3.rmse
              << " baseline " << grid.rmse << "\n";
  }
  json j{{"rows", rows},
         {"grid_settings", {{"half_width_m", base.grid_half_width}, {"resolution_m", base.grid_resolution}}},
         {"config", acam::io::sim_config_json(base)},
         {"manifest", manifest.to_json()}};
  acam::io::write_atomic((fs::path(f.out) / "comparison.json").string(), dump(j));
  acam::io::write_atomic((fs::path(f.out) / "table.csv").string(), table);
  return kExitOk;
}

// --- export / synth-audio -----------------------------------------------------

// Calibration config matching trial 0 of a simulation run.
acam::io::CalibConfig calib_config_for(const acam::SimConfig& c, const acam::Scenario& sc) {
  acam::io::CalibConfig cc;
  cc.speed_of_sound = sc.c;
  cc.mic_count = sc.true_mics.size();
  cc.strategy = c.effective_strategy();
  cc.board_sources = sc.board.sources();
  cc.initial_positions = acam::initial_guess(sc, c.init_range, acam::derive_seed(c.seed, acam::kInitStream, 0));
  cc.sigma_tdoa = c.weight_sigma();
  cc.solver = c.solver;
  cc.solver.fixed_mics = sc.known_mics;
  cc.method = c.method == acam::Method::Grid ? acam::io::CalibMethod::Grid : acam::io::CalibMethod::GaussNewton;
  cc.grid_half_width = c.grid_half_width;
  cc.grid_resolution = c.grid_resolution;
  cc.known_ref_in_board1 = sc.known_ref_in_board1;
  return cc;
}

void write_scenario_files(const fs::path& out, const acam::Scenario& sc, const acam::io::CalibConfig& cc,
                          const json& manifest) {
  acam::io::write_atomic((out / "poses.json").string(), dump(acam::io::poses_json(sc.poses)));
  acam::io::write_atomic((out / "truth.json").string(),
                         dump(json{{"positions", acam::io::mics_json(sc.true_mics)},
                                   {"known_mics", sc.known_mics},
                                   {"manifest", manifest}}));
  acam::io::write_atomic((out / "calib_config.json").string(), dump(acam::io::calib_config_json(cc)));
}

int cmd_export(const SimFlags& f) {
  const auto c = load_sim_config(f);
  auto manifest = manifest_for("export", f.config, c.seed, c.threads);
  const auto sc = acam::trial_scenario(c, 0);
  const auto z = acam::simulate_measurements(sc, c, acam::derive_seed(c.seed, acam::kTrialStream, 0));
  const fs::path out(f.out);
  write_scenario_files(out, sc, calib_config_for(c, sc), manifest.to_json());
  acam::io::write_atomic((out / "measurements.csv").string(), acam::io::measurements_csv(z));
  return kExitOk;
}

int cmd_synth_audio(const SimFlags& f, double sample_rate, double snr_db) {
  const auto c = load_sim_config(f);
  auto manifest = manifest_for("synth-audio", f.config, c.seed, c.threads);
  const auto sc = acam::trial_scenario(c, 0);
  const auto session = acam::synth_session(sc.true_mics, sc.events, sc.c, sample_rate, snr_db,
                                           acam::derive_seed(c.seed, acam::kTrialStream, 0));
  const fs::path out(f.out);
  auto cc = calib_config_for(c, sc);
  cc.sample_rate = sample_rate;
  write_scenario_files(out, sc, cc, manifest.to_json());
  acam::io::write_atomic((out / "audio.wav").string(), acam::wav::encode(session.audio, acam::wav::SampleFormat::Float32));
  acam::io::write_atomic((out / "windows.csv").string(), acam::io::windows_csv(session.windows));
  return kExitOk;
}

// --- calibrate ---------------------------------------------------------------

struct CalibrateFlags {
  std::string poses, measurements, config, out;
};

int cmd_calibrate(const CalibrateFlags& f) {
  acam::cli::RunManifest manifest;
  manifest.command = "calibrate";
  manifest.config_path = f.config;
  for (const auto& p : {f.config, f.poses, f.measurements}) manifest.add_input(p);

  const auto cc = acam::io::read_calib_config(f.config);
  const auto poses = acam::io::read_poses(f.poses);
  auto z = acam::io::read_measurements(f.measurements, cc.mic_count, cc.strategy);
  if (cc.board_sources.empty()) throw acam::ParseError(f.config, 0, "board_sources is required for calibrate");
  if (cc.initial_positions.empty()) throw acam::ParseError(f.config, 0, "initial_positions is required for calibrate");
  try {
    acam::io::attach_sources(z, poses, acam::BoardLayout(cc.board_sources));
  } catch (const acam::DimensionMismatch& e) {
    throw acam::ParseError(f.measurements, 0, e.what());
  }
  const auto noise = acam::assemble_noise(cc.sigma_tdoa, z.strategy, z.mic_count, z.events.size());

  json report;
  int code = kExitOk;
  if (cc.method == acam::io::CalibMethod::Grid) {
    acam::GridOptions g;
    g.search_half_width = cc.grid_half_width;
    g.resolution = cc.grid_resolution;
    g.nominal_array = cc.initial_positions;
    g.known_ref_in_board1 = cc.known_ref_in_board1;
    const auto res = acam::grid_calibrate(z, poses, g, cc.speed_of_sound, noise);
    report = acam::io::result_json(res);
    report["grid_settings"] = acam::io::grid_settings_json(g);
  } else {
    try {
      const auto res = acam::gauss_newton(cc.initial_positions, z, noise, cc.speed_of_sound, cc.solver);
      report = acam::io::result_json(res);
      if (!res.converged) {
        std::cerr << "calibrate: solver stopped at the iteration cap without meeting the step threshold\n";
        code = kExitNotConverged;
      }
    } catch (const acam::Divergence& e) {
      report = {{"estimate", nullptr},
                {"iterations", e.step_norm_trace().size()},
                {"residual", nullptr},
                {"converged", false},
                {"step_norms", e.step_norm_trace()},
                {"error", e.what()}};
      std::cerr << "calibrate: " << e.what() << "\n";
      code = kExitNotConverged;
    }
  }
  report["config"] = acam::io::calib_config_json(cc);
  report["manifest"] = manifest.to_json();
  acam::io::write_atomic(f.out, dump(report));
  return code;
}

// --- extract -----------------------------------------------------------------

struct ExtractFlags {
  std::string wav, windows, config, out;
};

int cmd_extract(const ExtractFlags& f) {
  const auto cc = acam::io::read_calib_config(f.config);
  const auto audio = acam::wav::read(f.wav);
  if (audio.channel_count() != cc.mic_count)
    throw acam::ParseError(f.wav, 0,
                           "WAV has " + std::to_string(audio.channel_count()) + " channel(s), config expects mic_count = " +
                               std::to_string(cc.mic_count));
  if (cc.sample_rate > 0.0 && std::abs(cc.sample_rate - audio.sample_rate) > 1e-9)
    throw acam::ParseError(f.wav, 0, "sample rate does not match the config");
  const auto windows = acam::io::read_windows(f.windows);

  double max_lag = 0.0;
  if (cc.max_lag) {
    max_lag = *cc.max_lag;
  } else if (!cc.initial_positions.empty()) {
    max_lag = acam::default_max_lag(cc.initial_positions, cc.speed_of_sound);
  } else {
    throw acam::ParseError(f.config, 0, "need max_lag_s or initial_positions to bound the TDOA search");
  }

  try {
    const auto z = acam::extract_measurements(audio, windows, cc.strategy, max_lag);
    acam::io::write_atomic(f.out, acam::io::measurements_csv(z));
  } catch (const acam::ExtractionError& e) {
    for (const auto& fail : e.failures())
      std::cerr << "extract: window " << fail.window << " pair (" << fail.pair.mic << "," << fail.pair.ref
                << "): " << fail.message << "\n";
    return kExitNotConverged;
  } catch (const acam::InvalidArgument& e) {
    throw acam::ParseError(f.windows, 0, e.what());
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic-camera extrinsic calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", acam::cli::kToolVersion);

  SimFlags sim_flags, cmp_flags, export_flags, synth_flags;
  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo simulation; writes report.json and trials.csv");
  add_sim_flags(simulate, sim_flags);
  auto* compare = app.add_subcommand("compare", "Proposed solver vs grid baseline per noise level; writes table.csv");
  add_sim_flags(compare, cmp_flags);
  auto* exporter = app.add_subcommand("export", "Write a simulated dataset (trial 0) as poses/measurements files");
  add_sim_flags(exporter, export_flags);
  auto* synth = app.add_subcommand("synth-audio", "Write a synthetic multichannel WAV with emission windows");
  add_sim_flags(synth, synth_flags);
  double sample_rate = 48000.0, snr_db = 20.0;
  synth->add_option("--sample-rate", sample_rate, "Sample rate, Hz")->capture_default_str();
  synth->add_option("--snr-db", snr_db, "Signal-to-noise ratio, dB (inf = noiseless)")->capture_default_str();

  CalibrateFlags cal;
  auto* calibrate = app.add_subcommand("calibrate", "Estimate microphone positions from poses and TDOA measurements");
  calibrate->add_option("--poses", cal.poses, "Board pose JSON")->required();
  calibrate->add_option("--measurements", cal.measurements, "Measurement CSV")->required();
  calibrate->add_option("--config", cal.config, "Calibration config JSON")->required();
  calibrate->add_option("--out", cal.out, "Result JSON path")->required();

  ExtractFlags ext;
  auto* extract = app.add_subcommand("extract", "GCC-PHAT TDOA extraction from a multichannel WAV");
  extract->add_option("--wav", ext.wav, "Multichannel WAV")->required();
  extract->add_option("--windows", ext.windows, "Emission window CSV")->required();
  extract->add_option("--config", ext.config, "Calibration config JSON")->required();
  extract->add_option("--out", ext.out, "Measurement CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*simulate) return cmd_simulate(sim_flags);
    if (*compare) return cmd_compare(cmp_flags);
    if (*exporter) return cmd_export(export_flags);
    if (*synth) return cmd_synth_audio(synth_flags, sample_rate, snr_db);
    if (*calibrate) return cmd_calibrate(cal);
    if (*extract) return cmd_extract(ext);
  } catch (const acam::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const acam::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const acam::DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
