#pragma once

// File formats: pose JSON, measurement/window/per-trial CSV, configuration and
// report JSON. Doubles in CSV are written in shortest round-trip form.

#include <array>
#include <charconv>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "acam/baseline_grid.hpp"
#include "acam/error.hpp"
#include "acam/gccphat.hpp"
#include "acam/geometry.hpp"
#include "acam/simulator.hpp"
#include "acam/solver.hpp"
#include "acam/tdoa_model.hpp"

namespace acam::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Low-level helpers

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a temporary file in the same directory, then renames.
inline void write_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

inline json parse_json(const std::string& text, const std::string& name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(name, 0, e.what());
  }
}

inline double parse_double(const std::string& field, const std::string& file, std::size_t line) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || r.ptr != e) throw ParseError(file, line, "not a number: '" + field + "'");
  return v;
}

inline std::size_t parse_index(const std::string& field, const std::string& file, std::size_t line) {
  std::size_t v = 0;
  const char* b = field.data();
  const char* e = b + field.size();
  const auto r = std::from_chars(b, e, v);
  if (r.ec != std::errc{} || r.ptr != e) throw ParseError(file, line, "not a non-negative integer: '" + field + "'");
  return v;
}

inline std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Non-empty lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> csv_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream ss(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(ss, line)) {
    ++no;
    line = trim(line);
    if (!line.empty()) out.emplace_back(no, line);
  }
  return out;
}

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec_from(const json& j, const std::string& name, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ParseError(name, 0, what + " must be an array of 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_number()) throw ParseError(name, 0, what + " must be an array of 3 numbers");
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

inline json mics_json(const MicArray& m) {
  json a = json::array();
  for (const auto& p : m.positions()) a.push_back(vec_json(p));
  return a;
}

inline MicArray mics_from(const json& j, const std::string& name, const std::string& what) {
  if (!j.is_array()) throw ParseError(name, 0, what + " must be an array of [x, y, z] positions");
  std::vector<Vec3> pts;
  for (const auto& e : j) pts.push_back(vec_from(e, name, what + " entry"));
  try {
    return MicArray(std::move(pts));
  } catch (const InvalidArgument& e) {
    throw ParseError(name, 0, e.what());
  }
}

// Rejects keys outside `allowed` so that typos do not silently fall back to defaults.
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& name,
                       const std::string& where) {
  if (!j.is_object()) throw ParseError(name, 0, where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.contains(k)) throw ParseError(name, 0, "unknown key '" + k + "' in " + where);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& name) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(name, 0, "key '" + key + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Poses: [{"rotation": [9 numbers, row-major], "translation": [3 numbers]}, ...]

inline json poses_json(const std::vector<Pose>& poses) {
  json a = json::array();
  for (const auto& p : poses) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot.push_back(p.rotation()(r, c));
    a.push_back({{"rotation", rot}, {"translation", vec_json(p.translation())}});
  }
  return a;
}

inline std::vector<Pose> poses_from(const json& j, const std::string& name) {
  if (!j.is_array()) throw ParseError(name, 0, "pose file must be a JSON array");
  std::vector<Pose> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto& e = j[k];
    const std::string where = "pose " + std::to_string(k);
    check_keys(e, {"rotation", "translation"}, name, where);
    if (!e.contains("rotation") || !e["rotation"].is_array() || e["rotation"].size() != 9)
      throw ParseError(name, 0, where + ": rotation must be 9 numbers (row-major)");
    Mat3 r;
    for (int i = 0; i < 9; ++i) {
      const auto& v = e["rotation"][static_cast<std::size_t>(i)];
      if (!v.is_number()) throw ParseError(name, 0, where + ": rotation must be 9 numbers (row-major)");
      r(i / 3, i % 3) = v.get<double>();
    }
    if (!e.contains("translation")) throw ParseError(name, 0, where + ": missing translation");
    const Vec3 t = vec_from(e["translation"], name, where + " translation");
    try {
      out.emplace_back(r, t);
    } catch (const InvalidArgument& ex) {
      throw ParseError(name, 0, where + ": " + ex.what());
    }
  }
  return out;
}

inline std::vector<Pose> read_poses(const std::string& path) { return poses_from(parse_json(read_text(path), path), path); }

// ---------------------------------------------------------------------------
// Measurements CSV: event,board_index,source_index,pair_i,pair_ref,tdoa_seconds

inline constexpr const char* kMeasurementHeader = "event,board_index,source_index,pair_i,pair_ref,tdoa_seconds";

inline std::string measurements_csv(const MeasurementSet& z) {
  z.validate();
  const auto pairs = z.strategy.pairs(z.mic_count);
  std::string out = std::string(kMeasurementHeader) + "\n";
  for (std::size_t e = 0; e < z.events.size(); ++e) {
    for (std::size_t r = 0; r < pairs.size(); ++r) {
      out += std::to_string(e) + "," + std::to_string(z.events[e].board_index) + "," +
             std::to_string(z.events[e].source_index) + "," + std::to_string(pairs[r].mic) + "," +
             std::to_string(pairs[r].ref) + "," + format_double(z.values[static_cast<Eigen::Index>(e * pairs.size() + r)]) +
             "\n";
    }
  }
  return out;
}

/// Parses a measurement file and checks it follows the canonical block order
/// for (mic_count, strategy). Source positions are left at zero.
inline MeasurementSet parse_measurements(const std::string& text, std::size_t mic_count, const PairingStrategy& strategy,
                                         const std::string& name = "<measurements>") {
  const auto pairs = strategy.pairs(mic_count);
  const std::string block_desc = strategy.is_all_pairs()
                                     ? "N(N-1)/2 = " + std::to_string(pairs.size())
                                     : "N-1 = " + std::to_string(pairs.size());
  const auto lines = csv_lines(text);
  if (lines.empty() || lines.front().second != kMeasurementHeader)
    throw ParseError(name, lines.empty() ? 1 : lines.front().first,
                     std::string("expected header '") + kMeasurementHeader + "'");

  MeasurementSet z;
  z.strategy = strategy;
  z.mic_count = mic_count;
  std::vector<double> values;
  std::size_t rows_in_event = 0;
  std::size_t last_line = lines.front().first;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& [no, line] = lines[li];
    last_line = no;
    const auto f = split_csv(line);
    if (f.size() != 6) throw ParseError(name, no, "expected 6 fields, got " + std::to_string(f.size()));
    const std::size_t event = parse_index(f[0], name, no);
    const std::size_t board = parse_index(f[1], name, no);
    const std::size_t source = parse_index(f[2], name, no);
    const MicPair pair{parse_index(f[3], name, no), parse_index(f[4], name, no)};
    const double tdoa = parse_double(f[5], name, no);

    if (z.events.empty() || rows_in_event == pairs.size()) {
      if (!z.events.empty() && event == z.events.size() - 1)
        throw ParseError(name, no,
                         "event " + std::to_string(event) + " has more than " + std::to_string(pairs.size()) +
                             " rows, expected a block of " + block_desc);
      if (event != z.events.size())
        throw ParseError(name, no,
                         "event " + std::to_string(event) + " out of order; expected event " +
                             std::to_string(z.events.size()) + " (each event is a block of " + block_desc + " rows)");
      z.events.push_back({board, source, Vec3::Zero()});
      rows_in_event = 0;
    } else if (event != z.events.size() - 1) {
      throw ParseError(name, no,
                       "event " + std::to_string(z.events.size() - 1) + " has " + std::to_string(rows_in_event) +
                           " rows, expected a block of " + block_desc);
    } else if (board != z.events.back().board_index || source != z.events.back().source_index) {
      throw ParseError(name, no, "board/source index changes inside event " + std::to_string(event));
    }
    if (!(pair == pairs[rows_in_event]))
      throw ParseError(name, no,
                       "pair (" + f[3] + "," + f[4] + ") out of canonical order; expected (" +
                           std::to_string(pairs[rows_in_event].mic) + "," + std::to_string(pairs[rows_in_event].ref) +
                           ") as row " + std::to_string(rows_in_event + 1) + " of a block of " + block_desc);
    values.push_back(tdoa);
    ++rows_in_event;
  }
  if (z.events.empty()) throw ParseError(name, last_line, "no measurements");
  if (rows_in_event != pairs.size())
    throw ParseError(name, last_line,
                     "event " + std::to_string(z.events.size() - 1) + " has " + std::to_string(rows_in_event) +
                         " rows, expected a block of " + block_desc);
  z.values = Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  return z;
}

inline MeasurementSet read_measurements(const std::string& path, std::size_t mic_count, const PairingStrategy& strategy) {
  return parse_measurements(read_text(path), mic_count, strategy, path);
}

/// Fills event source positions from board poses and layout: s = R_k s_j + t_k.
inline void attach_sources(MeasurementSet& z, const std::vector<Pose>& poses, const BoardLayout& board) {
  for (std::size_t e = 0; e < z.events.size(); ++e) {
    auto& ev = z.events[e];
    if (ev.board_index >= poses.size())
      throw DimensionMismatch("event " + std::to_string(e) + " references board " + std::to_string(ev.board_index) +
                              " but only " + std::to_string(poses.size()) + " poses were given");
    if (ev.source_index >= board.size())
      throw DimensionMismatch("event " + std::to_string(e) + " references source " + std::to_string(ev.source_index) +
                              " but the board has " + std::to_string(board.size()));
    ev.source_position = board_to_camera(poses[ev.board_index], board[ev.source_index]);
  }
}

// ---------------------------------------------------------------------------
// Emission windows CSV: start_sample,length_samples,board_index,source_index

inline constexpr const char* kWindowHeader = "start_sample,length_samples,board_index,source_index";

inline std::string windows_csv(const std::vector<EmissionWindow>& windows) {
  std::string out = std::string(kWindowHeader) + "\n";
  for (const auto& w : windows)
    out += std::to_string(w.start_sample) + "," + std::to_string(w.length_samples) + "," + std::to_string(w.board_index) +
           "," + std::to_string(w.source_index) + "\n";
  return out;
}

inline std::vector<EmissionWindow> parse_windows(const std::string& text, const std::string& name = "<windows>") {
  const auto lines = csv_lines(text);
  if (lines.empty() || lines.front().second != kWindowHeader)
    throw ParseError(name, lines.empty() ? 1 : lines.front().first, std::string("expected header '") + kWindowHeader + "'");
  std::vector<EmissionWindow> out;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto& [no, line] = lines[li];
    const auto f = split_csv(line);
    if (f.size() != 4) throw ParseError(name, no, "expected 4 fields, got " + std::to_string(f.size()));
    out.push_back({parse_index(f[0], name, no), parse_index(f[1], name, no), parse_index(f[2], name, no),
                   parse_index(f[3], name, no)});
  }
  if (out.empty()) throw ParseError(name, lines.front().first, "window list is empty");
  return out;
}

inline std::vector<EmissionWindow> read_windows(const std::string& path) { return parse_windows(read_text(path), path); }

// ---------------------------------------------------------------------------
// Strategy / solver / grid settings

inline json strategy_json(const PairingStrategy& s) {
  json j{{"strategy", s.name()}};
  if (!s.is_all_pairs()) j["reference_index"] = s.ref_index();
  return j;
}

inline PairingStrategy parse_strategy(const std::string& s, std::size_t ref, const std::string& name) {
  if (s == "single-ref") return PairingStrategy::single_reference(ref);
  if (s == "all-pairs") return PairingStrategy::all_pairs();
  throw ParseError(name, 0, "unknown strategy '" + s + "' (expected single-ref or all-pairs)");
}

inline json solver_json(const SolverOptions& o) {
  json j{{"max_iterations", o.max_iterations},
         {"step_threshold_m", o.step_threshold},
         {"damping_floor", o.damping_floor},
         {"condition_limit", o.condition_limit},
         {"update_mode", o.mode == UpdateMode::Joint ? "joint" : "per-microphone"}};
  if (!o.fixed_mics.empty()) j["fixed_mics"] = o.fixed_mics;
  return j;
}

inline SolverOptions solver_from(const json& j, const std::string& name) {
  check_keys(j, {"max_iterations", "step_threshold_m", "damping_floor", "condition_limit", "update_mode", "fixed_mics"},
             name, "solver");
  SolverOptions o;
  o.max_iterations = get_or(j, "max_iterations", o.max_iterations, name);
  o.step_threshold = get_or(j, "step_threshold_m", o.step_threshold, name);
  o.damping_floor = get_or(j, "damping_floor", o.damping_floor, name);
  o.condition_limit = get_or(j, "condition_limit", o.condition_limit, name);
  const auto mode = get_or<std::string>(j, "update_mode", "joint", name);
  if (mode == "joint") o.mode = UpdateMode::Joint;
  else if (mode == "per-microphone") o.mode = UpdateMode::PerMicrophone;
  else throw ParseError(name, 0, "unknown update_mode '" + mode + "'");
  o.fixed_mics = get_or(j, "fixed_mics", o.fixed_mics, name);
  try {
    o.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(name, 0, std::string("solver: ") + e.what());
  }
  return o;
}

inline json grid_settings_json(const GridOptions& g) {
  return {{"half_width_m", g.search_half_width},
          {"resolution_m", g.resolution},
          {"nodes_per_axis", g.nodes_per_axis()},
          {"known_ref_in_board1", vec_json(g.known_ref_in_board1)},
          {"nominal_positions", mics_json(g.nominal_array)}};
}

// ---------------------------------------------------------------------------
// Simulation config

inline json sim_config_json(const SimConfig& c) {
  json j{{"noise_level", to_string(c.noise_level)},
         {"custom_sigma_s", c.custom_sigma},
         {"source_position_error_std_m", c.source_position_error_std},
         {"init_range_m", c.init_range},
         {"trials", c.trials},
         {"strategy", c.strategy.name()},
         {"reference_index", c.strategy.is_all_pairs() ? 0 : c.strategy.ref_index()},
         {"known_reference", c.known_reference},
         {"known_reference_position_m", vec_json(c.known_reference_position)},
         {"boards", c.boards},
         {"sources_per_board", c.sources_per_board},
         {"board_source_radius_m", c.board_source_radius},
         {"seed", c.seed},
         {"speed_of_sound", c.speed_of_sound},
         {"cube_side_m", c.cube_side},
         {"redraw_scenario", c.redraw_scenario},
         {"method", c.method == Method::Grid ? "grid" : "gauss-newton"},
         {"solver", solver_json(c.solver)},
         {"grid", {{"half_width_m", c.grid_half_width}, {"resolution_m", c.grid_resolution}}},
         {"threads", c.threads}};
  return j;
}

inline SimConfig sim_config_from(const json& j, const std::string& name) {
  check_keys(j,
             {"noise_level", "custom_sigma_s", "source_position_error_std_m", "init_range_m", "trials", "strategy",
              "reference_index", "known_reference", "known_reference_position_m", "boards", "sources_per_board",
              "board_source_radius_m", "seed", "speed_of_sound", "cube_side_m", "redraw_scenario", "method", "solver",
              "grid", "threads"},
             name, "simulation config");
  SimConfig c;
  try {
    c.noise_level = parse_noise_level(get_or<std::string>(j, "noise_level", "lv1", name));
  } catch (const InvalidArgument& e) {
    throw ParseError(name, 0, e.what());
  }
  c.custom_sigma = get_or(j, "custom_sigma_s", c.custom_sigma, name);
  c.source_position_error_std = get_or(j, "source_position_error_std_m", c.source_position_error_std, name);
  c.init_range = get_or(j, "init_range_m", c.init_range, name);
  c.trials = get_or(j, "trials", c.trials, name);
  c.strategy = parse_strategy(get_or<std::string>(j, "strategy", "single-ref", name),
                              get_or<std::size_t>(j, "reference_index", 0, name), name);
  c.known_reference = get_or(j, "known_reference", c.known_reference, name);
  if (j.contains("known_reference_position_m"))
    c.known_reference_position = vec_from(j["known_reference_position_m"], name, "known_reference_position_m");
  c.boards = get_or(j, "boards", c.boards, name);
  c.sources_per_board = get_or(j, "sources_per_board", c.sources_per_board, name);
  c.board_source_radius = get_or(j, "board_source_radius_m", c.board_source_radius, name);
  c.seed = get_or(j, "seed", c.seed, name);
  c.speed_of_sound = get_or(j, "speed_of_sound", c.speed_of_sound, name);
  c.cube_side = get_or(j, "cube_side_m", c.cube_side, name);
  c.redraw_scenario = get_or(j, "redraw_scenario", c.redraw_scenario, name);
  const auto method = get_or<std::string>(j, "method", "gauss-newton", name);
  if (method == "gauss-newton") c.method = Method::GaussNewton;
  else if (method == "grid") c.method = Method::Grid;
  else throw ParseError(name, 0, "unknown method '" + method + "'");
  if (j.contains("solver")) c.solver = solver_from(j["solver"], name);
  if (j.contains("grid")) {
    check_keys(j["grid"], {"half_width_m", "resolution_m"}, name, "grid");
    c.grid_half_width = get_or(j["grid"], "half_width_m", c.grid_half_width, name);
    c.grid_resolution = get_or(j["grid"], "resolution_m", c.grid_resolution, name);
  }
  c.threads = get_or(j, "threads", c.threads, name);
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(name, 0, e.what());
  }
  return c;
}

inline SimConfig read_sim_config(const std::string& path) { return sim_config_from(parse_json(read_text(path), path), path); }

// ---------------------------------------------------------------------------
// Calibration config, shared by `calibrate` and `extract`

enum class CalibMethod { GaussNewton, Grid };

struct CalibConfig {
  double speed_of_sound = 340.0;
  std::size_t mic_count = 8;
  PairingStrategy strategy = PairingStrategy::single_reference(0);
  std::vector<Vec3> board_sources;
  MicArray initial_positions;  // also the nominal array for the grid method
  double sigma_tdoa = 1e-4;    // seconds, weighting only
  CalibMethod method = CalibMethod::GaussNewton;
  SolverOptions solver;
  double grid_half_width = 0.5;
  double grid_resolution = 0.05;
  Vec3 known_ref_in_board1 = Vec3::Zero();
  std::optional<double> max_lag;  // seconds; default array diameter / c
  double sample_rate = 0.0;       // Hz; 0 = accept the WAV's rate
};

inline json calib_config_json(const CalibConfig& c) {
  json j{{"speed_of_sound", c.speed_of_sound}, {"mic_count", c.mic_count}};
  j.update(strategy_json(c.strategy));
  json src = json::array();
  for (const auto& s : c.board_sources) src.push_back(vec_json(s));
  j["board_sources"] = src;
  j["initial_positions"] = mics_json(c.initial_positions);
  j["sigma_tdoa_s"] = c.sigma_tdoa;
  j["method"] = c.method == CalibMethod::Grid ? "grid" : "gauss-newton";
  j["solver"] = solver_json(c.solver);
  j["grid"] = {{"half_width_m", c.grid_half_width},
               {"resolution_m", c.grid_resolution},
               {"known_ref_in_board1", vec_json(c.known_ref_in_board1)}};
  if (c.max_lag) j["max_lag_s"] = *c.max_lag;
  if (c.sample_rate > 0.0) j["sample_rate"] = c.sample_rate;
  return j;
}

inline CalibConfig calib_config_from(const json& j, const std::string& name) {
  check_keys(j,
             {"speed_of_sound", "mic_count", "strategy", "reference_index", "board_sources", "initial_positions",
              "sigma_tdoa_s", "method", "solver", "grid", "max_lag_s", "sample_rate"},
             name, "calibration config");
  CalibConfig c;
  c.speed_of_sound = get_or(j, "speed_of_sound", c.speed_of_sound, name);
  if (!(c.speed_of_sound > 0.0)) throw ParseError(name, 0, "speed_of_sound must be positive");
  if (!j.contains("mic_count")) throw ParseError(name, 0, "missing mic_count");
  c.mic_count = get_or<std::size_t>(j, "mic_count", 0, name);
  c.strategy = parse_strategy(get_or<std::string>(j, "strategy", "single-ref", name),
                              get_or<std::size_t>(j, "reference_index", 0, name), name);
  try {
    c.strategy.validate(c.mic_count);
  } catch (const InvalidArgument& e) {
    throw ParseError(name, 0, e.what());
  }
  if (j.contains("board_sources")) {
    if (!j["board_sources"].is_array()) throw ParseError(name, 0, "board_sources must be an array");
    for (const auto& s : j["board_sources"]) c.board_sources.push_back(vec_from(s, name, "board_sources entry"));
  }
  if (j.contains("initial_positions")) {
    c.initial_positions = mics_from(j["initial_positions"], name, "initial_positions");
    if (c.initial_positions.size() != c.mic_count)
      throw ParseError(name, 0,
                       "initial_positions has " + std::to_string(c.initial_positions.size()) + " entries, mic_count is " +
                           std::to_string(c.mic_count));
  }
  c.sigma_tdoa = get_or(j, "sigma_tdoa_s", c.sigma_tdoa, name);
  if (!(c.sigma_tdoa > 0.0)) throw ParseError(name, 0, "sigma_tdoa_s must be positive");
  const auto method = get_or<std::string>(j, "method", "gauss-newton", name);
  if (method == "gauss-newton") c.method = CalibMethod::GaussNewton;
  else if (method == "grid") c.method = CalibMethod::Grid;
  else throw ParseError(name, 0, "unknown method '" + method + "'");
  if (j.contains("solver")) c.solver = solver_from(j["solver"], name);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    check_keys(g, {"half_width_m", "resolution_m", "known_ref_in_board1"}, name, "grid");
    c.grid_half_width = get_or(g, "half_width_m", c.grid_half_width, name);
    c.grid_resolution = get_or(g, "resolution_m", c.grid_resolution, name);
    if (g.contains("known_ref_in_board1")) c.known_ref_in_board1 = vec_from(g["known_ref_in_board1"], name, "known_ref_in_board1");
  }
  if (j.contains("max_lag_s")) c.max_lag = get_or<double>(j, "max_lag_s", 0.0, name);
  c.sample_rate = get_or(j, "sample_rate", c.sample_rate, name);
  return c;
}

inline CalibConfig read_calib_config(const std::string& path) {
  return calib_config_from(parse_json(read_text(path), path), path);
}

// ---------------------------------------------------------------------------
// Reports

inline json result_json(const CalibrationResult& r) {
  return {{"estimate", mics_json(r.estimate)},
          {"iterations", r.iterations_used},
          {"residual", r.final_weighted_residual},
          {"converged", r.converged},
          {"step_norms", r.step_norm_trace}};
}

inline CalibrationResult result_from(const json& j, const std::string& name) {
  CalibrationResult r;
  try {
    r.estimate = mics_from(j.at("estimate"), name, "estimate");
    r.iterations_used = j.at("iterations").get<int>();
    r.final_weighted_residual = j.at("residual").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.step_norm_trace = j.at("step_norms").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(name, 0, e.what());
  }
  return r;
}

inline json mc_report_json(const McReport& r) {
  json trials = json::array();
  for (std::size_t t = 0; t < r.trials.size(); ++t) {
    const auto& o = r.trials[t];
    json e{{"trial", t}, {"converged", o.converged}, {"failed", o.failed}, {"iterations", o.iterations},
           {"mic_errors_m", o.mic_errors}};
    if (!o.message.empty()) e["message"] = o.message;
    trials.push_back(e);
  }
  return {{"rmse_m", r.rmse},
          {"convergence_rate", r.convergence_rate},
          {"failed_trials", r.failed_trials},
          {"divergence_policy",
           "trials whose solver raised an error are counted as failed and non-converged and excluded from rmse_m; "
           "trials stopped by the iteration cap are included and flagged non-converged"},
          {"config", sim_config_json(r.config)},
          {"trials", trials},
          {"wall_time_s", r.wall_time}};
}

inline std::string per_trial_csv(const McReport& r) {
  std::string out = "trial,mic_index,error_m,converged\n";
  for (std::size_t t = 0; t < r.trials.size(); ++t) {
    const auto& o = r.trials[t];
    if (o.failed) {
      out += std::to_string(t) + ",,,0\n";
      continue;
    }
    for (std::size_t i = 0; i < o.mic_errors.size(); ++i)
      out += std::to_string(t) + "," + std::to_string(i) + "," + format_double(o.mic_errors[i]) + "," +
             (o.converged ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace acam::io
