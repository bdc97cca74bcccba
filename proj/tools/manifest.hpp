#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "acam/error.hpp"

namespace acam::cli {

inline constexpr const char* kToolVersion = "1.0.0";

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

/// Provenance block embedded in every report. Only `timestamps` varies
/// between identical runs.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string started_at = utc_now();

  void add_input(const std::string& path) { inputs.emplace_back(path, sha256_file(path)); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json in = nlohmann::ordered_json::object();
    for (const auto& [p, h] : inputs) in[p] = h;
    return {{"command", command},
            {"config_path", config_path},
            {"input_sha256", in},
            {"seed", seed},
            {"threads", threads},
            {"tool_version", kToolVersion},
            {"timestamps", {{"started_at", started_at}, {"finished_at", utc_now()}}}};
  }
};

}  // namespace acam::cli
