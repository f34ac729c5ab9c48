#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "basinlab/errors.hpp"
#include "basinlab/experiments.hpp"

namespace basinlab {

namespace fs = std::filesystem;

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

nlohmann::json write_outputs(const std::string& dir, const ExperimentConfig& cfg, const CommandResult& result,
                             const std::string& started_at, const std::string& finished_at) {
  const fs::path root(dir);
  fs::create_directories(root);

  const std::string config_text = config_to_json(cfg).dump(2) + "\n";
  std::vector<EmittedFile> files = result.files;
  files.push_back({"config.json", config_text});

  nlohmann::json listed = nlohmann::json::array();
  for (const auto& f : files) {
    write_file(root / f.name, f.content);
    listed.push_back({{"name", f.name}, {"bytes", f.content.size()}, {"sha256", sha256_hex(f.content)}});
  }

  nlohmann::json manifest;
  manifest["tool"] = "basinlab";
  manifest["version"] = kToolVersion;
  manifest["experiment"] = cfg.experiment;
  manifest["master_seed"] = cfg.master_seed;
  manifest["config_sha256"] = sha256_hex(config_text);
  manifest["started_at"] = started_at;
  manifest["finished_at"] = finished_at;
  manifest["files"] = listed;
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace basinlab
