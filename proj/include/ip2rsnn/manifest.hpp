#pragma once

// Run manifest: what produced a run directory and what it contains.
// Needs libcrypto (OpenSSL) for SHA-256.

#include <algorithm>
#include <chrono>
#include <ctime>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <json.hpp>

#include "ip2rsnn/tensor_io.hpp"

#ifndef IP2RSNN_VERSION
#define IP2RSNN_VERSION "0.0.0"
#endif

namespace ip2rsnn {

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_atomic(const std::filesystem::path& p, const std::string& bytes) {
  const auto tmp = std::filesystem::path(p.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const auto tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string config_file = "config.json";
  std::string config_hash;
  std::string code_version = IP2RSNN_VERSION;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
  std::vector<std::string> artifacts;  // paths relative to the run directory

  nlohmann::json to_json() const {
    return {{"config_file", config_file}, {"config_sha256", config_hash}, {"code_version", code_version},
            {"seed", seed}, {"started", started}, {"finished", finished}, {"artifacts", artifacts}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.config_file = j.at("config_file").get<std::string>();
    m.config_hash = j.at("config_sha256").get<std::string>();
    m.code_version = j.at("code_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    return m;
  }
};

// Every regular file under `dir` except the manifest itself, sorted.
inline std::vector<std::string> artifact_inventory(const std::filesystem::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir).generic_string();
    if (rel != "manifest.json") out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
  write_atomic(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

inline RunManifest read_manifest(const std::filesystem::path& dir) {
  try {
    return RunManifest::from_json(nlohmann::json::parse(read_bytes(dir / "manifest.json")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
}

// True when the stored config still hashes to the manifest's value.
inline bool manifest_hash_valid(const std::filesystem::path& dir) {
  const auto m = read_manifest(dir);
  return sha256_hex(read_bytes(dir / m.config_file)) == m.config_hash;
}

}  // namespace ip2rsnn
