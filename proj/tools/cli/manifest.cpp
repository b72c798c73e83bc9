#include "cli/manifest.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#ifndef CAVLAT_VERSION
#define CAVLAT_VERSION "unknown"
#endif

namespace cavlat::cli {

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable& CsvTable::row() {
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(double x) { return add(format_number(x)); }

CsvTable& CsvTable::add(long x) { return add(std::to_string(x)); }

CsvTable& CsvTable::add(const std::string& s) {
  if (rows_.empty()) rows_.emplace_back();
  rows_.back().push_back(s);
  return *this;
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
  out += '\n';
  for (const auto& r : rows_) {
    if (r.size() != header_.size()) throw std::logic_error("ragged CSV row");
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
    out += '\n';
  }
  return out;
}

namespace {

std::string iso_time(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunOutputs::RunOutputs(std::string command, json config)
    : command_(std::move(command)),
      config_(std::move(config)),
      started_(std::chrono::system_clock::now()),
      clock_start_(std::chrono::steady_clock::now()) {}

void RunOutputs::add(const std::string& path, std::string content) {
  for (const auto& f : files_)
    if (f.path == path) throw std::logic_error("output '" + path + "' staged twice");
  files_.push_back({path, std::move(content)});
}

void RunOutputs::add_json(const std::string& path, const json& value) {
  add(path, value.dump(2) + "\n");
}

void RunOutputs::truncation(const std::string& message) {
  for (const auto& m : truncation_)
    if (m == message) return;
  truncation_.push_back(message);
}

json RunOutputs::commit(const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  json outputs = json::array();
  for (const auto& f : files_) {
    const fs::path p = fs::path(out_dir) / f.path;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream o(p, std::ios::binary);
    o.write(f.content.data(), static_cast<std::streamsize>(f.content.size()));
    if (!o) throw std::runtime_error("failed writing " + p.string());
    outputs.push_back({{"path", f.path}, {"sha256", sha256_hex(f.content)}, {"bytes", f.content.size()}});
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start_).count();
  json m = {{"command", command_},
            {"code_version", CAVLAT_VERSION},
            {"config", config_},
            {"seeds", seeds_},
            {"threads", threads_},
            {"started", iso_time(started_)},
            {"finished", iso_time(std::chrono::system_clock::now())},
            {"wall_time_s", wall},
            {"warnings", warnings_},
            {"truncation_warnings", truncation_},
            {"outputs", outputs}};
  std::ofstream o(fs::path(out_dir) / "manifest.json");
  o << m.dump(2) << "\n";
  if (!o) throw std::runtime_error("failed writing manifest.json");
  return m;
}

}  // namespace cavlat::cli
