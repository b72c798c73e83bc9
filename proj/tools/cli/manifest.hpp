#pragma once
// Output staging: files are held in memory until the run has finished, then
// written together with a manifest carrying their SHA-256 checksums.

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace cavlat::cli {

using nlohmann::json;

std::string sha256_hex(const std::string& data);

// "%.17g"
std::string format_number(double x);

class CsvTable {
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  CsvTable& row();
  CsvTable& add(double x);
  CsvTable& add(long x);
  CsvTable& add(int x) { return add(static_cast<long>(x)); }
  CsvTable& add(std::size_t x) { return add(static_cast<long>(x)); }
  CsvTable& add(bool x) { return add(static_cast<long>(x ? 1 : 0)); }
  CsvTable& add(const std::string& s);
  std::string str() const;  // throws std::logic_error on ragged rows

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct OutputFile {
  std::string path;  // relative to the output directory
  std::string content;
};

class RunOutputs {
public:
  RunOutputs(std::string command, json config);

  void add(const std::string& path, std::string content);
  void add_json(const std::string& path, const json& value);
  void add_csv(const std::string& path, const CsvTable& table) { add(path, table.str()); }

  void note_seed(std::uint64_t seed) { seeds_.push_back(seed); }
  void warn(const std::string& message) { warnings_.push_back(message); }
  void truncation(const std::string& message);
  bool truncated() const { return !truncation_.empty(); }
  const std::vector<std::string>& truncation_warnings() const { return truncation_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  void set_threads(int threads) { threads_ = threads; }

  // Writes every staged file, then manifest.json. Returns the manifest.
  json commit(const std::string& out_dir);

private:
  std::string command_;
  json config_;
  std::vector<OutputFile> files_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::string> warnings_;
  std::vector<std::string> truncation_;
  int threads_ = 1;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point clock_start_;
};

}  // namespace cavlat::cli
