#pragma once
// Manifests, tidy tables and small helpers shared by the subcommands.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctsfm::cli {

namespace fs = std::filesystem;

/// Provenance of one command invocation.
struct Manifest {
  std::string command_line;
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  nlohmann::json timings = nlohmann::json::object();

  nlohmann::json to_json() const;
};

void write_manifest(const fs::path& path, const Manifest& manifest);

/// `dir/stem + suffix`, e.g. sibling("a/run.json", ".log.jsonl") = "a/run.log.jsonl".
fs::path sibling(const fs::path& path, const std::string& suffix);

/// Shortest decimal that reads back to the same double; "nan" / "inf" otherwise.
std::string num(double value);

/// Comma-separated table with a fixed header.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row);
  std::size_t rows() const { return rows_.size(); }
  void write(const fs::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// `flag` when positive, else CTSFM_THREADS, else 1. Throws kInvalidArgument
/// for an unparsable or non-positive environment value.
int resolve_threads(int flag);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string utc_timestamp();

}  // namespace ctsfm::cli
