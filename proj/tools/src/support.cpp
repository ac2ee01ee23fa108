#include "support.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "ctsfm/errors.hpp"
#include "ctsfm/io.hpp"
#include "ctsfm/version.hpp"

namespace ctsfm::cli {

nlohmann::json Manifest::to_json() const {
  nlohmann::json j;
  j["format_version"] = kFormatVersion;
  j["command"] = command;
  j["command_line"] = command_line;
  j["config"] = config;
  j["seeds"] = seeds;
  auto paths = [](const std::vector<fs::path>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : v) a.push_back(p.string());
    return a;
  };
  j["inputs"] = paths(inputs);
  j["outputs"] = paths(outputs);
  j["timings"] = timings;
  j["version"] = kVersion;
  j["created"] = utc_timestamp();
  return j;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  write_text_file(path, manifest.to_json().dump(2) + "\n");
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

std::string num(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, r.ptr);
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw Error(Errc::kInvalidArgument, "table row has the wrong number of columns");
  rows_.push_back(std::move(row));
}

void Table::write(const fs::path& path) const {
  std::string text;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text += ',';
      text += cells[i];
    }
    text += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  write_text_file(path, text);
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  const char* env = std::getenv("CTSFM_THREADS");
  if (!env || !*env) return 1;
  int n = 0;
  const char* end = env + std::char_traits<char>::length(env);
  const auto r = std::from_chars(env, end, n);
  if (r.ec != std::errc() || r.ptr != end || n < 1) {
    throw Error(Errc::kInvalidArgument, std::string("CTSFM_THREADS must be a positive integer, got '") + env + "'");
  }
  return n;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace ctsfm::cli
