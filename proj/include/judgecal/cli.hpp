#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace judgecal::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Runs one subcommand (ingest, repair, matrix, estimate,
// calibrate-threshold, experiment, synth). Returns the process exit status:
// 0 on success, 1 on usage errors, 2 when a module reports an error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Flat `key = value` text, one pair per line; '#' starts a comment.
// Unknown keys and malformed lines throw InvalidConfig.
std::map<std::string, std::string> parse_config(std::istream& in);
std::map<std::string, std::string> parse_config(const std::filesystem::path& path);

// Every key accepted by --config, with its default.
const std::map<std::string, std::string>& config_defaults();

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// Shortest text that reads back to the same double.
std::string format_double(double value);

struct RunManifest {
  std::string command;
  std::vector<std::filesystem::path> inputs;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;

  // Canonical JSON with input content hashes; no timestamps or host data.
  std::string to_json() const;
  // First 8 hex digits of the SHA-256 of the config section.
  std::string config_hash() const;
};

}  // namespace judgecal::cli
