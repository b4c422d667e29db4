#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dct::cli {

/// Invalid configuration (unknown keys, malformed lines). Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigEntry {
  std::string key;  // normalized: lower case, '_' replaced by '-'
  std::string value;
  std::size_t line = 0;
};

/// Reads a flat config file: one `key = value` per line, `#` starts a comment,
/// blank lines are ignored. Values may be wrapped in double quotes.
std::vector<ConfigEntry> read_config(const std::filesystem::path& path);

std::string normalize_key(std::string key);

}  // namespace dct::cli
