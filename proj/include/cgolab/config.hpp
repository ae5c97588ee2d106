#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cgolab::io {

// Plain-text key-value config with [section] headers. Keys are addressed
// as "section.key"; keys before any header live in the root section.
// Lines starting with '#' are comments. Values are free-form strings;
// typed accessors parse on demand.
class Config {
 public:
  Config() = default;
  static Config parse_file(const std::filesystem::path& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string str(const std::string& key) const;
  std::string str(const std::string& key, const std::string& dflt) const;
  double num(const std::string& key) const;
  double num(const std::string& key, double dflt) const;
  long integer(const std::string& key) const;
  long integer(const std::string& key, long dflt) const;
  bool flag(const std::string& key, bool dflt) const;
  // whitespace- or comma-separated list of numbers
  std::vector<double> num_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace cgolab::io
