#include "cgolab/config.hpp"

#include <fstream>
#include <sstream>

#include "cgolab/common.hpp"

namespace cgolab::io {

namespace {
std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

Config Config::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      require(line.back() == ']', "bad section header at line " +
                                      std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    require(eq != std::string::npos,
            "expected key = value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    require(!key.empty(), "empty key at line " + std::to_string(lineno));
    cfg.set(section.empty() ? key : section + "." + key, val);
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string Config::str(const std::string& key) const {
  auto it = kv_.find(key);
  require(it != kv_.end(), "missing config key: " + key);
  return it->second;
}

std::string Config::str(const std::string& key,
                        const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

double Config::num(const std::string& key) const {
  const std::string v = str(key);
  std::size_t pos = 0;
  double x = std::stod(v, &pos);
  require(pos == v.size(), "config key " + key + " is not a number: " + v);
  return x;
}

double Config::num(const std::string& key, double dflt) const {
  return has(key) ? num(key) : dflt;
}

long Config::integer(const std::string& key) const {
  const std::string v = str(key);
  std::size_t pos = 0;
  long x = std::stol(v, &pos);
  require(pos == v.size(), "config key " + key + " is not an integer: " + v);
  return x;
}

long Config::integer(const std::string& key, long dflt) const {
  return has(key) ? integer(key) : dflt;
}

bool Config::flag(const std::string& key, bool dflt) const {
  if (!has(key)) return dflt;
  std::string v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail("config key " + key + " is not a boolean: " + v);
}

std::vector<double> Config::num_list(const std::string& key) const {
  std::string v = str(key);
  for (auto& c : v)
    if (c == ',') c = ' ';
  std::istringstream in(v);
  std::vector<double> out;
  double x;
  while (in >> x) out.push_back(x);
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  kv_[key] = value;
}

}  // namespace cgolab::io
