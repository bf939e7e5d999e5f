#include "maevi/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace maevi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), path.string());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.entries_.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  std::erase_if(entries_, [&](const auto& e) { return e.first == key; });
  entries_.emplace_back(key, value);
}

void KeyValueConfig::apply_override(const std::string& token) {
  const auto eq = token.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override `" + token + "` is not of the form key=value");
  }
  set(trim(token.substr(0, eq)), trim(token.substr(eq + 1)));
}

void KeyValueConfig::merge(const KeyValueConfig& other) {
  std::set<std::string> replaced;
  for (const auto& [k, v] : other.entries_) {
    if (replaced.insert(k).second) std::erase_if(entries_, [&](const auto& e) { return e.first == k; });
    entries_.emplace_back(k, v);
  }
}

bool KeyValueConfig::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->first == key) return it->second;
  }
  return fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key `" + key + "`: `" + v + "` is not a number");
  }
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  try {
    std::size_t used = 0;
    const long n = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config key `" + key + "`: `" + v + "` is not an integer");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key `" + key + "`: `" + v + "` is not a boolean");
}

std::vector<std::string> KeyValueConfig::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

void KeyValueConfig::require_known(const std::set<std::string>& known,
                                   const std::string& context) const {
  for (const auto& [k, v] : entries_) {
    if (!known.count(k)) throw ConfigError(context + ": unknown config key `" + k + "`");
  }
}

std::string KeyValueConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace maevi
