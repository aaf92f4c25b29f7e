#include "holoprop/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

extern char** environ;

namespace holoprop {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

RunConfig RunConfig::parse_string(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = lower(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any section");
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[{section, key}] = value;
  }
  return cfg;
}

void RunConfig::apply_env_overrides() {
  for (char** env = environ; *env != nullptr; ++env) {
    const std::string entry(*env);
    if (entry.rfind("HOLOPROP_", 0) != 0) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = entry.substr(9, eq - 9);
    const std::string value = entry.substr(eq + 1);
    const std::size_t us = name.find('_');
    if (us == std::string::npos)
      throw ConfigError("malformed override HOLOPROP_" + name +
                        " (expected HOLOPROP_<SECTION>_<KEY>)");
    set(lower(name.substr(0, us)), lower(name.substr(us + 1)), value);
  }
}

void RunConfig::set(const std::string& section, const std::string& key,
                    const std::string& value) {
  values_[{lower(section), lower(key)}] = value;
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  return values_.count({section, key}) > 0;
}

std::string RunConfig::raw_get(const std::string& section, const std::string& key, bool& found) {
  auto it = values_.find({section, key});
  if (it == values_.end()) {
    found = false;
    return {};
  }
  found = true;
  consumed_[{section, key}] = true;
  return it->second;
}

void RunConfig::record(const std::string& section, const std::string& key,
                       const std::string& value) {
  resolved_[{section, key}] = value;
}

std::string RunConfig::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) {
  bool found;
  std::string v = raw_get(section, key, found);
  if (!found) v = fallback;
  record(section, key, v);
  return v;
}

double RunConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) {
  bool found;
  const std::string v = raw_get(section, key, found);
  if (!found) {
    record(section, key, std::to_string(fallback));
    return fallback;
  }
  try {
    const double d = std::stod(v);
    record(section, key, v);
    return d;
  } catch (...) {
    throw ConfigError("[" + section + "] " + key + ": not a number: " + v);
  }
}

std::uint64_t RunConfig::get_u64(const std::string& section, const std::string& key,
                                 std::uint64_t fallback) {
  bool found;
  const std::string v = raw_get(section, key, found);
  if (!found) {
    record(section, key, std::to_string(fallback));
    return fallback;
  }
  try {
    const std::uint64_t u = std::stoull(v);
    record(section, key, v);
    return u;
  } catch (...) {
    throw ConfigError("[" + section + "] " + key + ": not an unsigned integer: " + v);
  }
}

bool RunConfig::get_bool(const std::string& section, const std::string& key, bool fallback) {
  bool found;
  const std::string v = lower(raw_get(section, key, found));
  if (!found) {
    record(section, key, fallback ? "true" : "false");
    return fallback;
  }
  record(section, key, v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("[" + section + "] " + key + ": not a boolean: " + v);
}

std::vector<double> RunConfig::get_doubles(const std::string& section, const std::string& key,
                                           const std::vector<double>& fallback) {
  bool found;
  const std::string v = raw_get(section, key, found);
  if (!found) {
    std::string txt;
    for (double d : fallback) txt += (txt.empty() ? "" : ",") + std::to_string(d);
    record(section, key, txt);
    return fallback;
  }
  record(section, key, v);
  std::vector<double> out;
  for (const auto& item : split_list(v)) {
    try {
      out.push_back(std::stod(item));
    } catch (...) {
      throw ConfigError("[" + section + "] " + key + ": not a number: " + item);
    }
  }
  return out;
}

std::vector<std::uint64_t> RunConfig::get_u64s(const std::string& section, const std::string& key,
                                               const std::vector<std::uint64_t>& fallback) {
  bool found;
  const std::string v = raw_get(section, key, found);
  if (!found) {
    std::string txt;
    for (auto d : fallback) txt += (txt.empty() ? "" : ",") + std::to_string(d);
    record(section, key, txt);
    return fallback;
  }
  record(section, key, v);
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(v)) {
    try {
      out.push_back(std::stoull(item));
    } catch (...) {
      throw ConfigError("[" + section + "] " + key + ": not an unsigned integer: " + item);
    }
  }
  return out;
}

std::vector<std::string> RunConfig::get_strings(const std::string& section,
                                                const std::string& key,
                                                const std::vector<std::string>& fallback) {
  bool found;
  const std::string v = raw_get(section, key, found);
  if (!found) {
    std::string txt;
    for (const auto& d : fallback) txt += (txt.empty() ? "" : ",") + d;
    record(section, key, txt);
    return fallback;
  }
  record(section, key, v);
  return split_list(v);
}

void RunConfig::require_all_consumed() const {
  std::string unknown;
  for (const auto& [sk, value] : values_) {
    if (consumed_.count(sk)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += "[" + sk.first + "] " + sk.second;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [sk, value] : resolved_) {
    if (sk.first != section) {
      section = sk.first;
      os << "[" << section << "]\n";
    }
    os << sk.second << " = " << value << "\n";
  }
  return os.str();
}

}  // namespace holoprop
