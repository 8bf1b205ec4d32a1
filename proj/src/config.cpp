#include "flowmatch/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "flowmatch/csv.hpp"
#include "flowmatch/errors.hpp"

namespace flowmatch {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw_error(ErrorKind::kConfig, "config: '" + key + "' expects a number, got '" + text + "'");
  return value;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw_error(ErrorKind::kConfig, "config line " + std::to_string(lineno) + ": missing '='");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw_error(ErrorKind::kConfig, "config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_error(ErrorKind::kIo, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_number<double>(key, it->second);
}

long kv_long(const KeyValues& kv, const std::string& key, long fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : parse_number<long>(key, it->second);
}

bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw_error(ErrorKind::kConfig, "config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  const auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (trim(field).empty()) continue;
    out.push_back(parse_number<double>("list", field));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string field;
  while (std::getline(ss, field, ',')) {
    if (trim(field).empty()) continue;
    out.push_back(parse_number<int>("list", field));
  }
  return out;
}

std::string format_double_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

DistributionSpec distribution_from_kv(const KeyValues& kv, const std::string& prefix,
                                      const DistributionSpec& fallback) {
  DistributionSpec s = fallback;
  const auto key = [&](const char* name) { return prefix + "." + name; };
  if (kv.count(key("kind"))) s.kind = distribution_kind_from_string(kv.at(key("kind")));
  s.dim = static_cast<int>(kv_long(kv, key("dim"), s.dim));
  s.count = static_cast<int>(kv_long(kv, key("count"), s.count));
  s.std = kv_double(kv, key("std"), s.std);
  s.radius = kv_double(kv, key("radius"), s.radius);
  s.inner_radius = kv_double(kv, key("inner_radius"), s.inner_radius);
  s.phase = kv_double(kv, key("phase"), s.phase);
  s.noise_std = kv_double(kv, key("noise_std"), s.noise_std);
  s.scale = kv_double(kv, key("scale"), s.scale);
  if (kv.count(key("center"))) s.center = parse_double_list(kv.at(key("center")));
  if (kv.count(key("centers"))) {
    s.centers.clear();
    std::stringstream ss(kv.at(key("centers")));
    std::string point;
    while (std::getline(ss, point, ';'))
      if (!trim(point).empty()) s.centers.push_back(parse_double_list(point));
  }
  validate(s);
  return s;
}

void distribution_to_kv(const DistributionSpec& s, const std::string& prefix, KeyValues& kv) {
  const auto key = [&](const char* name) { return prefix + "." + name; };
  kv[key("kind")] = to_string(s.kind);
  kv[key("dim")] = std::to_string(s.dim);
  kv[key("count")] = std::to_string(s.count);
  kv[key("std")] = format_double(s.std);
  kv[key("radius")] = format_double(s.radius);
  kv[key("inner_radius")] = format_double(s.inner_radius);
  kv[key("phase")] = format_double(s.phase);
  kv[key("noise_std")] = format_double(s.noise_std);
  kv[key("scale")] = format_double(s.scale);
  kv[key("center")] = format_double_list(s.center);
  std::string centers;
  for (std::size_t i = 0; i < s.centers.size(); ++i) {
    if (i) centers += ';';
    centers += format_double_list(s.centers[i]);
  }
  kv[key("centers")] = centers;
}

}  // namespace flowmatch
