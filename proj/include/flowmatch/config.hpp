#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowmatch/toydata.hpp"

namespace flowmatch {

using KeyValues = std::map<std::string, std::string>;

// `key = value` lines; `#` starts a comment; blank lines ignored.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

double kv_double(const KeyValues& kv, const std::string& key, double fallback);
long kv_long(const KeyValues& kv, const std::string& key, long fallback);
bool kv_bool(const KeyValues& kv, const std::string& key, bool fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::vector<double> parse_double_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);
std::string format_double_list(const std::vector<double>& values);

// Distribution parameters under `prefix.` (e.g. source.kind, source.radius);
// missing keys keep the values from `fallback`.
DistributionSpec distribution_from_kv(const KeyValues& kv, const std::string& prefix,
                                      const DistributionSpec& fallback);
void distribution_to_kv(const DistributionSpec& spec, const std::string& prefix,
                        KeyValues& kv);

}  // namespace flowmatch
