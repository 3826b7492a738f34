#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace natlab {

// Flat `key = value` text config. '#' starts a comment; blank lines are
// ignored. Keys are unique; parse order does not matter.
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv_text(const std::string& text);
KvMap parse_kv_file(const std::string& path);
std::string serialize_kv(const KvMap& kv);

std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback);
int64_t kv_i64(const KvMap& kv, const std::string& key, int64_t fallback);
uint64_t kv_u64(const KvMap& kv, const std::string& key, uint64_t fallback);
double kv_f64(const KvMap& kv, const std::string& key, double fallback);

}  // namespace natlab
