#include "natlab/config.hpp"

#include <fstream>
#include <sstream>

#include "natlab/common.hpp"

namespace natlab {

namespace {
std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

KvMap parse_kv_text(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos, "config line ", line_no, " is not 'key = value': '", line, "'");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    check(!key.empty(), "config line ", line_no, " has an empty key");
    check(!kv.count(key), "duplicate config key '", key, "'");
    kv[key] = value;
  }
  return kv;
}

KvMap parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open config file '", path, "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str());
}

std::string serialize_kv(const KvMap& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += '\n';
  }
  return out;
}

std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

int64_t kv_i64(const KvMap& kv, const std::string& key, int64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t used = 0;
    const int64_t v = std::stoll(it->second, &used);
    check(used == it->second.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    fatal("config key '", key, "': cannot parse integer from '", it->second, "'");
  }
}

uint64_t kv_u64(const KvMap& kv, const std::string& key, uint64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t used = 0;
    const uint64_t v = std::stoull(it->second, &used);
    check(used == it->second.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    fatal("config key '", key, "': cannot parse unsigned integer from '", it->second, "'");
  }
}

double kv_f64(const KvMap& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t used = 0;
    const double v = std::stod(it->second, &used);
    check(used == it->second.size(), "trailing characters");
    return v;
  } catch (const std::exception&) {
    fatal("config key '", key, "': cannot parse number from '", it->second, "'");
  }
}

}  // namespace natlab
