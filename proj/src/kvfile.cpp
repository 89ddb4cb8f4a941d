#include "abnode/kvfile.hpp"

#include "abnode/core.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace abnode {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, delim)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

KvDocument KvDocument::parse(const std::string& text, const std::string& origin) {
  KvDocument doc;
  doc.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(lineno) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!section.empty()) key = section + "." + key;
    if (doc.values_.count(key)) {
      throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    doc.values_[key] = trim(line.substr(eq + 1));
    doc.lines_[key] = lineno;
  }
  return doc;
}

KvDocument KvDocument::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string KvDocument::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::kConfig, origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KvDocument::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

namespace {
double to_double(const std::string& origin, const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw Error(ErrorCode::kConfig, origin + ": key '" + key + "' is not a number: '" + s + "'");
  }
  return v;
}
}  // namespace

double KvDocument::get_double(const std::string& key) const {
  return to_double(origin_, key, get_string(key));
}

double KvDocument::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long KvDocument::get_int(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const double v = get_double(key);
  if (v != static_cast<double>(static_cast<long>(v))) {
    throw Error(ErrorCode::kConfig, origin_ + ": key '" + key + "' must be an integer");
  }
  return static_cast<long>(v);
}

bool KvDocument::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get_string(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::kConfig, origin_ + ": key '" + key + "' must be a boolean");
}

std::vector<double> KvDocument::get_doubles(const std::string& key,
                                            const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& item : split(get_string(key), ',')) out.push_back(to_double(origin_, key, item));
  return out;
}

std::vector<std::string> KvDocument::get_list(const std::string& key,
                                              const std::vector<std::string>& fallback) const {
  if (!has(key)) return fallback;
  return split(get_string(key), ',');
}

void KvDocument::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::vector<std::string> KvDocument::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

std::vector<std::string> KvDocument::unknown_keys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingArtifact, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error(ErrorCode::kIo, "write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace abnode
