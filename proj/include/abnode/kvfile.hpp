#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace abnode {

/// Flat "key = value" document with optional [section] headers and '#'
/// comments. Keys are stored as "section.key" (or just "key" before the
/// first header).
class KvDocument {
 public:
  static KvDocument parse(const std::string& text, const std::string& origin = "<string>");
  static KvDocument load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& origin() const { return origin_; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  void set(const std::string& key, const std::string& value);
  std::vector<std::string> keys() const;
  /// Keys not in `known`; used to reject typos.
  std::vector<std::string> unknown_keys(const std::vector<std::string>& known) const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char delim);
/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

std::string read_file(const std::string& path);
/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace abnode
