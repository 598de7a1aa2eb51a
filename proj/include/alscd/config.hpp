#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "alscd/error.hpp"

namespace alscd {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
T parse_number(std::string_view s, const std::string& what) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  T v{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size())
    throw Error(Errc::BadConfig, what + ": cannot parse '" + std::string(s) + "' as a number");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

template <class T>
std::vector<T> parse_list(std::string_view s, const std::string& what) {
  std::vector<T> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_number<T>(item, what));
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>)
      s += format_double(static_cast<double>(v[i]));
    else
      s += std::to_string(v[i]);
  }
  return s;
}

/// key=value text with optional [section] headers. '#' starts a comment
/// line. Keys before any header belong to section "".
class Config {
 public:
  using Section = std::map<std::string, std::string>;

  static Config parse(std::string_view text) {
    Config c;
    std::string section;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
      ++line_no;
      std::string_view line = raw;
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
      while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
      if (line.empty() || line.front() == '#') continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw LineError(Errc::BadConfig, line_no, "unterminated section header");
        section = std::string(line.substr(1, line.size() - 2));
        c.sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw LineError(Errc::BadConfig, line_no, "expected key=value");
      std::string_view key = line.substr(0, eq), value = line.substr(eq + 1);
      while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.remove_suffix(1);
      while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.remove_prefix(1);
      if (key.empty()) throw LineError(Errc::BadConfig, line_no, "empty key");
      c.sections_[section][std::string(key)] = std::string(value);
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key);
  }
  bool has_section(const std::string& section) const { return sections_.count(section) > 0; }

  const std::string& get(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    if (s == sections_.end() || !s->second.count(key))
      throw Error(Errc::BadConfig, "missing key " + (section.empty() ? key : section + "." + key));
    return s->second.at(key);
  }

  template <class T>
  T get(const std::string& section, const std::string& key, T fallback) const {
    if (!has(section, key)) return fallback;
    const std::string& v = get(section, key);
    const std::string what = section.empty() ? key : section + "." + key;
    if constexpr (std::is_same_v<T, std::string>)
      return v;
    else if constexpr (std::is_same_v<T, bool>) {
      if (v == "1" || v == "true") return true;
      if (v == "0" || v == "false") return false;
      throw Error(Errc::BadConfig, what + ": expected true/false, got '" + v + "'");
    } else
      return parse_number<T>(v, what);
  }

  void set(const std::string& section, const std::string& key, std::string value) {
    sections_[section][key] = std::move(value);
  }

  const Section& section(const std::string& name) const {
    static const Section empty;
    auto s = sections_.find(name);
    return s == sections_.end() ? empty : s->second;
  }

  std::vector<std::string> section_names() const {
    std::vector<std::string> out;
    for (const auto& kv : sections_) out.push_back(kv.first);
    return out;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& [name, kv] : sections_) {
      if (!name.empty()) out += (out.empty() ? "[" : "\n[") + name + "]\n";
      for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    }
    return out;
  }

 private:
  std::map<std::string, Section> sections_;
};

}  // namespace alscd
