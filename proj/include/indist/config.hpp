#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "indist/errors.hpp"

namespace indist {

// Line-oriented config:
//
//   # comment
//   mode = sweep2
//   [params]
//   gamma_star = 1e4
//   [sweep]
//   g = 1:30:30          # start:stop:count, inclusive
//   kappa = 0.1:100:31:log
//   d = 0.069, 0.07, 0.072
//
// Keys are addressed as "section.key" (or "key" before any section). Every
// key read through a getter is recorded with its resolved value; keys that
// were given but never read are rejected by finish().
class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "config") {
    Config c;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = origin + ":" + std::to_string(lineno);
      line = strip(cut_comment(line));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = strip(line.substr(1, line.size() - 2));
        if (section.empty() || !valid_name(section))
          throw ConfigError(where + ": invalid section name '" + section + "'");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = strip(line.substr(0, eq));
      const std::string value = strip(line.substr(eq + 1));
      if (key.empty() || !valid_name(key)) throw ConfigError(where + ": invalid key '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (c.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
      c.values_[full] = value;
    }
    return c;
  }

  /// Override or add "section.key=value" (command line).
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = strip(assignment.substr(0, eq));
    if (key.empty()) throw ConfigError("--set: empty key");
    values_[key] = strip(assignment.substr(eq + 1));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) {
    const std::string v = raw(key, def);
    resolved_[key] = v;
    return v;
  }

  std::string get_choice(const std::string& key, const std::string& def,
                         const std::vector<std::string>& allowed) {
    const std::string v = get_string(key, def);
    for (const auto& a : allowed)
      if (v == a) return v;
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ConfigError(key + ": '" + v + "' is not one of {" + list + "}");
  }

  double get_double(const std::string& key, double def) {
    const double v = has(key) ? to_double(key, values_.at(key)) : def;
    resolved_[key] = format(v);
    return v;
  }

  int get_int(const std::string& key, int def) {
    int v = def;
    if (has(key)) {
      const std::string& s = values_.at(key);
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ConfigError(key + ": expected an integer, got '" + s + "'");
    }
    resolved_[key] = std::to_string(v);
    return v;
  }

  std::uint64_t get_uint64(const std::string& key, std::uint64_t def) {
    std::uint64_t v = def;
    if (has(key)) {
      const std::string& s = values_.at(key);
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
    }
    resolved_[key] = std::to_string(v);
    return v;
  }

  bool get_bool(const std::string& key, bool def) {
    bool v = def;
    if (has(key)) {
      const std::string& s = values_.at(key);
      if (s == "true" || s == "yes" || s == "1")
        v = true;
      else if (s == "false" || s == "no" || s == "0")
        v = false;
      else
        throw ConfigError(key + ": expected true or false, got '" + s + "'");
    }
    resolved_[key] = v ? "true" : "false";
    return v;
  }

  /// Comma list or range "a:b:n" / "a:b:n:log". Empty value gives an empty
  /// list only when allow_empty.
  std::vector<double> get_list(const std::string& key, const std::string& def,
                               bool allow_empty = false) {
    const std::string text = raw(key, def);
    std::vector<double> v = parse_list(key, text);
    if (v.empty() && !allow_empty) throw ConfigError(key + ": empty list or range");
    // Ranges echo as written (they re-parse to the same values).
    if (text.find(':') != std::string::npos) {
      resolved_[key] = text;
    } else {
      std::string s;
      for (double x : v) s += (s.empty() ? "" : ", ") + format(x);
      resolved_[key] = s;
    }
    return v;
  }

  /// Keys given but never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!resolved_.count(k)) out.push_back(k);
    return out;
  }

  void finish() const {
    const auto u = unused();
    if (u.empty()) return;
    std::string list;
    for (const auto& k : u) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown or unused config keys: " + list);
  }

  const std::map<std::string, std::string>& resolved() const { return resolved_; }

  /// Resolved configuration in the input syntax; parses back to the same run.
  std::string to_text() const {
    std::map<std::string, std::map<std::string, std::string>> by_section;
    for (const auto& [k, v] : resolved_) {
      const auto dot = k.find('.');
      if (dot == std::string::npos)
        by_section[""][k] = v;
      else
        by_section[k.substr(0, dot)][k.substr(dot + 1)] = v;
    }
    std::ostringstream os;
    for (const auto& [sec, kv] : by_section) {
      if (!sec.empty()) os << "\n[" << sec << "]\n";
      for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    }
    return os.str();
  }

  static std::string format(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
  }

  static std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    if (strip(text).empty()) return out;
    if (text.find(':') != std::string::npos) {
      std::vector<std::string> parts = split(text, ':');
      if (parts.size() != 3 && parts.size() != 4)
        throw ConfigError(key + ": range must be start:stop:count[:log]");
      const double a = to_double(key, parts[0]);
      const double b = to_double(key, parts[1]);
      const double n_real = to_double(key, parts[2]);
      const bool log = parts.size() == 4;
      if (log && strip(parts[3]) != "log") throw ConfigError(key + ": range suffix must be 'log'");
      if (!(n_real >= 1.0) || n_real != std::floor(n_real))
        throw ConfigError(key + ": range count must be a positive integer");
      const int n = static_cast<int>(n_real);
      if (log && !(a > 0.0 && b > 0.0)) throw ConfigError(key + ": log range needs positive ends");
      for (int i = 0; i < n; ++i) {
        const double t = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        out.push_back(log ? a * std::pow(b / a, t) : a + (b - a) * t);
      }
      if (n > 1) out.back() = b;
      return out;
    }
    for (const auto& p : split(text, ',')) out.push_back(to_double(key, p));
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> resolved_;

  std::string raw(const std::string& key, const std::string& def) const {
    const auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  static std::string cut_comment(const std::string& s) {
    const auto p = s.find('#');
    return p == std::string::npos ? s : s.substr(0, p);
  }

  static std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static bool valid_name(const std::string& s) {
    for (char c : s)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
        return false;
    return true;
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == sep) {
        out.push_back(strip(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    out.push_back(strip(cur));
    return out;
  }

  static double to_double(const std::string& key, const std::string& text) {
    const std::string s = strip(text);
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
      throw ConfigError(key + ": expected a number, got '" + s + "'");
    return v;
  }
};

}  // namespace indist
