#pragma once

#include <cctype>
#include <string>
#include <vector>

#include <json.hpp>

#include "ulab/core/error.hpp"

namespace ulab::exp {

// Minimal TOML reader covering the subset used by experiment configs:
// [tables], [[arrays of tables]], dotted headers into the current array
// element, and key = value lines with strings, numbers, booleans and
// single-line scalar arrays. Comments start with '#'. The result is the
// same json shape the JSON mirror of the config produces.
namespace toml {

inline void fail(std::size_t line_no, const std::string& msg) {
  throw ConfigError("config line " + std::to_string(line_no) + ": " + msg);
}

inline std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string drop_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

inline nlohmann::json parse_scalar(const std::string& raw, std::size_t line_no) {
  const std::string v = strip(raw);
  if (v.empty()) fail(line_no, "missing value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') fail(line_no, "unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        ++i;
        switch (v[i]) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: fail(line_no, "unsupported escape");
        }
      } else {
        out.push_back(v[i]);
      }
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  try {
    std::size_t used = 0;
    if (v.find_first_of(".eE") == std::string::npos ||
        (v.size() > 2 && v.rfind("0x", 0) == 0)) {
      const long long i = std::stoll(v, &used, 0);
      if (used == v.size()) return i;
    }
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (...) {
  }
  fail(line_no, "cannot parse value: " + v);
  return {};
}

inline nlohmann::json parse_value(const std::string& raw, std::size_t line_no) {
  const std::string v = strip(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') fail(line_no, "arrays must close on the same line");
    nlohmann::json arr = nlohmann::json::array();
    std::string inner = v.substr(1, v.size() - 2);
    std::string item;
    bool in_str = false;
    for (char c : inner) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        if (!strip(item).empty()) arr.push_back(parse_scalar(item, line_no));
        item.clear();
      } else {
        item.push_back(c);
      }
    }
    if (!strip(item).empty()) arr.push_back(parse_scalar(item, line_no));
    return arr;
  }
  return parse_scalar(v, line_no);
}

inline std::vector<std::string> split_path(const std::string& s, std::size_t line_no) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == '.') {
      if (cur.empty()) fail(line_no, "empty path segment");
      parts.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  if (cur.empty()) fail(line_no, "empty path segment");
  parts.push_back(cur);
  return parts;
}

inline nlohmann::json parse(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* current = &root;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string s = strip(drop_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      const bool array_table = s.size() >= 4 && s[1] == '[';
      const std::size_t close = s.find(array_table ? "]]" : "]");
      if (close == std::string::npos) fail(line_no, "unterminated table header");
      const auto path = split_path(s.substr(array_table ? 2 : 1, close - (array_table ? 2 : 1)),
                                   line_no);
      nlohmann::json* node = &root;
      for (std::size_t i = 0; i < path.size(); ++i) {
        const bool last = i + 1 == path.size();
        nlohmann::json& slot = (*node)[path[i]];
        if (last && array_table) {
          if (slot.is_null()) slot = nlohmann::json::array();
          if (!slot.is_array()) fail(line_no, "redefinition of key as array of tables");
          slot.push_back(nlohmann::json::object());
          node = &slot.back();
        } else {
          if (slot.is_null()) slot = nlohmann::json::object();
          if (slot.is_array()) {
            // dotted path through an array of tables targets its last element
            if (slot.empty()) fail(line_no, "dotted path into empty table array");
            node = &slot.back();
          } else if (slot.is_object()) {
            node = &slot;
          } else {
            fail(line_no, "redefinition of scalar as table");
          }
        }
      }
      current = node;
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) fail(line_no, "expected key = value");
    const std::string key = strip(s.substr(0, eq));
    if (key.empty()) fail(line_no, "empty key");
    if (current->contains(key)) fail(line_no, "duplicate key: " + key);
    (*current)[key] = parse_value(s.substr(eq + 1), line_no);
  }
  return root;
}

}  // namespace toml

}  // namespace ulab::exp
