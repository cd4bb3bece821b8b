#pragma once

// Reader for the TOML subset used by experiment configs. Produces JSON.
// Supported: comments, [tables], [[arrays of tables]], bare/quoted/dotted
// keys, basic and literal strings, integers, floats, booleans, arrays
// (multi-line, trailing comma) and inline tables. Not supported: dates,
// multi-line strings.

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ffc/errors.hpp"

namespace ffc::toml {

using json = nlohmann::ordered_json;

namespace detail {

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  json parse() {
    json root = json::object();
    json* current = &root;
    for (;;) {
      skip_ws_comments_newlines();
      if (eof()) break;
      if (peek() == '[') {
        const bool array = s_.substr(pos_, 2) == "[[";
        pos_ += array ? 2 : 1;
        skip_inline_ws();
        const auto path = parse_key_path();
        skip_inline_ws();
        if (!consume(array ? "]]" : "]")) fail(array ? "expected ']]'" : "expected ']'");
        current = array ? &open_array_table(root, path) : &open_table(root, path);
      } else {
        parse_key_value(*current);
      }
      expect_line_end();
    }
    return root;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::vector<std::string> defined_tables_;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("toml line " + std::to_string(line_) + ": " + what);
  }
  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  bool consume(std::string_view t) {
    if (s_.substr(pos_, t.size()) != t) return false;
    pos_ += t.size();
    return true;
  }
  void skip_inline_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }
  void skip_ws_comments_newlines() {
    for (;;) {
      skip_inline_ws();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      return;
    }
  }
  void expect_line_end() {
    skip_inline_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected text after value");
  }

  static bool bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  std::string parse_key_part() {
    if (peek() == '"') return parse_basic_string();
    if (peek() == '\'') return parse_literal_string();
    const auto start = pos_;
    while (!eof() && bare_key_char(peek())) ++pos_;
    if (start == pos_) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::vector<std::string> parse_key_path() {
    std::vector<std::string> path{parse_key_part()};
    for (;;) {
      skip_inline_ws();
      if (peek() != '.') return path;
      ++pos_;
      skip_inline_ws();
      path.push_back(parse_key_part());
    }
  }

  json& descend(json& node, const std::string& key) {
    if (!node.contains(key)) node[key] = json::object();
    json* child = &node[key];
    if (child->is_array() && !child->empty() && child->back().is_object()) child = &child->back();
    if (!child->is_object()) fail("key '" + key + "' is not a table");
    return *child;
  }

  static std::string join(const std::vector<std::string>& path) {
    std::string out;
    for (const auto& p : path) out += (out.empty() ? "" : ".") + p;
    return out;
  }

  json& open_table(json& root, const std::vector<std::string>& path) {
    const auto name = join(path);
    for (const auto& t : defined_tables_)
      if (t == name) fail("table [" + name + "] defined twice");
    defined_tables_.push_back(name);
    json* node = &root;
    for (const auto& k : path) node = &descend(*node, k);
    return *node;
  }

  json& open_array_table(json& root, const std::vector<std::string>& path) {
    json* node = &root;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &descend(*node, path[i]);
    auto& slot = (*node)[path.back()];
    if (slot.is_null()) slot = json::array();
    if (!slot.is_array()) fail("key '" + path.back() + "' is not an array of tables");
    slot.push_back(json::object());
    return slot.back();
  }

  void parse_key_value(json& table) {
    const auto path = parse_key_path();
    skip_inline_ws();
    if (!consume("=")) fail("expected '=' after key");
    skip_inline_ws();
    json* node = &table;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &descend(*node, path[i]);
    if (node->contains(path.back())) fail("duplicate key '" + join(path) + "'");
    (*node)[path.back()] = parse_value();
  }

  json parse_value() {
    const char c = peek();
    if (c == '"') return parse_basic_string();
    if (c == '\'') return parse_literal_string();
    if (c == '[') return parse_array();
    if (c == '{') return parse_inline_table();
    if (consume("true")) return true;
    if (consume("false")) return false;
    return parse_number();
  }

  std::string parse_basic_string() {
    if (consume("\"\"\"")) fail("multi-line strings are not supported");
    ++pos_;
    std::string out;
    for (;;) {
      if (eof() || peek() == '\n') fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (eof()) fail("unterminated escape");
      const char e = s_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'b': out += '\b'; break;
        case 'f': out += '\f'; break;
        case 'u': {
          if (pos_ + 4 > s_.size()) fail("bad \\u escape");
          unsigned cp = 0;
          const auto r = std::from_chars(s_.data() + pos_, s_.data() + pos_ + 4, cp, 16);
          if (r.ptr != s_.data() + pos_ + 4) fail("bad \\u escape");
          pos_ += 4;
          append_utf8(out, cp);
          break;
        }
        default: fail(std::string("unknown escape \\") + e);
      }
    }
  }

  static void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
      out += char(cp);
    } else if (cp < 0x800) {
      out += char(0xC0 | (cp >> 6));
      out += char(0x80 | (cp & 0x3F));
    } else {
      out += char(0xE0 | (cp >> 12));
      out += char(0x80 | ((cp >> 6) & 0x3F));
      out += char(0x80 | (cp & 0x3F));
    }
  }

  std::string parse_literal_string() {
    if (consume("'''")) fail("multi-line strings are not supported");
    ++pos_;
    const auto start = pos_;
    while (!eof() && peek() != '\'' && peek() != '\n') ++pos_;
    if (peek() != '\'') fail("unterminated string");
    return std::string(s_.substr(start, pos_++ - start));
  }

  json parse_array() {
    ++pos_;
    json arr = json::array();
    for (;;) {
      skip_ws_comments_newlines();
      if (consume("]")) return arr;
      arr.push_back(parse_value());
      skip_ws_comments_newlines();
      if (consume(",")) continue;
      if (consume("]")) return arr;
      fail("expected ',' or ']' in array");
    }
  }

  json parse_inline_table() {
    ++pos_;
    json table = json::object();
    skip_inline_ws();
    if (consume("}")) return table;
    for (;;) {
      skip_inline_ws();
      parse_key_value(table);
      skip_inline_ws();
      if (consume(",")) continue;
      if (consume("}")) return table;
      fail("expected ',' or '}' in inline table");
    }
  }

  json parse_number() {
    const auto start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                      peek() == '.' || peek() == '_'))
      ++pos_;
    std::string tok;
    for (char c : s_.substr(start, pos_ - start))
      if (c != '_') tok += c;
    if (tok.empty()) fail("expected a value");
    std::string_view body = tok;
    const bool negative = body.front() == '-';
    if (body.front() == '+' || body.front() == '-') body.remove_prefix(1);
    if (body == "inf") return negative ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    const char* first = tok.data() + (tok.front() == '+' ? 1 : 0);
    const char* last = tok.data() + tok.size();
    if (is_float) {
      double v = 0.0;
      const auto r = std::from_chars(first, last, v);
      if (r.ec != std::errc() || r.ptr != last) fail("invalid number '" + tok + "'");
      return v;
    }
    std::int64_t v = 0;
    const auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc() || r.ptr != last) fail("invalid value '" + tok + "'");
    return v;
  }
};

}  // namespace detail

inline json parse(std::string_view text) { return detail::Parser(text).parse(); }

inline json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace ffc::toml
