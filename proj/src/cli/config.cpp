#include "nshift/cli/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace nshift::cli {

const char* kind_name(Value::Kind kind) {
  switch (kind) {
    case Value::Kind::String: return "string";
    case Value::Kind::Number: return "number";
    case Value::Kind::Bool: return "boolean";
    case Value::Kind::Array: return "array";
  }
  return "value";
}

namespace {

class Parser {
 public:
  Parser(std::string_view text, const std::string& filename) : s_(text), file_(filename) {}

  std::vector<Section> run() {
    std::vector<Section> sections;
    sections.push_back({"", {}, {}, 1});
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        const int line = line_, col = col_;
        advance();
        skip_spaces();
        std::string name = key();
        skip_spaces();
        expect(']', "']' closing the section header");
        end_of_line();
        for (const auto& sec : sections) {
          if (sec.name == name) fail(line, col, "duplicate section [" + name + "]");
        }
        sections.push_back({name, {}, {}, line});
        continue;
      }
      const int line = line_, col = col_;
      std::string k = key();
      skip_spaces();
      expect('=', "'=' after key '" + k + "'");
      skip_spaces();
      Value v = value();
      end_of_line();
      Section& sec = sections.back();
      if (sec.entries.count(k)) fail(line, col, "duplicate key '" + k + "'");
      sec.entries.emplace(k, std::move(v));
      sec.order.push_back(k);
    }
    return sections;
  }

 private:
  [[noreturn]] void fail(int line, int col, const std::string& msg) const {
    throw ConfigError(file_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  }
  [[noreturn]] void fail(const std::string& msg) const { fail(line_, col_, msg); }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void expect(char c, const std::string& what) {
    if (peek() != c) fail("expected " + what);
    advance();
  }
  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) advance();
  }
  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') advance();
    }
  }
  void skip_blank_lines() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n') {
        advance();
      } else {
        break;
      }
    }
  }
  // Whitespace, comments and newlines inside arrays.
  void skip_any() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n') advance(); else break;
    }
  }
  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (eof()) return;
    if (peek() != '\n') fail("unexpected text after value");
    advance();
  }

  std::string key() {
    std::string k;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                      peek() == '-')) {
      k += peek();
      advance();
    }
    if (k.empty()) fail("expected a key");
    return k;
  }

  Value value() {
    Value v;
    v.line = line_;
    v.column = col_;
    const char c = peek();
    if (c == '"') {
      v.kind = Value::Kind::String;
      v.text = string_literal();
    } else if (c == '[') {
      v.kind = Value::Kind::Array;
      advance();
      skip_any();
      while (peek() != ']') {
        if (eof()) fail(v.line, v.column, "unterminated array");
        v.items.push_back(value());
        skip_any();
        if (peek() == ',') {
          advance();
          skip_any();
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
      advance();
    } else if (s_.substr(pos_, 4) == "true" || s_.substr(pos_, 5) == "false") {
      v.kind = Value::Kind::Bool;
      v.boolean = s_[pos_] == 't';
      for (int i = 0, len = v.boolean ? 4 : 5; i < len; ++i) advance();
    } else {
      v.kind = Value::Kind::Number;
      std::size_t end = pos_;
      while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) ||
                                 s_[end] == '.' || s_[end] == '+' || s_[end] == '-' ||
                                 s_[end] == '_')) {
        ++end;
      }
      std::string token;
      for (std::size_t i = pos_; i < end; ++i) {
        if (s_[i] != '_') token += s_[i];
      }
      if (token.empty()) fail("expected a value (string, number, boolean or array)");
      const char* first = token.data();
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, token.data() + token.size(), v.number);
      if (ec != std::errc() || ptr != token.data() + token.size()) {
        fail("malformed number '" + token + "'");
      }
      while (pos_ < end) advance();
    }
    return v;
  }

  std::string string_literal() {
    const int line = line_, col = col_;
    advance();
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail(line, col, "unterminated string");
      const char c = peek();
      advance();
      if (c == '"') break;
      if (c == '\\') {
        const char e = peek();
        if (eof()) fail(line, col, "unterminated string");
        advance();
        switch (e) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: fail("unknown escape '\\" + std::string(1, e) + "'");
        }
      } else {
        out += c;
      }
    }
    return out;
  }

  std::string_view s_;
  std::string file_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace

Config Config::parse(std::string_view text, const std::string& filename) {
  Config c;
  c.filename_ = filename;
  c.sections_ = Parser(text, filename).run();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

const Section* Config::section(const std::string& name) const {
  for (const auto& s : sections_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

}  // namespace nshift::cli
