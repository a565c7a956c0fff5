#pragma once

// Scenario files: a TOML subset with [section] headers, `key = value` lines,
// '#' comments, double-quoted strings, numbers, booleans and (possibly nested,
// possibly multi-line) arrays.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nshift/error.hpp"

namespace nshift::cli {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct Value {
  enum class Kind { String, Number, Bool, Array };

  Kind kind = Kind::Number;
  std::string text;  // String
  double number = 0.0;
  bool boolean = false;
  std::vector<Value> items;  // Array
  int line = 0;
  int column = 0;
};

const char* kind_name(Value::Kind kind);

struct Section {
  std::string name;
  std::map<std::string, Value> entries;
  std::vector<std::string> order;  // keys in file order
  int line = 0;
};

class Config {
 public:
  // Throws ConfigError "<file>:<line>:<column>: message".
  static Config parse(std::string_view text, const std::string& filename = "<config>");
  static Config load(const std::string& path);

  const std::string& filename() const { return filename_; }
  // "" is the table before the first header.
  const Section* section(const std::string& name) const;
  const std::vector<Section>& sections() const { return sections_; }

 private:
  std::string filename_;
  std::vector<Section> sections_;
};

}  // namespace nshift::cli
