#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dlm/encoder.hpp"
#include "dlm/model.hpp"

namespace dlm {

// Flat `key = value` document with `#` comments. Keys come from a fixed
// registry; unknown keys are rejected. The effective config (defaults +
// file + flag overrides) is what gets hashed and echoed into reports.
class Config {
 public:
  static Config defaults();
  static Config from_file(const std::string& path);

  // Parses a whole document into this config. Later assignments win.
  void apply_text(const std::string& text);
  void set(const std::string& key, const std::string& value);
  bool has_key(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  // Sorted `key=value` lines with normalized value formatting.
  std::string canonical() const;
  std::uint64_t hash() const;

  ModelDims model_dims() const;
  EncoderConfig encoder_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dlm
