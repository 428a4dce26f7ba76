#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "dlm/table.hpp"

namespace dlm {

struct ParseOptions {
  char delimiter = ',';
  bool has_header = true;
  std::set<std::string> missing_tokens = {"", "NA", "NaN", "null", "?"};
};

// Strict numeric grammar: optional sign, decimal digits with optional
// fraction, optional exponent. No hex, no inf/nan, no digit grouping.
// Returns the value only when the whole field matches and the result is
// finite.
std::optional<double> lex_numeric(std::string_view field);

std::string_view trim_ascii(std::string_view s);

// Splits text into rows and fields, tags each field as Numeric, Categorical
// or Missing, and returns a rectangular RawTable. No coercion, no cleaning.
RawTable parse_table(std::string_view text, const ParseOptions& options = {});

RawTable parse_table_file(const std::string& path, const ParseOptions& options = {});

}  // namespace dlm
