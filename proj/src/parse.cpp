#include "dlm/parse.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dlm {

std::string_view trim_ascii(std::string_view s) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
  };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

std::optional<double> lex_numeric(std::string_view field) {
  const char* p = field.data();
  const char* end = p + field.size();
  if (p == end) return std::nullopt;
  if (*p == '+' || *p == '-') ++p;
  const char* digits_start = p;
  while (p != end && *p >= '0' && *p <= '9') ++p;
  bool has_int = p != digits_start;
  bool has_frac = false;
  if (p != end && *p == '.') {
    ++p;
    const char* frac_start = p;
    while (p != end && *p >= '0' && *p <= '9') ++p;
    has_frac = p != frac_start;
  }
  if (!has_int && !has_frac) return std::nullopt;
  if (p != end && (*p == 'e' || *p == 'E')) {
    ++p;
    if (p != end && (*p == '+' || *p == '-')) ++p;
    const char* exp_start = p;
    while (p != end && *p >= '0' && *p <= '9') ++p;
    if (p == exp_start) return std::nullopt;
  }
  if (p != end) return std::nullopt;

  // Grammar accepted; convert with strtod on a NUL-terminated copy.
  std::string buf(field);
  char* conv_end = nullptr;
  const double value = std::strtod(buf.c_str(), &conv_end);
  if (conv_end != buf.c_str() + buf.size()) return std::nullopt;
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

namespace {

CellValue classify_field(std::string_view raw, const ParseOptions& options) {
  const std::string_view trimmed = trim_ascii(raw);
  if (trimmed.empty()) return CellValue::missing();
  if (options.missing_tokens.count(std::string(trimmed)) > 0) return CellValue::missing();
  if (auto num = lex_numeric(trimmed)) return CellValue::numeric(*num);
  return CellValue::categorical(std::string(raw));
}

std::vector<std::string_view> split_line(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == delimiter) {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

}  // namespace

RawTable parse_table(std::string_view text, const ParseOptions& options) {
  require(!text.empty(), ErrorCode::EmptyInput, "input text is empty");

  // Split into lines; tolerate CRLF and a trailing newline.
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      std::string_view line = text.substr(start, i - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (i < text.size() || !line.empty()) lines.push_back(line);
      start = i + 1;
    }
  }
  // A lone trailing blank line is not a row; interior blank lines are rows
  // (they parse as a single missing field and will trip RaggedRows for
  // multi-column tables, which is the desired strictness).
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  require(!lines.empty(), ErrorCode::EmptyInput, "no rows in input");

  RawTable table;
  std::size_t first_data_line = 0;
  if (options.has_header) {
    auto header_fields = split_line(lines[0], options.delimiter);
    std::vector<std::string> names;
    names.reserve(header_fields.size());
    for (auto f : header_fields) names.emplace_back(trim_ascii(f));
    table.column_names = std::move(names);
    first_data_line = 1;
  }
  require(first_data_line < lines.size(), ErrorCode::EmptyInput, "no data rows");

  const int n_cols = static_cast<int>(split_line(lines[first_data_line], options.delimiter).size());
  if (table.column_names) {
    require(static_cast<int>(table.column_names->size()) == n_cols, ErrorCode::RaggedRows,
            "header and first data row disagree on field count", 0);
  }
  table.n_cols = n_cols;
  table.n_rows = static_cast<int>(lines.size() - first_data_line);
  require(static_cast<std::int64_t>(table.n_rows) * n_cols <= kMaxTableCells,
          ErrorCode::TableTooLarge, "table exceeds the 1e6-cell limit");
  table.cells.reserve(static_cast<std::size_t>(table.n_rows) * n_cols);

  for (std::size_t li = first_data_line; li < lines.size(); ++li) {
    auto fields = split_line(lines[li], options.delimiter);
    const auto data_row = static_cast<std::int64_t>(li - first_data_line);
    require(static_cast<int>(fields.size()) == n_cols, ErrorCode::RaggedRows,
            "row " + std::to_string(data_row) + " has " + std::to_string(fields.size()) +
                " fields, expected " + std::to_string(n_cols),
            data_row);
    for (auto f : fields) table.cells.push_back(classify_field(f, options));
  }
  table.provenance = Provenance::unknown();
  table.validate();
  return table;
}

RawTable parse_table_file(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  RawTable t = parse_table(ss.str(), options);
  t.table_id = path;
  return t;
}

}  // namespace dlm
