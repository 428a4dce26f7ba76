#include "dlm/table.hpp"

#include <cmath>

#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/parse.hpp"
#include "dlm/rng.hpp"

namespace dlm {

CellValue CellValue::numeric(double v) {
  require(std::isfinite(v), ErrorCode::Internal, "numeric cell must be finite");
  CellValue c;
  c.kind_ = Kind::Numeric;
  c.num_ = v;
  return c;
}

CellValue CellValue::categorical(std::string token) {
  require(!trim_ascii(token).empty(), ErrorCode::Internal,
          "categorical token must be non-empty after trimming");
  CellValue c;
  c.kind_ = Kind::Categorical;
  c.cat_ = std::move(token);
  return c;
}

void RawTable::validate() const {
  require(n_rows >= 1 && n_cols >= 1, ErrorCode::EmptyInput,
          "table must have at least one row and one column");
  require(static_cast<std::int64_t>(n_rows) * n_cols <= kMaxTableCells,
          ErrorCode::TableTooLarge, "table exceeds the 1e6-cell limit");
  require(cells.size() == static_cast<std::size_t>(n_rows) * n_cols,
          ErrorCode::DimensionMismatch, "cell grid is not rectangular");
  if (column_names) {
    require(static_cast<int>(column_names->size()) == n_cols,
            ErrorCode::DimensionMismatch, "column_names length must equal n_cols");
  }
  for (const auto& c : cells) {
    if (c.is_numeric()) {
      require(std::isfinite(c.number()), ErrorCode::Internal, "non-finite numeric cell");
    }
  }
}

namespace {

std::string random_name(Rng& rng) {
  static const char alphabet[] =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  std::string s;
  s.reserve(8);
  for (int i = 0; i < 8; ++i) s.push_back(alphabet[rng.below(sizeof(alphabet) - 1)]);
  return s;
}

}  // namespace

RawTable strip_names(const RawTable& table, NameMode mode, std::uint64_t seed) {
  RawTable out = table;
  switch (mode) {
    case NameMode::Full:
      break;
    case NameMode::RandomStrings: {
      if (out.column_names) {
        Rng rng(derive_seed(seed, 0x6e616d65));
        for (auto& name : *out.column_names) name = random_name(rng);
      }
      break;
    }
    case NameMode::None:
      out.column_names.reset();
      break;
  }
  return out;
}

SourceBundle bundle(std::vector<RawTable> tables) {
  require(!tables.empty(), ErrorCode::EmptyBundle, "bundle requires at least one table");
  return SourceBundle{std::move(tables)};
}

std::string serialize_table(const RawTable& table, char delimiter,
                            const std::string& missing_token) {
  std::string out;
  if (table.column_names) {
    for (int c = 0; c < table.n_cols; ++c) {
      if (c > 0) out.push_back(delimiter);
      out += (*table.column_names)[c];
    }
    out.push_back('\n');
  }
  for (int r = 0; r < table.n_rows; ++r) {
    for (int c = 0; c < table.n_cols; ++c) {
      if (c > 0) out.push_back(delimiter);
      const auto& cell = table.at(r, c);
      switch (cell.kind()) {
        case CellValue::Kind::Missing: out += missing_token; break;
        case CellValue::Kind::Numeric: out += format_double(cell.number()); break;
        case CellValue::Kind::Categorical: out += cell.token(); break;
      }
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace dlm
