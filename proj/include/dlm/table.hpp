#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlm/common.hpp"

namespace dlm {

// One table cell: a finite number, a non-empty token, or an explicit gap.
class CellValue {
 public:
  enum class Kind { Missing, Numeric, Categorical };

  CellValue() : kind_(Kind::Missing), num_(0.0) {}

  static CellValue missing() { return CellValue(); }
  static CellValue numeric(double v);
  static CellValue categorical(std::string token);

  Kind kind() const { return kind_; }
  bool is_missing() const { return kind_ == Kind::Missing; }
  bool is_numeric() const { return kind_ == Kind::Numeric; }
  bool is_categorical() const { return kind_ == Kind::Categorical; }

  double number() const { return num_; }
  const std::string& token() const { return cat_; }

  bool operator==(const CellValue& other) const {
    if (kind_ != other.kind_) return false;
    switch (kind_) {
      case Kind::Missing: return true;
      case Kind::Numeric: return num_ == other.num_;
      case Kind::Categorical: return cat_ == other.cat_;
    }
    return false;
  }

 private:
  Kind kind_;
  double num_;
  std::string cat_;
};

struct Provenance {
  enum class Kind { Synthetic, External, Unknown };
  Kind kind = Kind::Unknown;
  int sector_id = -1;  // valid only for Kind::Synthetic

  static Provenance synthetic(int sector) { return {Kind::Synthetic, sector}; }
  static Provenance external() { return {Kind::External, -1}; }
  static Provenance unknown() { return {Kind::Unknown, -1}; }
};

// Desk-scale guard for ingestion and generation.
inline constexpr std::int64_t kMaxTableCells = 1'000'000;

// Rectangular grid of cells with optional column names. Immutable by
// convention after construction; cheap to copy at toy scale.
struct RawTable {
  std::string table_id;
  std::optional<std::vector<std::string>> column_names;
  std::vector<CellValue> cells;  // row-major, n_rows * n_cols
  int n_rows = 0;
  int n_cols = 0;
  Provenance provenance;

  const CellValue& at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * n_cols + col];
  }
  CellValue& at(int row, int col) {
    return cells[static_cast<std::size_t>(row) * n_cols + col];
  }

  std::vector<CellValue> column(int col) const {
    std::vector<CellValue> out;
    out.reserve(n_rows);
    for (int r = 0; r < n_rows; ++r) out.push_back(at(r, col));
    return out;
  }

  // Enforces rectangularity, dimension minimums, cell invariants and the
  // name-length contract. Throws on violation.
  void validate() const;
};

struct SourceBundle {
  std::vector<RawTable> tables;
};

enum class NameMode { Full, RandomStrings, None };

// Full keeps names, RandomStrings replaces each with a seeded 8-char
// alphanumeric token, None drops the name list. Cells are never touched.
RawTable strip_names(const RawTable& table, NameMode mode, std::uint64_t seed = 0);

// Order-preserving wrapper; no alignment, normalization or key inference.
SourceBundle bundle(std::vector<RawTable> tables);

// Writes the table back to delimited text. Categorical tokens are emitted
// byte-for-byte; numerics use shortest round-trip formatting; missing cells
// become missing_token.
std::string serialize_table(const RawTable& table, char delimiter = ',',
                            const std::string& missing_token = "");

}  // namespace dlm
