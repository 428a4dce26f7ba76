#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlm/table.hpp"

namespace dlm {

// Per-column distributional summary. Numeric statistics are computed over
// numeric cells only; ratios and counts see all non-missing cells.
struct ColumnSummary {
  double central_tendency = 0.0;  // mean of numeric cells, 0 if none
  double dispersion = 0.0;        // population std, 0 if < 2 numeric cells
  double range_lo = 0.0;
  double range_hi = 0.0;
  double numeric_ratio = 0.0;     // numeric / non-missing, 0 if all missing
  double unique_density = 0.0;    // distinct non-missing / non-missing
  std::int64_t observed_count = 0;
};

ColumnSummary summarize_column(const std::vector<CellValue>& column);

struct EncoderConfig {
  int d_sem = 32;
  int d_cell = 32;
  std::uint64_t hash_seed = 0x5eed;
};

// Slot layout of a cell feature vector. Slots [kTokenOffset, d_cell) hold the
// hashed token embedding of categorical cells.
inline constexpr int kCellSlotValue = 0;
inline constexpr int kCellSlotNumericFlag = 1;
inline constexpr int kCellSlotMissingFlag = 2;
inline constexpr int kCellTokenOffset = 3;

// The four per-dataset pathways plus masks, aligned cell-wise. cell_feats is
// stored (n_rows * n_cols) x d_cell with cell (r, c) at row r * n_cols + c.
struct SignalBundle {
  int n_rows = 0;
  int n_cols = 0;
  Eigen::MatrixXd semantics;      // n_cols x d_sem; all-zero iff names absent
  Eigen::MatrixXd summaries;      // n_cols x 7, observed_count log-scaled
  Eigen::MatrixXd cell_feats;     // (n_rows * n_cols) x d_cell
  Eigen::MatrixXd miss_mask;      // n_rows x n_cols, 1 = present
  Eigen::VectorXd row_miss_frac;  // n_rows
  Eigen::VectorXd col_miss_frac;  // n_cols
  // Robust-scaling constants used by the cells pathway; kept so predictions
  // can be mapped back to raw value space.
  Eigen::VectorXd col_center;     // per-column median of observed numerics
  Eigen::VectorXd col_scale;      // per-column IQR, 1 where IQR == 0 or no numerics

  int cell_index(int row, int col) const { return row * n_cols + col; }
};

// Hashed character-trigram embedding shared by the semantics pathway and the
// categorical token encoding: lowercase, pad, hash each trigram to a signed
// bucket, L2-normalize (the zero vector stays zero).
Eigen::VectorXd hashed_trigram_embedding(const std::string& text, int dim,
                                         std::uint64_t hash_seed);

// Zero matrix when names are absent; otherwise one hashed-trigram row per
// name. Requires d_sem >= 8.
Eigen::MatrixXd encode_semantics(const std::optional<std::vector<std::string>>& names,
                                 int n_cols, int d_sem, std::uint64_t hash_seed);

struct MissingnessEncoding {
  Eigen::MatrixXd miss_mask;
  Eigen::VectorXd row_miss_frac;
  Eigen::VectorXd col_miss_frac;
};

MissingnessEncoding encode_missingness(const RawTable& table);

// Unified per-cell features under the slot layout above. Numeric values are
// robustly scaled by their column's median/IQR computed from this table's
// observed numerics (IQR 0 => divisor 1).
Eigen::MatrixXd encode_cells(const RawTable& table, const EncoderConfig& config,
                             Eigen::VectorXd* col_center = nullptr,
                             Eigen::VectorXd* col_scale = nullptr);

// Assembles the four pathways; no imputation, no mutation of the table.
SignalBundle fuse(const RawTable& table, const EncoderConfig& config = {});

// Copy of the bundle with the semantics pathway zeroed (agnostic mode).
SignalBundle zero_semantics(SignalBundle bundle);

}  // namespace dlm
