#include "dlm/encoder.hpp"

#include <cmath>
#include <set>

#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"

namespace dlm {

ColumnSummary summarize_column(const std::vector<CellValue>& column) {
  require(!column.empty(), ErrorCode::EmptyInput, "summarize_column needs >= 1 cell");
  ColumnSummary s;
  std::vector<double> numerics;
  std::set<std::string> distinct;
  std::int64_t observed = 0;
  for (const auto& cell : column) {
    if (cell.is_missing()) continue;
    ++observed;
    if (cell.is_numeric()) {
      numerics.push_back(cell.number());
      distinct.insert("n:" + format_double(cell.number()));
    } else {
      distinct.insert("c:" + cell.token());
    }
  }
  s.observed_count = observed;
  if (observed == 0) return s;
  s.numeric_ratio = static_cast<double>(numerics.size()) / static_cast<double>(observed);
  s.unique_density = static_cast<double>(distinct.size()) / static_cast<double>(observed);
  if (!numerics.empty()) {
    // Sorting first makes every statistic a pure function of the multiset,
    // independent of cell order down to the last bit.
    std::sort(numerics.begin(), numerics.end());
    s.central_tendency = mean_of(numerics);
    s.dispersion = pop_std(numerics);
    s.range_lo = numerics.front();
    s.range_hi = numerics.back();
  }
  return s;
}

Eigen::VectorXd hashed_trigram_embedding(const std::string& text, int dim,
                                         std::uint64_t hash_seed) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  std::string padded = "^^";
  padded.reserve(text.size() + 4);
  for (char c : text) {
    padded.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
  }
  padded += "$$";
  if (padded.size() < 3) return v;
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const std::uint64_t h = fnv1a64(padded.data() + i, 3, hash_seed ^ 0x9e3779b97f4a7c15ull);
    const int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim));
    const double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
    v[bucket] += sign;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

Eigen::MatrixXd encode_semantics(const std::optional<std::vector<std::string>>& names,
                                 int n_cols, int d_sem, std::uint64_t hash_seed) {
  require(d_sem >= 8, ErrorCode::ConfigError, "d_sem must be >= 8");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n_cols, d_sem);
  if (!names) return m;
  require(static_cast<int>(names->size()) == n_cols, ErrorCode::DimensionMismatch,
          "names length != n_cols");
  for (int c = 0; c < n_cols; ++c) {
    m.row(c) = hashed_trigram_embedding((*names)[c], d_sem, hash_seed).transpose();
  }
  return m;
}

MissingnessEncoding encode_missingness(const RawTable& table) {
  MissingnessEncoding enc;
  enc.miss_mask = Eigen::MatrixXd::Ones(table.n_rows, table.n_cols);
  enc.row_miss_frac = Eigen::VectorXd::Zero(table.n_rows);
  enc.col_miss_frac = Eigen::VectorXd::Zero(table.n_cols);
  for (int r = 0; r < table.n_rows; ++r) {
    for (int c = 0; c < table.n_cols; ++c) {
      if (table.at(r, c).is_missing()) {
        enc.miss_mask(r, c) = 0.0;
        enc.row_miss_frac[r] += 1.0;
        enc.col_miss_frac[c] += 1.0;
      }
    }
  }
  enc.row_miss_frac /= static_cast<double>(table.n_cols);
  enc.col_miss_frac /= static_cast<double>(table.n_rows);
  return enc;
}

Eigen::MatrixXd encode_cells(const RawTable& table, const EncoderConfig& config,
                             Eigen::VectorXd* col_center_out, Eigen::VectorXd* col_scale_out) {
  require(config.d_cell >= kCellTokenOffset + 8, ErrorCode::ConfigError,
          "d_cell must leave >= 8 token slots");
  const int token_dim = config.d_cell - kCellTokenOffset;

  Eigen::VectorXd center = Eigen::VectorXd::Zero(table.n_cols);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(table.n_cols);
  for (int c = 0; c < table.n_cols; ++c) {
    std::vector<double> numerics;
    for (int r = 0; r < table.n_rows; ++r) {
      const auto& cell = table.at(r, c);
      if (cell.is_numeric()) numerics.push_back(cell.number());
    }
    if (!numerics.empty()) {
      center[c] = quantile(numerics, 0.5);
      const double iqr = quantile(numerics, 0.75) - quantile(numerics, 0.25);
      scale[c] = iqr > 0.0 ? iqr : 1.0;
    }
  }

  Eigen::MatrixXd feats =
      Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.n_rows) * table.n_cols,
                            config.d_cell);
  for (int r = 0; r < table.n_rows; ++r) {
    for (int c = 0; c < table.n_cols; ++c) {
      const auto& cell = table.at(r, c);
      const Eigen::Index i = static_cast<Eigen::Index>(r) * table.n_cols + c;
      switch (cell.kind()) {
        case CellValue::Kind::Numeric:
          feats(i, kCellSlotValue) = (cell.number() - center[c]) / scale[c];
          feats(i, kCellSlotNumericFlag) = 1.0;
          break;
        case CellValue::Kind::Categorical:
          feats.block(i, kCellTokenOffset, 1, token_dim) =
              hashed_trigram_embedding(cell.token(), token_dim, config.hash_seed)
                  .transpose();
          break;
        case CellValue::Kind::Missing:
          feats(i, kCellSlotMissingFlag) = 1.0;
          break;
      }
    }
  }
  if (col_center_out) *col_center_out = center;
  if (col_scale_out) *col_scale_out = scale;
  return feats;
}

SignalBundle fuse(const RawTable& table, const EncoderConfig& config) {
  table.validate();
  SignalBundle b;
  b.n_rows = table.n_rows;
  b.n_cols = table.n_cols;
  b.semantics = encode_semantics(table.column_names, table.n_cols, config.d_sem,
                                 config.hash_seed);
  b.summaries = Eigen::MatrixXd::Zero(table.n_cols, 7);
  for (int c = 0; c < table.n_cols; ++c) {
    const ColumnSummary s = summarize_column(table.column(c));
    b.summaries(c, 0) = s.central_tendency;
    b.summaries(c, 1) = s.dispersion;
    b.summaries(c, 2) = s.range_lo;
    b.summaries(c, 3) = s.range_hi;
    b.summaries(c, 4) = s.numeric_ratio;
    b.summaries(c, 5) = s.unique_density;
    b.summaries(c, 6) = std::log1p(static_cast<double>(s.observed_count));
  }
  b.cell_feats = encode_cells(table, config, &b.col_center, &b.col_scale);
  MissingnessEncoding miss = encode_missingness(table);
  b.miss_mask = std::move(miss.miss_mask);
  b.row_miss_frac = std::move(miss.row_miss_frac);
  b.col_miss_frac = std::move(miss.col_miss_frac);
  return b;
}

SignalBundle zero_semantics(SignalBundle bundle) {
  bundle.semantics.setZero();
  return bundle;
}

}  // namespace dlm
