#include "dlm/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <set>

#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/rng.hpp"

namespace dlm {

std::vector<std::string> target_classes(const RawTable& table, int target_col) {
  require(target_col >= 0 && target_col < table.n_cols, ErrorCode::DimensionMismatch,
          "target column out of range");
  std::set<std::string> seen;
  for (int r = 0; r < table.n_rows; ++r) {
    const auto& cell = table.at(r, target_col);
    if (cell.is_categorical()) seen.insert(cell.token());
  }
  return {seen.begin(), seen.end()};
}

std::vector<int> target_labels(const RawTable& table, int target_col,
                               const std::vector<std::string>& classes) {
  std::vector<int> labels(table.n_rows, -1);
  for (int r = 0; r < table.n_rows; ++r) {
    const auto& cell = table.at(r, target_col);
    if (!cell.is_categorical()) continue;
    auto it = std::lower_bound(classes.begin(), classes.end(), cell.token());
    if (it != classes.end() && *it == cell.token()) {
      labels[r] = static_cast<int>(it - classes.begin());
    }
  }
  return labels;
}

namespace {

class MajorityModel : public TabularModel {
 public:
  std::string name() const override { return "majority"; }

  Eigen::MatrixXd fit_predict(const RawTable& table, int target_col,
                              const std::vector<int>& train_rows,
                              const std::vector<int>& test_rows, double, std::uint64_t) override {
    const auto classes = target_classes(table, target_col);
    const auto labels = target_labels(table, target_col, classes);
    Eigen::VectorXd freq = Eigen::VectorXd::Constant(classes.size(), 1e-9);
    for (int r : train_rows) {
      if (labels[r] >= 0) freq[labels[r]] += 1.0;
    }
    freq /= freq.sum();
    Eigen::MatrixXd probs(test_rows.size(), classes.size());
    for (std::size_t i = 0; i < test_rows.size(); ++i) probs.row(i) = freq.transpose();
    return probs;
  }
};

// Dense numeric design matrix: z-scaled numerics with train-mean imputation,
// one-hot categoricals (missing -> all zero).
struct FeatureSpace {
  struct Column {
    bool numeric;
    double mean = 0.0, std_dev = 1.0;
    std::vector<std::string> vocab;
    int offset = 0, width = 0;
  };
  std::vector<Column> columns;
  int total_width = 0;

  static FeatureSpace build(const RawTable& table, int target_col,
                            const std::vector<int>& train_rows) {
    FeatureSpace fs;
    for (int c = 0; c < table.n_cols; ++c) {
      if (c == target_col) continue;
      Column col;
      std::vector<double> numerics;
      std::set<std::string> tokens;
      for (int r : train_rows) {
        const auto& cell = table.at(r, c);
        if (cell.is_numeric()) numerics.push_back(cell.number());
        if (cell.is_categorical()) tokens.insert(cell.token());
      }
      col.numeric = numerics.size() >= tokens.size();
      if (col.numeric) {
        col.mean = mean_of(numerics);
        col.std_dev = pop_std(numerics);
        if (col.std_dev <= 0.0) col.std_dev = 1.0;
        col.width = 1;
      } else {
        col.vocab.assign(tokens.begin(), tokens.end());
        col.width = std::max<int>(1, static_cast<int>(col.vocab.size()));
      }
      col.offset = fs.total_width;
      fs.total_width += col.width;
      // Remember the source column index through position in `columns`.
      fs.columns.push_back(std::move(col));
      fs.source_cols.push_back(c);
    }
    return fs;
  }

  Eigen::RowVectorXd encode(const RawTable& table, int row) const {
    Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(total_width);
    for (std::size_t k = 0; k < columns.size(); ++k) {
      const Column& col = columns[k];
      const auto& cell = table.at(row, source_cols[k]);
      if (col.numeric) {
        // Mean imputation: missing and non-numeric cells sit at the mean.
        const double v = cell.is_numeric() ? cell.number() : col.mean;
        x[col.offset] = (v - col.mean) / col.std_dev;
      } else if (cell.is_categorical()) {
        auto it = std::lower_bound(col.vocab.begin(), col.vocab.end(), cell.token());
        if (it != col.vocab.end() && *it == cell.token()) {
          x[col.offset + static_cast<int>(it - col.vocab.begin())] = 1.0;
        }
      }
    }
    return x;
  }

  std::vector<int> source_cols;
};

class LogisticModel : public TabularModel {
 public:
  std::string name() const override { return "logistic"; }

  Eigen::MatrixXd fit_predict(const RawTable& table, int target_col,
                              const std::vector<int>& train_rows,
                              const std::vector<int>& test_rows, double budget_s,
                              std::uint64_t seed) override {
    const auto classes = target_classes(table, target_col);
    const auto labels = target_labels(table, target_col, classes);
    const int n_classes = static_cast<int>(classes.size());
    const FeatureSpace fs = FeatureSpace::build(table, target_col, train_rows);

    std::vector<int> rows;
    for (int r : train_rows) {
      if (labels[r] >= 0) rows.push_back(r);
    }
    Eigen::MatrixXd X(rows.size(), fs.total_width);
    std::vector<int> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      X.row(i) = fs.encode(table, rows[i]);
      y[i] = labels[rows[i]];
    }

    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(fs.total_width, n_classes);
    Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(n_classes);
    Eigen::MatrixXd vW = W, onehot = Eigen::MatrixXd::Zero(rows.size(), n_classes);
    Eigen::RowVectorXd vb = b;
    for (std::size_t i = 0; i < rows.size(); ++i) onehot(i, y[i]) = 1.0;

    const double lr = 0.5, momentum = 0.9, l2 = 1e-4;
    const int epochs = 400;
    const auto t0 = std::chrono::steady_clock::now();
    (void)seed;
    for (int e = 0; e < epochs; ++e) {
      Eigen::MatrixXd logits = (X * W).rowwise() + b;
      Eigen::MatrixXd P(logits.rows(), logits.cols());
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        P.row(i) = (logits.row(i).array() - m).exp();
        P.row(i) /= P.row(i).sum();
      }
      Eigen::MatrixXd diff = (P - onehot) / static_cast<double>(rows.size());
      Eigen::MatrixXd gW = X.transpose() * diff + l2 * W;
      Eigen::RowVectorXd gb = diff.colwise().sum();
      vW = momentum * vW + gW;
      vb = momentum * vb + gb;
      W -= lr * vW;
      b -= lr * vb;
      if (budget_s > 0.0) {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (elapsed > budget_s) break;
      }
    }

    Eigen::MatrixXd probs(test_rows.size(), n_classes);
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      Eigen::RowVectorXd logits = fs.encode(table, test_rows[i]) * W + b;
      const double m = logits.maxCoeff();
      Eigen::RowVectorXd p = (logits.array() - m).exp();
      probs.row(i) = p / p.sum();
    }
    return probs;
  }
};

class ColumnMeanImputer : public Imputer {
 public:
  std::string name() const override { return "column_mean"; }

  RawTable impute(const RawTable& degraded, std::uint64_t) override {
    RawTable filled = degraded;
    for (int c = 0; c < degraded.n_cols; ++c) {
      std::vector<double> numerics;
      std::map<std::string, int> token_counts;
      for (int r = 0; r < degraded.n_rows; ++r) {
        const auto& cell = degraded.at(r, c);
        if (cell.is_numeric()) numerics.push_back(cell.number());
        if (cell.is_categorical()) token_counts[cell.token()] += 1;
      }
      const bool numeric_col = numerics.size() >= token_counts.size();
      double mean = numerics.empty() ? 0.0 : mean_of(numerics);
      std::string mode;
      int best = -1;
      for (const auto& [token, count] : token_counts) {
        if (count > best) {
          best = count;
          mode = token;
        }
      }
      for (int r = 0; r < degraded.n_rows; ++r) {
        if (!degraded.at(r, c).is_missing()) continue;
        if (numeric_col || mode.empty()) {
          filled.at(r, c) = CellValue::numeric(mean);
        } else {
          filled.at(r, c) = CellValue::categorical(mode);
        }
      }
    }
    return filled;
  }
};

class KnnImputer : public Imputer {
 public:
  explicit KnnImputer(int k) : k_(k) {}
  std::string name() const override { return "knn_rows"; }

  RawTable impute(const RawTable& degraded, std::uint64_t) override {
    const int R = degraded.n_rows, C = degraded.n_cols;
    // Per-column scaling for comparable distances.
    std::vector<double> mean(C, 0.0), sd(C, 1.0);
    for (int c = 0; c < C; ++c) {
      std::vector<double> numerics;
      for (int r = 0; r < R; ++r) {
        if (degraded.at(r, c).is_numeric()) numerics.push_back(degraded.at(r, c).number());
      }
      if (!numerics.empty()) {
        mean[c] = mean_of(numerics);
        sd[c] = pop_std(numerics);
        if (sd[c] <= 0.0) sd[c] = 1.0;
      }
    }
    auto distance = [&](int a, int b) {
      double sum = 0.0;
      int overlap = 0;
      for (int c = 0; c < C; ++c) {
        const auto& ca = degraded.at(a, c);
        const auto& cb = degraded.at(b, c);
        if (ca.is_missing() || cb.is_missing()) continue;
        ++overlap;
        if (ca.is_numeric() && cb.is_numeric()) {
          const double d = (ca.number() - cb.number()) / sd[c];
          sum += d * d;
        } else if (ca.is_categorical() && cb.is_categorical()) {
          sum += ca.token() == cb.token() ? 0.0 : 1.0;
        } else {
          sum += 1.0;
        }
      }
      if (overlap == 0) return std::numeric_limits<double>::infinity();
      return std::sqrt(sum / overlap);
    };

    RawTable filled = degraded;
    auto fallback = ColumnMeanImputer().impute(degraded, 0);
    for (int r = 0; r < R; ++r) {
      bool row_has_missing = false;
      for (int c = 0; c < C; ++c) row_has_missing |= degraded.at(r, c).is_missing();
      if (!row_has_missing) continue;

      std::vector<std::pair<double, int>> neighbours;
      for (int o = 0; o < R; ++o) {
        if (o == r) continue;
        const double d = distance(r, o);
        if (std::isfinite(d)) neighbours.emplace_back(d, o);
      }
      std::sort(neighbours.begin(), neighbours.end());

      for (int c = 0; c < C; ++c) {
        if (!degraded.at(r, c).is_missing()) continue;
        std::vector<double> numerics;
        std::map<std::string, int> token_counts;
        int used = 0;
        for (const auto& [d, o] : neighbours) {
          const auto& donor = degraded.at(o, c);
          if (donor.is_missing()) continue;
          if (donor.is_numeric()) numerics.push_back(donor.number());
          else token_counts[donor.token()] += 1;
          if (++used >= k_) break;
        }
        if (!numerics.empty() && numerics.size() >= token_counts.size()) {
          filled.at(r, c) = CellValue::numeric(mean_of(numerics));
        } else if (!token_counts.empty()) {
          std::string mode;
          int best = -1;
          for (const auto& [token, count] : token_counts) {
            if (count > best) {
              best = count;
              mode = token;
            }
          }
          filled.at(r, c) = CellValue::categorical(mode);
        } else {
          filled.at(r, c) = fallback.at(r, c);
        }
      }
    }
    return filled;
  }

 private:
  int k_;
};

}  // namespace

std::unique_ptr<TabularModel> make_majority_model() { return std::make_unique<MajorityModel>(); }
std::unique_ptr<TabularModel> make_logistic_model() { return std::make_unique<LogisticModel>(); }
std::unique_ptr<Imputer> make_column_mean_imputer() {
  return std::make_unique<ColumnMeanImputer>();
}
std::unique_ptr<Imputer> make_knn_imputer(int k) { return std::make_unique<KnnImputer>(k); }

}  // namespace dlm
