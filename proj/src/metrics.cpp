#include "dlm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "dlm/hash.hpp"
#include "dlm/rng.hpp"

namespace dlm {

double binary_auc(const std::vector<double>& scores, const std::vector<int>& is_pos) {
  require(scores.size() == is_pos.size(), ErrorCode::DimensionMismatch,
          "scores/labels size mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (int p : is_pos) (p ? n_pos : n_neg) += 1;
  require(n_pos > 0 && n_neg > 0, ErrorCode::SingleClass, "need both classes for AUC");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tied score runs; rank sum of positives gives the
  // Mann-Whitney statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>((i + 1) + (j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (is_pos[order[k]]) rank_sum_pos += midrank;
    }
    i = j + 1;
  }
  const double n_pos_d = static_cast<double>(n_pos);
  const double n_neg_d = static_cast<double>(n_neg);
  return (rank_sum_pos - n_pos_d * (n_pos_d + 1.0) / 2.0) / (n_pos_d * n_neg_d);
}

double roc_auc_ovo(const std::vector<int>& labels, const Eigen::MatrixXd& probs) {
  require(static_cast<Eigen::Index>(labels.size()) == probs.rows(),
          ErrorCode::DimensionMismatch, "labels/probs size mismatch");
  std::set<int> class_set(labels.begin(), labels.end());
  require(class_set.size() >= 2, ErrorCode::SingleClass, "need >= 2 classes present");
  std::vector<int> classes(class_set.begin(), class_set.end());
  for (int c : classes) {
    require(c >= 0 && c < probs.cols(), ErrorCode::DimensionMismatch,
            "label outside probability columns");
  }

  double total = 0.0;
  int n_pairs = 0;
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      const int ca = classes[a], cb = classes[b];
      std::vector<double> score_a, score_b;
      std::vector<int> pos_a, pos_b;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != ca && labels[i] != cb) continue;
        const auto row = static_cast<Eigen::Index>(i);
        score_a.push_back(probs(row, ca));
        pos_a.push_back(labels[i] == ca ? 1 : 0);
        score_b.push_back(probs(row, cb));
        pos_b.push_back(labels[i] == cb ? 1 : 0);
      }
      const double auc_ab = binary_auc(score_a, pos_a);
      const double auc_ba = binary_auc(score_b, pos_b);
      total += 0.5 * (auc_ab + auc_ba);
      ++n_pairs;
    }
  }
  return total / static_cast<double>(n_pairs);
}

std::vector<double> observed_column_ranges(const RawTable& degraded) {
  std::vector<double> ranges(degraded.n_cols, 0.0);
  for (int c = 0; c < degraded.n_cols; ++c) {
    bool any = false;
    double lo = 0.0, hi = 0.0;
    for (int r = 0; r < degraded.n_rows; ++r) {
      const auto& cell = degraded.at(r, c);
      if (!cell.is_numeric()) continue;
      if (!any) {
        lo = hi = cell.number();
        any = true;
      } else {
        lo = std::min(lo, cell.number());
        hi = std::max(hi, cell.number());
      }
    }
    ranges[c] = any ? hi - lo : 0.0;
  }
  return ranges;
}

double nrmse(const PositionMap& ground_truth, const PositionMap& imputed,
             const std::vector<double>& col_range) {
  require(ground_truth.size() == imputed.size(), ErrorCode::PositionMismatch,
          "ground truth and imputation cover different position counts");
  struct ColAcc {
    double sq_sum = 0.0;
    int n = 0;
  };
  std::map<int, ColAcc> per_col;
  auto it_imp = imputed.begin();
  for (auto it_gt = ground_truth.begin(); it_gt != ground_truth.end(); ++it_gt, ++it_imp) {
    require(it_imp->first == it_gt->first, ErrorCode::PositionMismatch,
            "ground truth and imputation cover different positions");
    if (!it_gt->second.is_numeric()) continue;
    require(it_imp->second.is_numeric(), ErrorCode::PositionMismatch,
            "numeric position imputed with a non-numeric value");
    const double diff = it_imp->second.number() - it_gt->second.number();
    auto& acc = per_col[it_gt->first.second];
    acc.sq_sum += diff * diff;
    acc.n += 1;
  }
  if (per_col.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [col, acc] : per_col) {
    require(col >= 0 && col < static_cast<int>(col_range.size()), ErrorCode::PositionMismatch,
            "column outside range table");
    const double rmse = std::sqrt(acc.sq_sum / acc.n);
    const double div = col_range[col] > 0.0 ? col_range[col] : 1.0;
    total += rmse / div;
  }
  return total / static_cast<double>(per_col.size());
}

double categorical_error_rate(const PositionMap& ground_truth, const PositionMap& imputed) {
  int n = 0, wrong = 0;
  for (const auto& [pos, truth] : ground_truth) {
    if (!truth.is_categorical()) continue;
    ++n;
    auto it = imputed.find(pos);
    require(it != imputed.end(), ErrorCode::PositionMismatch, "missing imputed position");
    if (!(it->second.is_categorical() && it->second.token() == truth.token())) ++wrong;
  }
  return n == 0 ? 0.0 : static_cast<double>(wrong) / n;
}

double topk_accuracy(const std::vector<std::vector<int>>& ranked,
                     const std::vector<int>& truths, int k) {
  require(ranked.size() == truths.size(), ErrorCode::DimensionMismatch,
          "predictions/truths size mismatch");
  require(!ranked.empty(), ErrorCode::EmptyInput, "no predictions");
  for (const auto& r : ranked) {
    require(static_cast<int>(r.size()) >= k, ErrorCode::KTooLarge,
            "a prediction list has fewer than k entries");
  }
  int hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    for (int j = 0; j < k; ++j) {
      if (ranked[i][j] == truths[i]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int n_folds,
                                  std::uint64_t seed) {
  require(n_folds >= 2, ErrorCode::FoldTooSmall, "need >= 2 folds");
  require(static_cast<int>(labels.size()) >= n_folds, ErrorCode::FoldTooSmall,
          "fewer samples than folds");
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i]].push_back(static_cast<int>(i));
  }
  std::vector<int> fold_of(labels.size(), 0);
  Rng rng(derive_seed(seed, 0x666f6c64));
  int cursor = 0;
  for (auto& [cls, idx] : by_class) {
    rng.shuffle(idx);
    for (int i : idx) {
      fold_of[i] = cursor % n_folds;
      ++cursor;
    }
  }
  return fold_of;
}

}  // namespace dlm
