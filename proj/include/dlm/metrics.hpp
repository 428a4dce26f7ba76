#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dlm/inject.hpp"

namespace dlm {

// Binary AUC by midrank; ties contribute 0.5. is_pos entries are 0/1.
double binary_auc(const std::vector<double>& scores, const std::vector<int>& is_pos);

// One-vs-one multiclass ROC-AUC: mean over unordered class pairs of the
// two-class AUC restricted to samples of those classes, scored by each
// class's own probability column and averaged over both directions.
double roc_auc_ovo(const std::vector<int>& labels, const Eigen::MatrixXd& probs);

// Per-column RMSE over masked numeric cells divided by the column's observed
// range (divisor 1 if the range is 0), averaged over affected columns.
// col_range[c] is the observed max-min of column c in the degraded table.
double nrmse(const PositionMap& ground_truth, const PositionMap& imputed,
             const std::vector<double>& col_range);

// Per-column observed max-min over numeric cells (0 where undefined).
std::vector<double> observed_column_ranges(const RawTable& degraded);

// Fraction of categorical ground-truth positions imputed with a different
// token. Returns 0 when no categorical positions exist.
double categorical_error_rate(const PositionMap& ground_truth, const PositionMap& imputed);

// Fraction of cases whose truth appears within the first k ranked entries.
double topk_accuracy(const std::vector<std::vector<int>>& ranked,
                     const std::vector<int>& truths, int k);

// Stratified fold assignment: per-class round-robin after a seeded shuffle,
// so per-fold class counts differ from proportionality by at most one sample.
std::vector<int> stratified_folds(const std::vector<int>& labels, int n_folds,
                                  std::uint64_t seed);

}  // namespace dlm
