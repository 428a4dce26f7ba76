#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dlm/table.hpp"

namespace dlm {

// Class vocabulary of a target column: sorted distinct observed tokens.
std::vector<std::string> target_classes(const RawTable& table, int target_col);
std::vector<int> target_labels(const RawTable& table, int target_col,
                               const std::vector<std::string>& classes);

// Transductive classification protocol shared by the DLM and the baselines:
// the model sees the whole feature table, fits on train_rows' labels and
// returns probabilities for test_rows over the global class list.
class TabularModel {
 public:
  virtual ~TabularModel() = default;
  virtual std::string name() const = 0;
  virtual Eigen::MatrixXd fit_predict(const RawTable& table, int target_col,
                                      const std::vector<int>& train_rows,
                                      const std::vector<int>& test_rows, double budget_s,
                                      std::uint64_t seed) = 0;
};

// Predicts the training class frequencies for every row.
std::unique_ptr<TabularModel> make_majority_model();

// Softmax regression on z-scaled numerics (mean-imputed) plus one-hot
// categoricals, gradient-descent trained. Scaling statistics come from the
// train rows only.
std::unique_ptr<TabularModel> make_logistic_model();

class Imputer {
 public:
  virtual ~Imputer() = default;
  virtual std::string name() const = 0;
  virtual RawTable impute(const RawTable& degraded, std::uint64_t seed) = 0;
};

// Observed column mean for numeric columns, modal token for categorical ones.
std::unique_ptr<Imputer> make_column_mean_imputer();

// k-nearest rows by Euclidean distance over mutually observed cells
// (z-scaled numerics, 0/1 mismatch for categoricals); imputes the neighbour
// mean or mode.
std::unique_ptr<Imputer> make_knn_imputer(int k = 5);

}  // namespace dlm
