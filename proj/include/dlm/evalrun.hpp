#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dlm/baselines.hpp"
#include "dlm/config.hpp"
#include "dlm/metrics.hpp"
#include "dlm/synthgen.hpp"
#include "dlm/train.hpp"

namespace dlm {

struct MetricRow {
  std::string protocol;
  std::string condition;
  std::string model;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;
  bool reference = false;  // paper-scale reference, never an acceptance target
};

struct EvalReport {
  std::string protocol;
  std::vector<MetricRow> rows;
  std::uint64_t config_hash = 0;
  std::string config_echo;
  std::vector<std::uint64_t> seeds;

  // First matching non-reference row value; throws if absent.
  double value_of(const std::string& condition, const std::string& model,
                  const std::string& metric) const;
  std::vector<double> values_of(const std::string& condition, const std::string& model,
                                const std::string& metric) const;
};

// Writes <prefix>_metrics.csv, <prefix>_summary.json and <prefix>_plot.csv
// under out_dir. Regeneration from the same report is byte-identical.
void emit_report(const EvalReport& report, const std::string& out_dir,
                 const std::string& prefix);

// ---------------------------------------------------------------------------
// Protocol-facing classifier interface: fit once, predict possibly many times
// (the missingness protocol predicts on degraded copies of the test rows).

class EvalClassifier {
 public:
  virtual ~EvalClassifier() = default;
  virtual std::string name() const = 0;
  virtual void fit(const RawTable& table, int target_col, const std::vector<int>& train_rows,
                   double budget_s, std::uint64_t seed) = 0;
  virtual Eigen::MatrixXd predict(const RawTable& table, const std::vector<int>& rows) = 0;
};

std::unique_ptr<EvalClassifier> wrap_model(std::unique_ptr<TabularModel> inner);

// Fine-tunes adapters + head on the train rows, predicts episodically.
std::unique_ptr<EvalClassifier> make_dlm_classifier(const Model<float>* base,
                                                    FinetuneConfig config);

class DlmImputer : public Imputer {
 public:
  DlmImputer(const Model<float>* base) : base_(base) {}
  std::string name() const override { return "dlm"; }
  RawTable impute(const RawTable& degraded, std::uint64_t seed) override;

 private:
  const Model<float>* base_;
};

// ---------------------------------------------------------------------------
// Task construction from the synthetic taxonomy. index_base >= 100000 keeps
// these disjoint from any training corpus by id construction.

std::vector<FinetuneTask> make_synthetic_tasks(const SectorTaxonomy& taxonomy, int n_tasks,
                                               int n_rows, std::uint64_t seed,
                                               int index_base = 100000);

// ---------------------------------------------------------------------------
// The six protocols

EvalReport run_cv_benchmark(const std::vector<FinetuneTask>& tasks,
                            const std::vector<EvalClassifier*>& models, int folds,
                            double budget_s, std::uint64_t seed, const Config& config);

EvalReport run_missingness_curve(const std::vector<FinetuneTask>& tasks,
                                 const std::vector<EvalClassifier*>& models,
                                 const std::vector<double>& rates, int folds, double budget_s,
                                 const std::vector<std::uint64_t>& seeds, const Config& config);

EvalReport run_imputation_grid(const std::vector<RawTable>& tables,
                               const std::vector<Imputer*>& imputers,
                               const std::vector<std::uint64_t>& seeds, const Config& config);

EvalReport run_column_agnostic(const std::vector<FinetuneTask>& tasks,
                               const std::vector<EvalClassifier*>& models,
                               double epsilon_bound, double budget_s, std::uint64_t seed,
                               const Config& config);

EvalReport run_sector_blind(const CorpusManifest& heldout, const std::string& heldout_dir,
                            const CorpusManifest& training, const Model<float>& model,
                            const std::vector<int>& k_list, const Config& config);

EvalReport run_retention_suite(const Model<float>& base,
                               const std::vector<FinetuneTask>& tasks,
                               const FinetuneConfig& ft_config,
                               const std::vector<std::uint64_t>& seeds, const Config& config,
                               const std::string& trace_dir = "");

}  // namespace dlm
