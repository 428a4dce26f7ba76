#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dlm/checkpoint.hpp"
#include "dlm/config.hpp"
#include "dlm/model.hpp"
#include "dlm/synthgen.hpp"

namespace dlm {

struct LossWeights {
  double w_sector = 1.0;
  double w_class = 1.0;
  double w_recon = 1.0;

  void validate() const {
    require(w_sector >= 0 && w_class >= 0 && w_recon >= 0, ErrorCode::ConfigError,
            "loss weights must be nonnegative");
    require(w_sector > 0 || w_class > 0 || w_recon > 0, ErrorCode::ConfigError,
            "at least one loss weight must be positive");
  }
};

struct AblationFlags {
  bool retention_on = true;
  bool memory_on = true;
};

struct TrainConfig {
  int steps = 1500;
  int batch = 8;
  double lr = 0.05;
  double lr_final = 0.005;
  double momentum = 0.9;
  double clip = 1.0;
  double mask_rate = 0.15;
  double zero_names_prob = 0.5;
  int table_rows_cap = 64;
  int jobs = 1;
  std::uint64_t seed = 42;

  static TrainConfig from(const Config& config);
};

struct FinetuneConfig {
  int steps = 250;
  double lr = 0.05;
  double adapter_lr = 0.01;
  double momentum = 0.9;
  double clip = 1.0;
  double train_frac = 0.7;
  double zero_names_prob = 0.5;
  double anchor_strength = 40.0;
  int min_rows = 20;
  double budget_s = 0.0;  // 0 disables the wall-clock cutoff
  std::uint64_t seed = 42;

  static FinetuneConfig from(const Config& config);
};

// ---------------------------------------------------------------------------
// Corpus access

class CorpusReader {
 public:
  CorpusReader(CorpusManifest manifest, std::string dir);
  const CorpusManifest& manifest() const { return manifest_; }
  RawTable load(const CorpusEntry& entry) const;

 private:
  CorpusManifest manifest_;
  std::string dir_;
};

// ---------------------------------------------------------------------------
// Pretraining

struct PretrainStats {
  double loss_step0 = 0.0;
  double ema_mid = 0.0;
  double ema_final = 0.0;
  std::vector<double> loss_history;
};

// Deterministic rule for picking an episode target: the last categorical
// column with 2..n_classes_max distinct observed tokens, or -1.
int choose_target_column(const RawTable& table, int n_classes_max);

// Table with one column removed; names follow.
RawTable drop_column(const RawTable& table, int col);

// Self-supervised training item: masks a fraction of observed cells as
// reconstruction targets, hides query-row labels, optionally zeroes names.
TrainItem make_train_item(const RawTable& table, int sector_id, const EncoderConfig& encoder,
                          int n_classes_max, double mask_rate, bool zero_names,
                          std::uint64_t seed);

// Joint multi-task pretraining over the corpus. Loss: w_sector * CE(sector)
// + w_class * CE(episode classes) + w_recon * masked-cell reconstruction,
// with the semantics pathway zeroed on half the batches.
Model<float> pretrain(const CorpusReader& corpus, const LossWeights& weights,
                      const ModelDims& dims, const EncoderConfig& encoder,
                      const TrainConfig& config, PretrainStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Fine-tuning

struct FinetuneTask {
  RawTable table;
  int target_col = -1;
  std::int64_t task_id = 0;
};

struct MemoryEntry {
  std::int64_t task_id = 0;
  Eigen::VectorXf prototype;
  ClassHeadParams<float> head;
  int n_classes = 0;
};

struct TaskCheckpoint {
  std::uint64_t base_ref = 0;
  AdapterParams<float> adapters;
  ClassHeadParams<float> head;
  std::vector<MemoryEntry> memory;
  std::int64_t task_id = 0;
  int target_col = -1;
  int n_classes = 0;
  std::vector<std::string> classes;
};

// Adapter + head training on a labeled table; base parameter bytes are
// verified unchanged via checksum (FrozenBaseViolation otherwise).
TaskCheckpoint finetune(const Model<float>& base, const FinetuneTask& task,
                        const AblationFlags& flags, const FinetuneConfig& config);

// Episode-conditioned probabilities for query rows, using context_rows as
// labeled support. Class order is the sorted token order of the target column.
Eigen::MatrixXd predict_proba(const Model<float>& base, const AdapterParams<float>* adapters,
                              const ClassHeadParams<float>* head, const RawTable& table,
                              int target_col, const std::vector<int>& context_rows,
                              const std::vector<int>& query_rows,
                              bool zero_names = false);

// Pooled dataset representation in agnostic mode; the adaptive-memory key.
Eigen::VectorXf dataset_prototype(const Model<float>& base, const AdapterParams<float>* adapters,
                                  const RawTable& table);

// Task checkpoint <-> container round trip. Class tokens are re-derived from
// the task table at prediction time, so only numeric state is persisted.
CheckpointData task_checkpoint_to_data(const TaskCheckpoint& ckpt);
TaskCheckpoint task_checkpoint_from_data(const CheckpointData& data, const ModelDims& dims);

// ---------------------------------------------------------------------------
// Sequential fine-tuning

// Per-cycle training data access. The sequential runner only ever requests
// task_index == cycle; implementations refuse anything else.
class CycleDataAccessor {
 public:
  virtual ~CycleDataAccessor() = default;
  virtual const FinetuneTask& get(int cycle, int task_index) = 0;
};

class StrictAccessor : public CycleDataAccessor {
 public:
  explicit StrictAccessor(std::vector<FinetuneTask> tasks) : tasks_(std::move(tasks)) {}
  const FinetuneTask& get(int cycle, int task_index) override {
    require(cycle == task_index, ErrorCode::Internal,
            "no-replay contract: cycle requested another task's rows");
    return tasks_.at(static_cast<std::size_t>(task_index));
  }
  const std::vector<FinetuneTask>& tasks() const { return tasks_; }

 private:
  std::vector<FinetuneTask> tasks_;
};

struct RetentionTrace {
  int n_tasks = 0;
  // acc[t][k] = accuracy on task t immediately after cycle k, for k >= t;
  // entries below the diagonal are -1.
  std::vector<std::vector<double>> acc;
  AblationFlags flags;
  std::uint64_t seed = 0;
};

// One evolving shared adapter stack + head across cycles; optional elastic
// anchors (retention component) and per-task prototype memory (adaptive
// memory component). Evaluates every prior task after each cycle.
RetentionTrace sequential_finetune(const Model<float>& base, CycleDataAccessor& accessor,
                                   int n_tasks, const AblationFlags& flags,
                                   const FinetuneConfig& config);

// acc[t][K] / acc[t][t]; ZeroInitialAccuracy when the denominator is 0.
double retention(const RetentionTrace& trace, int t);
double mean_retention(const RetentionTrace& trace);

void save_trace_csv(const RetentionTrace& trace, const std::string& path);

}  // namespace dlm
