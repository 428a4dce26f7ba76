#include "dlm/train.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dlm/baselines.hpp"
#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/parse.hpp"
#include "dlm/rng.hpp"

namespace dlm {

TrainConfig TrainConfig::from(const Config& config) {
  TrainConfig t;
  t.steps = static_cast<int>(config.get_int("train.steps"));
  t.batch = static_cast<int>(config.get_int("train.batch"));
  t.lr = config.get_double("train.lr");
  t.lr_final = config.get_double("train.lr_final");
  t.momentum = config.get_double("train.momentum");
  t.clip = config.get_double("train.clip");
  t.mask_rate = config.get_double("train.mask_rate");
  t.zero_names_prob = config.get_double("train.zero_names_prob");
  t.table_rows_cap = static_cast<int>(config.get_int("train.table_rows_cap"));
  t.jobs = static_cast<int>(config.get_int("run.jobs"));
  t.seed = static_cast<std::uint64_t>(config.get_int("seed"));
  return t;
}

FinetuneConfig FinetuneConfig::from(const Config& config) {
  FinetuneConfig f;
  f.steps = static_cast<int>(config.get_int("finetune.steps"));
  f.lr = config.get_double("finetune.lr");
  f.adapter_lr = config.get_double("finetune.adapter_lr");
  f.momentum = config.get_double("finetune.momentum");
  f.clip = config.get_double("finetune.clip");
  f.train_frac = config.get_double("finetune.train_frac");
  f.zero_names_prob = config.get_double("finetune.zero_names_prob");
  f.anchor_strength = config.get_double("finetune.anchor_strength");
  f.min_rows = static_cast<int>(config.get_int("finetune.min_rows"));
  f.seed = static_cast<std::uint64_t>(config.get_int("seed"));
  return f;
}

CorpusReader::CorpusReader(CorpusManifest manifest, std::string dir)
    : manifest_(std::move(manifest)), dir_(std::move(dir)) {}

RawTable CorpusReader::load(const CorpusEntry& entry) const {
  const auto path = std::filesystem::path(dir_) / entry.path;
  RawTable t = parse_table_file(path.string());
  t.table_id = entry.dataset_id;
  t.provenance = Provenance::synthetic(entry.sector_id);
  return t;
}

// ---------------------------------------------------------------------------

int choose_target_column(const RawTable& table, int n_classes_max) {
  for (int c = table.n_cols - 1; c >= 0; --c) {
    std::set<std::string> tokens;
    bool any_numeric = false;
    for (int r = 0; r < table.n_rows; ++r) {
      const auto& cell = table.at(r, c);
      if (cell.is_categorical()) tokens.insert(cell.token());
      if (cell.is_numeric()) any_numeric = true;
    }
    if (any_numeric || tokens.size() < 2) continue;
    if (static_cast<int>(tokens.size()) <= n_classes_max) return c;
  }
  return -1;
}

RawTable drop_column(const RawTable& table, int col) {
  require(col >= 0 && col < table.n_cols, ErrorCode::DimensionMismatch,
          "drop_column out of range");
  require(table.n_cols >= 2, ErrorCode::DimensionMismatch, "cannot drop the only column");
  RawTable out;
  out.table_id = table.table_id;
  out.provenance = table.provenance;
  out.n_rows = table.n_rows;
  out.n_cols = table.n_cols - 1;
  if (table.column_names) {
    std::vector<std::string> names;
    for (int c = 0; c < table.n_cols; ++c) {
      if (c != col) names.push_back((*table.column_names)[c]);
    }
    out.column_names = std::move(names);
  }
  out.cells.reserve(static_cast<std::size_t>(out.n_rows) * out.n_cols);
  for (int r = 0; r < table.n_rows; ++r) {
    for (int c = 0; c < table.n_cols; ++c) {
      if (c != col) out.cells.push_back(table.at(r, c));
    }
  }
  return out;
}

TrainItem make_train_item(const RawTable& table_in, int sector_id,
                          const EncoderConfig& encoder, int n_classes_max, double mask_rate,
                          bool zero_names, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x6974656d));

  // Cap very tall tables with a deterministic row subsample.
  RawTable table = table_in;
  // (Synthetic corpus tables are already within the cap; external tables may
  // not be.)
  const int rows_cap = 256;
  if (table.n_rows > rows_cap) {
    std::vector<int> keep = rng.permutation(table.n_rows);
    keep.resize(rows_cap);
    std::sort(keep.begin(), keep.end());
    RawTable sub = table;
    sub.n_rows = rows_cap;
    sub.cells.clear();
    for (int r : keep) {
      for (int c = 0; c < table.n_cols; ++c) sub.cells.push_back(table.at(r, c));
    }
    table = std::move(sub);
  }

  // Episode target + split.
  const int target = choose_target_column(table, n_classes_max);
  std::optional<Episode> episode;
  RawTable degraded = table;
  if (target >= 0) {
    const auto classes = target_classes(table, target);
    const auto labels = target_labels(table, target, classes);
    std::vector<int> labeled;
    for (int r = 0; r < table.n_rows; ++r) {
      if (labels[r] >= 0) labeled.push_back(r);
    }
    if (labeled.size() >= 8) {
      rng.shuffle(labeled);
      const auto n_train = std::max<std::size_t>(1, labeled.size() * 6 / 10);
      Episode ep;
      ep.n_classes = static_cast<int>(classes.size());
      for (std::size_t i = 0; i < labeled.size(); ++i) {
        if (i < n_train) {
          ep.train_rows.push_back(labeled[i]);
          ep.train_labels.push_back(labels[labeled[i]]);
        } else {
          ep.query_rows.push_back(labeled[i]);
          ep.query_labels.push_back(labels[labeled[i]]);
        }
      }
      if (!ep.query_rows.empty()) {
        // Hide query labels from the grid.
        for (int r : ep.query_rows) degraded.at(r, target) = CellValue::missing();
        episode = std::move(ep);
      }
    }
  }

  // Self-masked reconstruction targets outside the target column.
  struct MaskedCell {
    int row, col;
    CellValue value;
  };
  std::vector<MaskedCell> masked;
  for (int r = 0; r < table.n_rows; ++r) {
    for (int c = 0; c < table.n_cols; ++c) {
      if (c == target) continue;
      if (degraded.at(r, c).is_missing()) continue;
      if (rng.bernoulli(mask_rate)) {
        masked.push_back({r, c, degraded.at(r, c)});
        degraded.at(r, c) = CellValue::missing();
      }
    }
  }

  TrainItem item;
  item.sector_id = sector_id;
  item.episode = std::move(episode);
  item.input = make_input(degraded, encoder);
  if (zero_names) item.input.bundle = zero_semantics(std::move(item.input.bundle));

  for (const auto& m : masked) {
    if (m.value.is_numeric()) {
      item.recon.rows.push_back(m.row);
      item.recon.cols.push_back(m.col);
      item.recon.kind.push_back(1);
      item.recon.numeric_scaled.push_back(
          (m.value.number() - item.input.bundle.col_center[m.col]) /
          item.input.bundle.col_scale[m.col]);
      item.recon.token_index.push_back(-1);
    } else {
      const auto& vocab = item.input.vocabs[m.col].tokens;
      const auto it = std::lower_bound(vocab.begin(), vocab.end(), m.value.token());
      if (it == vocab.end() || *it != m.value.token()) continue;  // token vanished
      item.recon.rows.push_back(m.row);
      item.recon.cols.push_back(m.col);
      item.recon.kind.push_back(2);
      item.recon.numeric_scaled.push_back(0.0);
      item.recon.token_index.push_back(static_cast<int>(it - vocab.begin()));
    }
  }
  return item;
}

// ---------------------------------------------------------------------------
// Momentum SGD with global-norm clipping over a named parameter subset.

namespace {

struct SgdState {
  std::map<std::string, Eigen::MatrixXf> velocity;

  void step(ParamSet<float>& params, const std::map<std::string, Eigen::MatrixXf>& grads,
            double lr, double momentum, double clip,
            const std::function<double(const std::string&)>& lr_of = nullptr) {
    double norm_sq = 0.0;
    for (const auto& [name, g] : grads) norm_sq += static_cast<double>(g.squaredNorm());
    const double norm = std::sqrt(norm_sq);
    const float scale = (clip > 0.0 && norm > clip) ? static_cast<float>(clip / norm) : 1.0f;

    for (auto& [name, mat] : params.items) {
      auto it = grads.find(name);
      if (it == grads.end()) continue;
      auto& v = velocity[name];
      if (v.size() == 0) v = Eigen::MatrixXf::Zero(mat->rows(), mat->cols());
      v = static_cast<float>(momentum) * v + scale * it->second;
      const double rate = lr_of ? lr_of(name) : lr;
      *mat -= static_cast<float>(rate) * v;
    }
  }
};


}  // namespace

Model<float> pretrain(const CorpusReader& corpus, const LossWeights& weights,
                      const ModelDims& dims, const EncoderConfig& encoder,
                      const TrainConfig& config, PretrainStats* stats) {
  weights.validate();
  const auto& entries = corpus.manifest().entries;
  require(!entries.empty(), ErrorCode::CorpusExhausted, "corpus manifest is empty");

  Model<float> model = init_model<float>(dims, encoder, config.seed);
  ParamSet<float> params = model.params.param_set();
  SgdState sgd;
  JointLossWeights jw{weights.w_sector, weights.w_class, weights.w_recon};

  PretrainStats local;
  double ema = 0.0;
  bool ema_init = false;

  for (int step = 0; step < config.steps; ++step) {
    Rng rng(derive_seed(config.seed, 0x73746570, static_cast<std::uint64_t>(step)));
    const bool zero_names = rng.bernoulli(config.zero_names_prob);
    std::vector<TrainItem> batch;
    batch.reserve(config.batch);
    for (int b = 0; b < config.batch; ++b) {
      const auto& entry = entries[rng.below(entries.size())];
      RawTable table = corpus.load(entry);
      batch.push_back(make_train_item(
          table, entry.sector_id, encoder, dims.n_classes_max, config.mask_rate, zero_names,
          derive_seed(config.seed, 0x7461626c, static_cast<std::uint64_t>(step),
                      static_cast<std::uint64_t>(b))));
    }

    std::map<std::string, Eigen::MatrixXf> grads;
    double loss;
    try {
      loss = batch_loss_and_grads<float>(model, nullptr, nullptr, batch, jw, &grads, nullptr);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteLoss) {
        throw_error(ErrorCode::NonFiniteLoss,
                    "pretrain aborted at step " + std::to_string(step) + ": " + e.what(),
                    step);
      }
      throw;
    }
    const double frac = config.steps > 1 ? static_cast<double>(step) / (config.steps - 1) : 0.0;
    const double lr_t = config.lr + (config.lr_final - config.lr) * frac;
    sgd.step(params, grads, lr_t, config.momentum, config.clip);

    if (!ema_init) {
      ema = loss;
      ema_init = true;
      local.loss_step0 = loss;
    } else {
      ema = 0.98 * ema + 0.02 * loss;
    }
    local.loss_history.push_back(loss);
    if (step == config.steps / 2) local.ema_mid = ema;
  }
  local.ema_final = ema;
  if (stats) *stats = local;
  return model;
}

// ---------------------------------------------------------------------------

namespace {

struct EpisodeSplit {
  std::vector<int> context_rows;
  std::vector<int> query_rows;
};

std::vector<int> labeled_rows_of(const std::vector<int>& labels) {
  std::vector<int> out;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= 0) out.push_back(static_cast<int>(r));
  }
  return out;
}

// Stratified context/query split so every class appears in the context.
EpisodeSplit split_rows(const std::vector<int>& rows, const std::vector<int>& labels,
                        double train_frac, Rng& rng) {
  std::map<int, std::vector<int>> by_class;
  for (int r : rows) by_class[labels[r]].push_back(r);
  EpisodeSplit split;
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    const auto n_ctx = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                    members.size() * train_frac));
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < n_ctx) split.context_rows.push_back(members[i]);
      else split.query_rows.push_back(members[i]);
    }
  }
  std::sort(split.context_rows.begin(), split.context_rows.end());
  std::sort(split.query_rows.begin(), split.query_rows.end());
  return split;
}

void validate_task(const RawTable& table, int target_col, int min_rows, int n_classes_max) {
  require(target_col >= 0 && target_col < table.n_cols, ErrorCode::DimensionMismatch,
          "target column out of range");
  int n_labeled = 0;
  bool any_numeric = false;
  std::set<std::string> tokens;
  for (int r = 0; r < table.n_rows; ++r) {
    const auto& cell = table.at(r, target_col);
    if (cell.is_numeric()) any_numeric = true;
    if (cell.is_categorical()) {
      tokens.insert(cell.token());
      ++n_labeled;
    }
  }
  require(!any_numeric && !tokens.empty(), ErrorCode::TargetNotCategorical,
          "target column must be categorical");
  require(tokens.size() >= 2 && tokens.size() <= static_cast<std::size_t>(
                                                     std::min(10, n_classes_max)),
          ErrorCode::TargetNotCategorical, "target class count out of [2,10]");
  require(n_labeled >= min_rows, ErrorCode::TooFewRows,
          "need >= " + std::to_string(min_rows) + " labeled rows");
}

struct AnchorEntry {
  std::map<std::string, Eigen::MatrixXf> reference;
  std::map<std::string, Eigen::MatrixXf> importance;  // mean-normalized
};

// Adapter + head training shared by single-task and sequential fine-tuning.
// Anchors, when present, add lambda * F (theta - theta*) to the gradients.
struct FinetuneEngine {
  const Model<float>& base;
  AdapterParams<float>& adapters;
  ClassHeadParams<float>& head;
  const FinetuneConfig& config;
  const std::vector<AnchorEntry>* anchors = nullptr;
  double anchor_strength = 0.0;
  std::map<std::string, Eigen::MatrixXf>* grad_sq_accum = nullptr;

  void run(const RawTable& features, const std::vector<int>& labels,
           const std::vector<int>& labeled, int n_classes, std::uint64_t seed) {
    ParamSet<float> trainable;
    adapters.collect("adapter", trainable);
    head.collect("task_head", trainable);
    SgdState sgd;
    const std::vector<std::string> prefixes = {"adapter.", "task_head."};
    JointLossWeights jw{0.0, 1.0, 0.0};
    const auto t0 = std::chrono::steady_clock::now();

    for (int step = 0; step < config.steps; ++step) {
      Rng rng(derive_seed(seed, 0x66747374, static_cast<std::uint64_t>(step)));
      EpisodeSplit split = split_rows(labeled, labels, config.train_frac, rng);
      if (split.query_rows.empty()) continue;

      Episode ep;
      ep.n_classes = n_classes;
      ep.train_rows = split.context_rows;
      ep.query_rows = split.query_rows;
      for (int r : split.context_rows) ep.train_labels.push_back(labels[r]);
      for (int r : split.query_rows) ep.query_labels.push_back(labels[r]);

      TrainItem item;
      item.sector_id = -1;
      item.episode = std::move(ep);
      item.input = make_input(features, base.encoder);
      if (rng.bernoulli(config.zero_names_prob)) {
        item.input.bundle = zero_semantics(std::move(item.input.bundle));
      }

      std::map<std::string, Eigen::MatrixXf> grads;
      batch_loss_and_grads<float>(base, &adapters, &head, {item}, jw, &grads, &prefixes);

      if (anchors && anchor_strength > 0.0) {
        for (auto& [name, mat] : trainable.items) {
          for (const auto& anchor : *anchors) {
            auto ref = anchor.reference.find(name);
            auto imp = anchor.importance.find(name);
            if (ref == anchor.reference.end() || imp == anchor.importance.end()) continue;
            auto& g = grads[name];
            if (g.size() == 0) g = Eigen::MatrixXf::Zero(mat->rows(), mat->cols());
            g += static_cast<float>(anchor_strength) *
                 imp->second.cwiseProduct(*mat - ref->second);
          }
        }
      }
      if (grad_sq_accum) {
        for (const auto& [name, g] : grads) {
          auto& acc = (*grad_sq_accum)[name];
          if (acc.size() == 0) acc = Eigen::MatrixXf::Zero(g.rows(), g.cols());
          acc += g.cwiseProduct(g);
        }
      }
      sgd.step(trainable, grads, config.lr, config.momentum, config.clip,
               [&](const std::string& name) {
                 return name.rfind("adapter.", 0) == 0 ? config.adapter_lr : config.lr;
               });

      if (config.budget_s > 0.0) {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (elapsed > config.budget_s) break;
      }
    }
  }
};

}  // namespace

Eigen::MatrixXd predict_proba(const Model<float>& base, const AdapterParams<float>* adapters,
                              const ClassHeadParams<float>* head, const RawTable& table,
                              int target_col, const std::vector<int>& context_rows,
                              const std::vector<int>& query_rows, bool zero_names) {
  const auto classes = target_classes(table, target_col);
  const auto labels = target_labels(table, target_col, classes);
  RawTable features = drop_column(table, target_col);

  Episode ep;
  ep.n_classes = static_cast<int>(classes.size());
  for (int r : context_rows) {
    require(labels[r] >= 0, ErrorCode::InvalidLabel, "context row lacks a label");
    ep.train_rows.push_back(r);
    ep.train_labels.push_back(labels[r]);
  }
  ep.query_rows = query_rows;

  ModelInput input = make_input(features, base.encoder);
  if (zero_names) input.bundle = zero_semantics(std::move(input.bundle));
  JointOutput out = forward(base, input, ep, adapters,
                            const_cast<ClassHeadParams<float>*>(head));
  return out.class_probs;
}

Eigen::VectorXf dataset_prototype(const Model<float>& base, const AdapterParams<float>* adapters,
                                  const RawTable& table) {
  ModelInput input = make_input(table, base.encoder);
  input.bundle = zero_semantics(std::move(input.bundle));
  Tape<float> tape;
  GraphOutputs<float> out = build_graph<float>(tape, base, adapters, nullptr, input, nullptr,
                                               nullptr, nullptr, nullptr);
  return tape.val(out.pooled).row(0).transpose();
}

TaskCheckpoint finetune(const Model<float>& base, const FinetuneTask& task,
                        const AblationFlags& flags, const FinetuneConfig& config) {
  validate_task(task.table, task.target_col, config.min_rows, base.dims.n_classes_max);
  const std::uint64_t checksum_before = base_checksum(base);

  const auto classes = target_classes(task.table, task.target_col);
  const auto labels = target_labels(task.table, task.target_col, classes);
  const auto labeled = labeled_rows_of(labels);
  RawTable features = drop_column(task.table, task.target_col);

  TaskCheckpoint ckpt;
  ckpt.base_ref = checksum_before;
  ckpt.task_id = task.task_id;
  ckpt.target_col = task.target_col;
  ckpt.n_classes = static_cast<int>(classes.size());
  ckpt.classes = classes;
  ckpt.adapters = init_adapters<float>(base.dims, derive_seed(config.seed, 0x61647074,
                                                              (std::uint64_t)task.task_id));
  ckpt.head = base.params.class_head;

  FinetuneEngine engine{base, ckpt.adapters, ckpt.head, config};
  engine.run(features, labels, labeled, ckpt.n_classes,
             derive_seed(config.seed, 0x7461736b, (std::uint64_t)task.task_id));

  if (flags.memory_on) {
    MemoryEntry entry;
    entry.task_id = task.task_id;
    entry.prototype = dataset_prototype(base, nullptr, features);
    entry.head = ckpt.head;
    entry.n_classes = ckpt.n_classes;
    ckpt.memory.push_back(std::move(entry));
  }

  require(base_checksum(base) == checksum_before, ErrorCode::FrozenBaseViolation,
          "base parameters changed during fine-tune");
  return ckpt;
}

// ---------------------------------------------------------------------------

namespace {

double cosine(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cast<double>().dot(b.cast<double>()) / (na * nb);
}

}  // namespace

RetentionTrace sequential_finetune(const Model<float>& base, CycleDataAccessor& accessor,
                                   int n_tasks, const AblationFlags& flags,
                                   const FinetuneConfig& config) {
  require(n_tasks >= 1, ErrorCode::ConfigError, "need >= 1 task");
  const std::uint64_t checksum_before = base_checksum(base);

  RetentionTrace trace;
  trace.n_tasks = n_tasks;
  trace.flags = flags;
  trace.seed = config.seed;
  trace.acc.assign(n_tasks, std::vector<double>(n_tasks, -1.0));

  // Shared evolving stack.
  AdapterParams<float> adapters = init_adapters<float>(base.dims,
                                                       derive_seed(config.seed, 0x73657161));
  ClassHeadParams<float> head = base.params.class_head;
  std::vector<AnchorEntry> anchors;
  std::vector<MemoryEntry> memory;

  // Fixed per-task evaluation splits and cached task info.
  struct TaskEval {
    RawTable features;
    std::vector<int> labels;
    std::vector<int> context_rows, eval_rows;
    int n_classes = 0;
    std::int64_t task_id = 0;
  };
  std::vector<TaskEval> evals(n_tasks);
  std::set<std::int64_t> seen_ids;

  for (int cycle = 0; cycle < n_tasks; ++cycle) {
    const FinetuneTask& task = accessor.get(cycle, cycle);
    require(seen_ids.insert(task.task_id).second, ErrorCode::ConfigError,
            "tasks must be pairwise distinct");
    validate_task(task.table, task.target_col, config.min_rows, base.dims.n_classes_max);

    const auto classes = target_classes(task.table, task.target_col);
    const auto labels = target_labels(task.table, task.target_col, classes);
    const auto labeled = labeled_rows_of(labels);
    RawTable features = drop_column(task.table, task.target_col);

    // Fixed eval split, independent of cycle dynamics.
    Rng split_rng(derive_seed(config.seed, 0x6576616c, (std::uint64_t)task.task_id));
    EpisodeSplit eval_split = split_rows(labeled, labels, config.train_frac, split_rng);
    TaskEval& ev = evals[cycle];
    ev.features = features;
    ev.labels = labels;
    ev.context_rows = eval_split.context_rows;
    ev.eval_rows = eval_split.query_rows;
    ev.n_classes = static_cast<int>(classes.size());
    ev.task_id = task.task_id;

    // Train this cycle on the training portion only; the runner never asks
    // the accessor for any other task.
    std::map<std::string, Eigen::MatrixXf> grad_sq;
    FinetuneEngine engine{base, adapters, head, config};
    if (flags.retention_on) {
      engine.anchors = &anchors;
      engine.anchor_strength = config.anchor_strength;
      engine.grad_sq_accum = &grad_sq;
    }
    engine.run(ev.features, ev.labels, ev.context_rows, ev.n_classes,
               derive_seed(config.seed, 0x6379636c, (std::uint64_t)cycle));

    if (flags.retention_on) {
      AnchorEntry anchor;
      ParamSet<float> trainable;
      adapters.collect("adapter", trainable);
      head.collect("task_head", trainable);
      double imp_sum = 0.0;
      std::int64_t imp_n = 0;
      for (const auto& [name, g2] : grad_sq) {
        imp_sum += static_cast<double>(g2.sum());
        imp_n += g2.size();
      }
      const float imp_mean = imp_n > 0 ? static_cast<float>(imp_sum / imp_n) : 1.0f;
      for (auto& [name, mat] : trainable.items) {
        anchor.reference[name] = *mat;
        auto it = grad_sq.find(name);
        if (it != grad_sq.end() && imp_mean > 0.0f) {
          anchor.importance[name] = it->second / imp_mean;
        } else {
          anchor.importance[name] = Eigen::MatrixXf::Ones(mat->rows(), mat->cols());
        }
      }
      anchors.push_back(std::move(anchor));
    }
    if (flags.memory_on) {
      MemoryEntry entry;
      entry.task_id = task.task_id;
      entry.prototype = dataset_prototype(base, nullptr, ev.features);
      entry.head = head;
      entry.n_classes = ev.n_classes;
      memory.push_back(std::move(entry));
    }

    // Evaluate every task learned so far with only stored heads/memory.
    for (int t = 0; t <= cycle; ++t) {
      const TaskEval& te = evals[t];
      const ClassHeadParams<float>* eval_head = &head;
      if (flags.memory_on && !memory.empty()) {
        const Eigen::VectorXf proto = dataset_prototype(base, nullptr, te.features);
        std::size_t best = 0;
        double best_score = -2.0;
        for (std::size_t m = 0; m < memory.size(); ++m) {
          const double score = cosine(proto, memory[m].prototype);
          if (score > best_score) {
            best_score = score;
            best = m;
          }
        }
        eval_head = &memory[best].head;
      }
      Episode ep;
      ep.n_classes = te.n_classes;
      ep.train_rows = te.context_rows;
      for (int r : te.context_rows) ep.train_labels.push_back(te.labels[r]);
      ep.query_rows = te.eval_rows;
      ModelInput input = make_input(te.features, base.encoder);
      JointOutput out = forward(base, input, ep, &adapters,
                                const_cast<ClassHeadParams<float>*>(eval_head));
      int correct = 0;
      for (std::size_t i = 0; i < te.eval_rows.size(); ++i) {
        Eigen::Index arg = 0;
        out.class_probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
        if (static_cast<int>(arg) == te.labels[te.eval_rows[i]]) ++correct;
      }
      trace.acc[t][cycle] =
          te.eval_rows.empty() ? 0.0
                               : static_cast<double>(correct) / te.eval_rows.size();
    }

    require(base_checksum(base) == checksum_before, ErrorCode::FrozenBaseViolation,
            "base parameters changed during sequential fine-tune cycle " +
                std::to_string(cycle));
  }
  return trace;
}

double retention(const RetentionTrace& trace, int t) {
  require(t >= 0 && t < trace.n_tasks, ErrorCode::ConfigError, "task index out of range");
  const double first = trace.acc[t][t];
  const double last = trace.acc[t][trace.n_tasks - 1];
  require(first > 0.0, ErrorCode::ZeroInitialAccuracy,
          "task " + std::to_string(t) + " had zero initial accuracy");
  return last / first;
}

double mean_retention(const RetentionTrace& trace) {
  double sum = 0.0;
  for (int t = 0; t < trace.n_tasks; ++t) sum += retention(trace, t);
  return sum / trace.n_tasks;
}

void save_trace_csv(const RetentionTrace& trace, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot write " + path);
  f << "task_id,cycle,accuracy,flags,seed\n";
  const std::string flag_str = std::string(trace.flags.retention_on ? "retention" : "-") +
                               "+" + (trace.flags.memory_on ? "memory" : "-");
  for (int t = 0; t < trace.n_tasks; ++t) {
    for (int k = t; k < trace.n_tasks; ++k) {
      f << t << ',' << k << ',' << format_double(trace.acc[t][k]) << ',' << flag_str << ','
        << trace.seed << '\n';
    }
  }
  require(f.good(), ErrorCode::IoFailure, "write failed: " + path);
}

// ---------------------------------------------------------------------------

CheckpointData task_checkpoint_to_data(const TaskCheckpoint& ckpt) {
  CheckpointData data;
  data.meta["kind"] = 2;  // task checkpoint
  data.meta["base_ref"] = static_cast<std::int64_t>(ckpt.base_ref);
  data.meta["task_id"] = ckpt.task_id;
  data.meta["target_col"] = ckpt.target_col;
  data.meta["n_classes"] = ckpt.n_classes;
  data.meta["n_memory"] = static_cast<std::int64_t>(ckpt.memory.size());
  for (std::size_t i = 0; i < ckpt.adapters.blocks.size(); ++i) {
    const std::string p = "adapter." + std::to_string(i) + ".";
    data.sections.emplace_back(p + "down", ckpt.adapters.blocks[i].down);
    data.sections.emplace_back(p + "up", ckpt.adapters.blocks[i].up);
  }
  data.sections.emplace_back("task_head.Wq", ckpt.head.Wq);
  data.sections.emplace_back("task_head.Wk", ckpt.head.Wk);
  data.sections.emplace_back("task_head.E_lab", ckpt.head.E_lab);
  data.sections.emplace_back("task_head.temp", ckpt.head.temp);
  data.sections.emplace_back("task_head.W_out", ckpt.head.W_out);
  data.sections.emplace_back("task_head.amp", ckpt.head.amp);
  for (std::size_t m = 0; m < ckpt.memory.size(); ++m) {
    const std::string p = "memory." + std::to_string(m) + ".";
    data.meta[p + "task_id"] = ckpt.memory[m].task_id;
    data.meta[p + "n_classes"] = ckpt.memory[m].n_classes;
    data.sections.emplace_back(p + "prototype", ckpt.memory[m].prototype.transpose());
    data.sections.emplace_back(p + "head.Wq", ckpt.memory[m].head.Wq);
    data.sections.emplace_back(p + "head.Wk", ckpt.memory[m].head.Wk);
    data.sections.emplace_back(p + "head.E_lab", ckpt.memory[m].head.E_lab);
    data.sections.emplace_back(p + "head.temp", ckpt.memory[m].head.temp);
    data.sections.emplace_back(p + "head.W_out", ckpt.memory[m].head.W_out);
    data.sections.emplace_back(p + "head.amp", ckpt.memory[m].head.amp);
  }
  return data;
}

TaskCheckpoint task_checkpoint_from_data(const CheckpointData& data, const ModelDims& dims) {
  auto meta = [&](const std::string& key) {
    auto it = data.meta.find(key);
    require(it != data.meta.end(), ErrorCode::BadCheckpoint, "missing meta " + key);
    return it->second;
  };
  std::map<std::string, const Eigen::MatrixXf*> by_name;
  for (const auto& [name, m] : data.sections) by_name[name] = &m;
  auto section = [&](const std::string& name) -> const Eigen::MatrixXf& {
    auto it = by_name.find(name);
    require(it != by_name.end(), ErrorCode::BadCheckpoint, "missing section " + name);
    return *it->second;
  };

  TaskCheckpoint ckpt;
  ckpt.base_ref = static_cast<std::uint64_t>(meta("base_ref"));
  ckpt.task_id = meta("task_id");
  ckpt.target_col = static_cast<int>(meta("target_col"));
  ckpt.n_classes = static_cast<int>(meta("n_classes"));
  ckpt.adapters.blocks.resize(dims.n_layers);
  for (int i = 0; i < dims.n_layers; ++i) {
    const std::string p = "adapter." + std::to_string(i) + ".";
    ckpt.adapters.blocks[i].down = section(p + "down");
    ckpt.adapters.blocks[i].up = section(p + "up");
  }
  ckpt.head.Wq = section("task_head.Wq");
  ckpt.head.Wk = section("task_head.Wk");
  ckpt.head.E_lab = section("task_head.E_lab");
  ckpt.head.temp = section("task_head.temp");
  ckpt.head.W_out = section("task_head.W_out");
  ckpt.head.amp = section("task_head.amp");
  const auto n_memory = meta("n_memory");
  for (std::int64_t m = 0; m < n_memory; ++m) {
    const std::string p = "memory." + std::to_string(m) + ".";
    MemoryEntry entry;
    entry.task_id = meta(p + "task_id");
    entry.n_classes = static_cast<int>(meta(p + "n_classes"));
    entry.prototype = section(p + "prototype").transpose();
    entry.head.Wq = section(p + "head.Wq");
    entry.head.Wk = section(p + "head.Wk");
    entry.head.E_lab = section(p + "head.E_lab");
    entry.head.temp = section(p + "head.temp");
    entry.head.W_out = section(p + "head.W_out");
    entry.head.amp = section(p + "head.amp");
    ckpt.memory.push_back(std::move(entry));
  }
  return ckpt;
}

}  // namespace dlm
