#include "dlm/evalrun.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/rng.hpp"

namespace fs = std::filesystem;

namespace dlm {

double EvalReport::value_of(const std::string& condition, const std::string& model,
                            const std::string& metric) const {
  for (const auto& row : rows) {
    if (!row.reference && row.condition == condition && row.model == model &&
        row.metric == metric) {
      return row.value;
    }
  }
  throw_error(ErrorCode::Internal,
              "report row not found: " + condition + "/" + model + "/" + metric);
}

std::vector<double> EvalReport::values_of(const std::string& condition,
                                          const std::string& model,
                                          const std::string& metric) const {
  std::vector<double> out;
  for (const auto& row : rows) {
    if (!row.reference && row.condition == condition && row.model == model &&
        row.metric == metric) {
      out.push_back(row.value);
    }
  }
  return out;
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void sort_rows(std::vector<MetricRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const MetricRow& a, const MetricRow& b) {
    return std::tie(a.protocol, a.condition, a.model, a.metric, a.seed, a.reference) <
           std::tie(b.protocol, b.condition, b.model, b.metric, b.seed, b.reference);
  });
}

char hex_digit(int v) { return v < 10 ? static_cast<char>('0' + v) : static_cast<char>('a' + v - 10); }

std::string hex64(std::uint64_t v) {
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hex_digit(static_cast<int>(v & 0xf));
    v >>= 4;
  }
  return out;
}

}  // namespace

void emit_report(const EvalReport& report_in, const std::string& out_dir,
                 const std::string& prefix) {
  EvalReport report = report_in;
  sort_rows(report.rows);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCode::IoFailure, "cannot create " + out_dir);

  {
    std::ofstream f(fs::path(out_dir) / (prefix + "_metrics.csv"),
                    std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorCode::IoFailure, "cannot write metrics csv");
    f << "protocol,condition,model,metric,value,seed,config_hash,reference\n";
    for (const auto& r : report.rows) {
      f << csv_quote(r.protocol) << ',' << csv_quote(r.condition) << ',' << csv_quote(r.model)
        << ',' << csv_quote(r.metric) << ',' << format_double(r.value) << ',' << r.seed << ','
        << hex64(report.config_hash) << ',' << (r.reference ? 1 : 0) << '\n';
    }
    require(f.good(), ErrorCode::IoFailure, "metrics csv write failed");
  }
  {
    std::ofstream f(fs::path(out_dir) / (prefix + "_plot.csv"),
                    std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorCode::IoFailure, "cannot write plot csv");
    f << "protocol,condition,model,metric,value,seed\n";
    for (const auto& r : report.rows) {
      f << csv_quote(r.protocol) << ',' << csv_quote(r.condition) << ',' << csv_quote(r.model)
        << ',' << csv_quote(r.metric) << ',' << format_double(r.value) << ',' << r.seed << '\n';
    }
    require(f.good(), ErrorCode::IoFailure, "plot csv write failed");
  }
  {
    nlohmann::ordered_json root;
    root["protocol"] = report.protocol;
    root["config_hash"] = hex64(report.config_hash);
    root["seeds"] = report.seeds;
    root["n_rows"] = report.rows.size();
    root["config"] = report.config_echo;
    std::ofstream f(fs::path(out_dir) / (prefix + "_summary.json"),
                    std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorCode::IoFailure, "cannot write summary json");
    f << root.dump(2) << '\n';
    require(f.good(), ErrorCode::IoFailure, "summary json write failed");
  }
}

// ---------------------------------------------------------------------------

namespace {

class WrappedModel : public EvalClassifier {
 public:
  explicit WrappedModel(std::unique_ptr<TabularModel> inner) : inner_(std::move(inner)) {}
  std::string name() const override { return inner_->name(); }

  void fit(const RawTable& table, int target_col, const std::vector<int>& train_rows,
           double budget_s, std::uint64_t seed) override {
    table_ = table;
    target_col_ = target_col;
    train_rows_ = train_rows;
    budget_s_ = budget_s;
    seed_ = seed;
  }

  Eigen::MatrixXd predict(const RawTable& table, const std::vector<int>& rows) override {
    // Stateless baselines refit cheaply on each call; train rows always come
    // from the fit-time table so degraded test cells never affect fitting.
    RawTable merged = table;
    for (int r : train_rows_) {
      for (int c = 0; c < merged.n_cols; ++c) merged.at(r, c) = table_.at(r, c);
    }
    return inner_->fit_predict(merged, target_col_, train_rows_, rows, budget_s_, seed_);
  }

 private:
  std::unique_ptr<TabularModel> inner_;
  RawTable table_;
  int target_col_ = -1;
  std::vector<int> train_rows_;
  double budget_s_ = 0.0;
  std::uint64_t seed_ = 0;
};

class DlmClassifier : public EvalClassifier {
 public:
  DlmClassifier(const Model<float>* base, FinetuneConfig config)
      : base_(base), config_(config) {}

  std::string name() const override { return "dlm"; }

  void fit(const RawTable& table, int target_col, const std::vector<int>& train_rows,
           double budget_s, std::uint64_t seed) override {
    target_col_ = target_col;
    train_rows_ = train_rows;
    fit_table_ = table;

    // Fine-tune on the training rows only; the task table passed to finetune
    // is restricted so held-out labels never reach the optimizer.
    RawTable train_only = table;
    train_only.n_rows = static_cast<int>(train_rows.size());
    train_only.cells.clear();
    for (int r : train_rows) {
      for (int c = 0; c < table.n_cols; ++c) train_only.cells.push_back(table.at(r, c));
    }
    FinetuneTask task;
    task.table = std::move(train_only);
    task.target_col = target_col;
    task.task_id = static_cast<std::int64_t>(seed);
    FinetuneConfig cfg = config_;
    cfg.seed = seed;
    cfg.budget_s = budget_s;
    ckpt_ = finetune(*base_, task, AblationFlags{true, true}, cfg);
  }

  Eigen::MatrixXd predict(const RawTable& table, const std::vector<int>& rows) override {
    // Query the fitted episode on the provided table (test cells may be
    // degraded); context rows are restored from the fit-time table.
    RawTable merged = table;
    for (int r : train_rows_) {
      for (int c = 0; c < merged.n_cols; ++c) merged.at(r, c) = fit_table_.at(r, c);
    }
    return predict_proba(*base_, &ckpt_.adapters, &ckpt_.head, merged, target_col_,
                         train_rows_, rows);
  }

 private:
  const Model<float>* base_;
  FinetuneConfig config_;
  RawTable fit_table_;
  int target_col_ = -1;
  std::vector<int> train_rows_;
  TaskCheckpoint ckpt_;
};

}  // namespace

std::unique_ptr<EvalClassifier> wrap_model(std::unique_ptr<TabularModel> inner) {
  return std::make_unique<WrappedModel>(std::move(inner));
}

std::unique_ptr<EvalClassifier> make_dlm_classifier(const Model<float>* base,
                                                    FinetuneConfig config) {
  return std::make_unique<DlmClassifier>(base, config);
}

RawTable DlmImputer::impute(const RawTable& degraded, std::uint64_t) {
  return reconstruct_missing(degraded, *base_);
}

// ---------------------------------------------------------------------------

std::vector<FinetuneTask> make_synthetic_tasks(const SectorTaxonomy& taxonomy, int n_tasks,
                                               int n_rows, std::uint64_t seed,
                                               int index_base) {
  const int n_sectors = static_cast<int>(taxonomy.sectors.size());
  std::vector<FinetuneTask> tasks;
  tasks.reserve(n_tasks);
  for (int i = 0; i < n_tasks; ++i) {
    const int sector = (i * n_sectors) / std::max(1, n_tasks) % n_sectors;
    const std::uint64_t ds_seed =
        derive_seed(seed, 0x6576746b, static_cast<std::uint64_t>(index_base + i));
    FinetuneTask task;
    task.table = sample_dataset(taxonomy, sector, n_rows, ds_seed);
    task.table.table_id = dataset_id_for(taxonomy.seed, sector, index_base + i);
    task.target_col = taxonomy.sectors[sector].schema.target_col;
    task.task_id = index_base + i;
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// ---------------------------------------------------------------------------

namespace {

struct FoldSplit {
  std::vector<int> train_rows, test_rows;
};

std::vector<FoldSplit> make_folds(const RawTable& table, int target_col, int n_folds,
                                  std::uint64_t seed) {
  const auto classes = target_classes(table, target_col);
  const auto labels = target_labels(table, target_col, classes);
  std::vector<int> labeled;
  std::vector<int> labeled_labels;
  for (int r = 0; r < table.n_rows; ++r) {
    if (labels[r] >= 0) {
      labeled.push_back(r);
      labeled_labels.push_back(labels[r]);
    }
  }
  require(static_cast<int>(labeled.size()) >= n_folds, ErrorCode::FoldTooSmall,
          "fewer labeled rows than folds");
  const auto fold_of = stratified_folds(labeled_labels, n_folds, seed);
  std::vector<FoldSplit> folds(n_folds);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    for (int f = 0; f < n_folds; ++f) {
      if (fold_of[i] == f) folds[f].test_rows.push_back(labeled[i]);
      else folds[f].train_rows.push_back(labeled[i]);
    }
  }
  for (const auto& f : folds) {
    require(!f.test_rows.empty(), ErrorCode::FoldTooSmall, "empty test fold");
  }
  return folds;
}

std::vector<int> labels_for_rows(const RawTable& table, int target_col,
                                 const std::vector<int>& rows) {
  const auto classes = target_classes(table, target_col);
  const auto labels = target_labels(table, target_col, classes);
  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) out.push_back(labels[r]);
  return out;
}

void add_reference(EvalReport& report, const std::string& condition, const std::string& model,
                   const std::string& metric, double value) {
  MetricRow row;
  row.protocol = report.protocol;
  row.condition = condition;
  row.model = model;
  row.metric = metric;
  row.value = value;
  row.seed = 0;
  row.reference = true;
  report.rows.push_back(std::move(row));
}

}  // namespace

EvalReport run_cv_benchmark(const std::vector<FinetuneTask>& tasks,
                            const std::vector<EvalClassifier*>& models, int folds,
                            double budget_s, std::uint64_t seed, const Config& config) {
  EvalReport report;
  report.protocol = "cv";
  report.config_hash = config.hash();
  report.config_echo = config.canonical();
  report.seeds = {seed};

  std::map<std::string, std::vector<double>> task_auc;  // model -> per-task AUC
  for (const auto& task : tasks) {
    const auto fold_splits = make_folds(task.table, task.target_col, folds,
                                        derive_seed(seed, fnv1a64(task.table.table_id)));
    for (auto* model : models) {
      std::vector<double> fold_aucs;
      for (std::size_t f = 0; f < fold_splits.size(); ++f) {
        const auto& split = fold_splits[f];
        model->fit(task.table, task.target_col, split.train_rows, budget_s,
                   derive_seed(seed, fnv1a64(task.table.table_id), f));
        const Eigen::MatrixXd probs = model->predict(task.table, split.test_rows);
        const auto y = labels_for_rows(task.table, task.target_col, split.test_rows);
        fold_aucs.push_back(roc_auc_ovo(y, probs));
      }
      const double mean_auc = mean_of(fold_aucs);
      task_auc[model->name()].push_back(mean_auc);
      report.rows.push_back(
          {report.protocol, task.table.table_id, model->name(), "roc_auc_ovo", mean_auc, seed});
    }
  }
  // Mean and mean-rank across tasks.
  for (auto* model : models) {
    report.rows.push_back({report.protocol, "mean", model->name(), "roc_auc_ovo",
                           mean_of(task_auc[model->name()]), seed});
  }
  std::map<std::string, double> rank_sum;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::vector<std::pair<double, std::string>> scored;
    for (auto* model : models) scored.emplace_back(task_auc[model->name()][t], model->name());
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; r < scored.size(); ++r) {
      rank_sum[scored[r].second] += static_cast<double>(r + 1);
    }
  }
  for (auto* model : models) {
    report.rows.push_back({report.protocol, "mean", model->name(), "mean_rank",
                           rank_sum[model->name()] / std::max<std::size_t>(1, tasks.size()),
                           seed});
  }
  add_reference(report, "paper_cc18", "schema1_140m", "mean_roc_auc", 0.9849);
  add_reference(report, "paper_cc18", "tabpfn_ag", "mean_roc_auc", 0.9339);
  return report;
}

EvalReport run_missingness_curve(const std::vector<FinetuneTask>& tasks,
                                 const std::vector<EvalClassifier*>& models,
                                 const std::vector<double>& rates, int folds, double budget_s,
                                 const std::vector<std::uint64_t>& seeds,
                                 const Config& config) {
  EvalReport report;
  report.protocol = "missingness";
  report.config_hash = config.hash();
  report.config_echo = config.canonical();
  report.seeds = seeds;

  for (std::uint64_t seed : seeds) {
    // model -> rate -> mean AUC over tasks/folds
    std::map<std::string, std::map<double, std::vector<double>>> auc;
    for (const auto& task : tasks) {
      const auto fold_splits = make_folds(task.table, task.target_col, folds,
                                          derive_seed(seed, fnv1a64(task.table.table_id)));
      for (auto* model : models) {
        for (std::size_t f = 0; f < fold_splits.size(); ++f) {
          const auto& split = fold_splits[f];
          // Train once per dataset x model x fold on complete data.
          model->fit(task.table, task.target_col, split.train_rows, budget_s,
                     derive_seed(seed, fnv1a64(task.table.table_id), f));
          const auto y = labels_for_rows(task.table, task.target_col, split.test_rows);
          for (double rate : rates) {
            RawTable degraded = task.table;
            if (rate > 0.0) {
              // Degrade only the test rows' feature cells.
              RawTable test_part = task.table;
              test_part.n_rows = static_cast<int>(split.test_rows.size());
              test_part.cells.clear();
              for (int r : split.test_rows) {
                for (int c = 0; c < task.table.n_cols; ++c) {
                  test_part.cells.push_back(task.table.at(r, c));
                }
              }
              MissingnessSpec spec;
              spec.mechanism = Mechanism::MCAR;
              spec.rate = rate;
              spec.seed = derive_seed(seed, fnv1a64(task.table.table_id), f,
                                      static_cast<std::uint64_t>(rate * 1000));
              // Keep labels intact in the degraded copy.
              InjectResult injected = inject(test_part, spec);
              for (std::size_t i = 0; i < split.test_rows.size(); ++i) {
                for (int c = 0; c < task.table.n_cols; ++c) {
                  if (c == task.target_col) continue;
                  degraded.at(split.test_rows[i], c) =
                      injected.degraded.at(static_cast<int>(i), c);
                }
              }
            }
            const Eigen::MatrixXd probs = model->predict(degraded, split.test_rows);
            auc[model->name()][rate].push_back(roc_auc_ovo(y, probs));
          }
        }
      }
    }
    for (auto* model : models) {
      double auc_first = 0.0, auc_last = 0.0;
      for (double rate : rates) {
        const double mean_auc = mean_of(auc[model->name()][rate]);
        char cond[32];
        std::snprintf(cond, sizeof(cond), "rate_%g", rate);
        report.rows.push_back(
            {report.protocol, cond, model->name(), "roc_auc_ovo", mean_auc, seed});
        if (rate == rates.front()) auc_first = mean_auc;
        if (rate == rates.back()) auc_last = mean_auc;
      }
      report.rows.push_back({report.protocol, "drop", model->name(), "auc_drop",
                             auc_first - auc_last, seed});
    }
  }
  add_reference(report, "paper_drop", "schema1_140m", "auc_drop", 0.0603);
  add_reference(report, "paper_drop", "xgboost_mean_impute", "auc_drop", 0.2820);
  return report;
}

EvalReport run_imputation_grid(const std::vector<RawTable>& tables,
                               const std::vector<Imputer*>& imputers,
                               const std::vector<std::uint64_t>& seeds, const Config& config) {
  EvalReport report;
  report.protocol = "imputation";
  report.config_hash = config.hash();
  report.config_echo = config.canonical();
  report.seeds = seeds;

  const std::vector<Mechanism> mechanisms = {Mechanism::MNAR, Mechanism::MCAR, Mechanism::MAR};
  const std::vector<double> rates = {0.05, 0.10, 0.20};

  for (std::uint64_t seed : seeds) {
    std::map<std::string, std::vector<double>> all_nrmse;  // imputer -> 9 values
    for (Mechanism mech : mechanisms) {
      for (double rate : rates) {
        char cond[32];
        std::snprintf(cond, sizeof(cond), "%s_%d", mechanism_name(mech),
                      static_cast<int>(rate * 100));
        std::map<std::string, std::vector<double>> cond_nrmse, cond_caterr;
        for (std::size_t ti = 0; ti < tables.size(); ++ti) {
          const RawTable& table = tables[ti];
          MissingnessSpec spec;
          spec.mechanism = mech;
          spec.rate = rate;
          spec.seed = derive_seed(seed, 0x696d7075, ti, static_cast<std::uint64_t>(mech));
          if (mech == Mechanism::MAR) {
            int driver = -1;
            for (int c = 0; c < table.n_cols && driver < 0; ++c) {
              for (int r = 0; r < table.n_rows; ++r) {
                if (table.at(r, c).is_numeric()) {
                  driver = c;
                  break;
                }
              }
            }
            require(driver >= 0, ErrorCode::SpecInvalid, "no numeric driver column");
            spec.mar_driver = driver;
          }
          if (mech == Mechanism::MNAR) spec.mnar_threshold_quantile = 0.5;
          InjectResult injected = inject(table, spec);
          const auto ranges = observed_column_ranges(injected.degraded);
          for (auto* imputer : imputers) {
            const RawTable filled = imputer->impute(injected.degraded, seed);
            PositionMap imputed;
            for (const auto& [pos, truth] : injected.ground_truth) {
              imputed[pos] = filled.at(pos.first, pos.second);
            }
            cond_nrmse[imputer->name()].push_back(
                nrmse(injected.ground_truth, imputed, ranges));
            cond_caterr[imputer->name()].push_back(
                categorical_error_rate(injected.ground_truth, imputed));
          }
        }
        for (auto* imputer : imputers) {
          const double v = mean_of(cond_nrmse[imputer->name()]);
          report.rows.push_back({report.protocol, cond, imputer->name(), "nrmse", v, seed});
          report.rows.push_back({report.protocol, cond, imputer->name(), "cat_error_rate",
                                 mean_of(cond_caterr[imputer->name()]), seed});
          all_nrmse[imputer->name()].push_back(v);
        }
      }
    }
    for (auto* imputer : imputers) {
      report.rows.push_back({report.protocol, "mean", imputer->name(), "nrmse",
                             mean_of(all_nrmse[imputer->name()]), seed});
    }
  }
  add_reference(report, "paper_mean", "schema1_140m", "nrmse", 0.163);
  add_reference(report, "paper_mean", "gemini_3_flash", "nrmse", 0.235);
  add_reference(report, "paper_mean", "missforest", "nrmse", 0.302);
  add_reference(report, "paper_mean", "knn", "nrmse", 0.327);
  add_reference(report, "paper_mean", "softimpute", "nrmse", 0.424);
  return report;
}

EvalReport run_column_agnostic(const std::vector<FinetuneTask>& tasks,
                               const std::vector<EvalClassifier*>& models,
                               double epsilon_bound, double budget_s, std::uint64_t seed,
                               const Config& config) {
  EvalReport report;
  report.protocol = "column_agnostic";
  report.config_hash = config.hash();
  report.config_echo = config.canonical();
  report.seeds = {seed};

  const std::vector<std::pair<std::string, NameMode>> conditions = {
      {"full_names", NameMode::Full},
      {"random_strings", NameMode::RandomStrings},
      {"no_names", NameMode::None}};

  std::map<std::string, std::map<std::string, std::vector<double>>> auc;
  for (const auto& task : tasks) {
    // One fixed stratified split per task.
    const auto folds = make_folds(task.table, task.target_col, 3,
                                  derive_seed(seed, fnv1a64(task.table.table_id)));
    const auto& split = folds[0];
    for (const auto& [cond_name, mode] : conditions) {
      const RawTable stripped =
          strip_names(task.table, mode, derive_seed(seed, fnv1a64(task.table.table_id), 7));
      for (auto* model : models) {
        model->fit(stripped, task.target_col, split.train_rows, budget_s,
                   derive_seed(seed, fnv1a64(task.table.table_id), fnv1a64(cond_name)));
        const Eigen::MatrixXd probs = model->predict(stripped, split.test_rows);
        const auto y = labels_for_rows(task.table, task.target_col, split.test_rows);
        auc[model->name()][cond_name].push_back(roc_auc_ovo(y, probs));
      }
    }
  }
  for (auto* model : models) {
    double auc_full = 0.0, auc_none = 0.0;
    for (const auto& [cond_name, mode] : conditions) {
      const double v = mean_of(auc[model->name()][cond_name]);
      report.rows.push_back({report.protocol, cond_name, model->name(), "roc_auc_ovo", v, seed});
      if (cond_name == "full_names") auc_full = v;
      if (cond_name == "no_names") auc_none = v;
    }
    const double epsilon = auc_full - auc_none;
    report.rows.push_back({report.protocol, "epsilon", model->name(), "epsilon", epsilon, seed});
    report.rows.push_back({report.protocol, "epsilon", model->name(), "epsilon_within_bound",
                           epsilon <= epsilon_bound ? 1.0 : 0.0, seed});
  }
  add_reference(report, "paper_epsilon", "schema1_140m", "epsilon", 0.0117);
  return report;
}

EvalReport run_sector_blind(const CorpusManifest& heldout, const std::string& heldout_dir,
                            const CorpusManifest& training, const Model<float>& model,
                            const std::vector<int>& k_list, const Config& config) {
  EvalReport report;
  report.protocol = "sector_blind";
  report.config_hash = config.hash();
  report.config_echo = config.canonical();
  report.seeds = {static_cast<std::uint64_t>(config.get_int("seed"))};

  std::set<std::string> training_ids;
  for (const auto& e : training.entries) training_ids.insert(e.dataset_id);
  for (const auto& e : heldout.entries) {
    require(training_ids.count(e.dataset_id) == 0, ErrorCode::Internal,
            "held-out id found in training manifest: " + e.dataset_id);
  }

  CorpusReader reader(heldout, heldout_dir);
  std::vector<int> ks;
  for (int k : k_list) {
    if (k <= model.dims.n_sectors) ks.push_back(k);
  }
  int max_k = 1;
  for (int k : ks) max_k = std::max(max_k, k);

  std::vector<std::vector<int>> ranked;
  std::vector<int> truths;
  for (const auto& entry : heldout.entries) {
    RawTable table = reader.load(entry);
    const auto top = identify_sector(table, model, max_k);
    std::vector<int> ids;
    ids.reserve(top.size());
    for (const auto& [sector, prob] : top) ids.push_back(sector);
    ranked.push_back(std::move(ids));
    truths.push_back(entry.sector_id);
  }
  const auto seed = report.seeds[0];
  for (int k : ks) {
    report.rows.push_back({report.protocol, "heldout", "dlm", "top" + std::to_string(k),
                           topk_accuracy(ranked, truths, k), seed});
  }
  report.rows.push_back({report.protocol, "heldout", "chance", "top1",
                         1.0 / static_cast<double>(model.dims.n_sectors), seed});
  add_reference(report, "paper_10000_sectors", "schema1_140m", "top1", 0.914);
  add_reference(report, "paper_10000_sectors", "schema1_140m", "top5", 0.970);
  add_reference(report, "paper_10000_sectors", "chance", "top1", 0.0001);
  return report;
}

EvalReport run_retention_suite(const Model<float>& base,
                               const std::vector<FinetuneTask>& tasks,
                               const FinetuneConfig& ft_config,
                               const std::vector<std::uint64_t>& seeds, const Config& config,
                               const std::string& trace_dir) {
  EvalReport report;
  report.protocol = "retention";
  report.config_hash = config.hash();
  report.config_echo = config.canonical();
  report.seeds = seeds;

  const std::vector<std::pair<std::string, AblationFlags>> conditions = {
      {"full", {true, true}},
      {"retention_only", {true, false}},
      {"memory_only", {false, true}},
      {"both_ablated", {false, false}}};

  for (std::uint64_t seed : seeds) {
    for (const auto& [cond, flags] : conditions) {
      StrictAccessor accessor(tasks);
      FinetuneConfig cfg = ft_config;
      cfg.seed = seed;
      RetentionTrace trace =
          sequential_finetune(base, accessor, static_cast<int>(tasks.size()), flags, cfg);
      report.rows.push_back({report.protocol, cond, "dlm", "task1_retention",
                             retention(trace, 0), seed});
      report.rows.push_back({report.protocol, cond, "dlm", "mean_retention",
                             mean_retention(trace), seed});
      if (!trace_dir.empty()) {
        std::error_code ec;
        fs::create_directories(trace_dir, ec);
        save_trace_csv(trace, (fs::path(trace_dir) /
                               ("trace_" + cond + "_seed" + std::to_string(seed) + ".csv"))
                                  .string());
      }
    }
  }
  add_reference(report, "paper_full", "schema1_140m", "task1_retention", 0.978);
  add_reference(report, "paper_full", "schema1_140m", "mean_retention", 0.981);
  add_reference(report, "paper_memory_ablated", "schema1_140m", "task1_retention", 0.786);
  add_reference(report, "paper_retention_ablated", "schema1_140m", "task1_retention", 0.814);
  add_reference(report, "paper_both_ablated", "schema1_140m", "task1_retention", 0.342);
  return report;
}

}  // namespace dlm
