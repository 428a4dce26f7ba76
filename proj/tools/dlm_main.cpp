// Single-binary front end: corpus generation, pretraining, fine-tuning,
// sequential runs, the six evaluation protocols, and ad-hoc identify /
// impute / predict on user CSVs. stdout carries data, stderr diagnostics.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dlm/checkpoint.hpp"
#include "dlm/config.hpp"
#include "dlm/evalrun.hpp"
#include "dlm/hash.hpp"
#include "dlm/mathutil.hpp"
#include "dlm/metrics.hpp"
#include "dlm/parse.hpp"
#include "dlm/train.hpp"

namespace fs = std::filesystem;
using namespace dlm;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  int jobs = -1;
  std::string model_path;
  std::string adapters_path;
  // ingest flags
  std::string delimiter = ",";
  bool no_header = false;
  std::vector<std::string> missing_tokens;
};

Config load_config(const GlobalArgs& args) {
  require(!args.config_path.empty(), ErrorCode::ConfigError, "--config is required");
  Config config = Config::from_file(args.config_path);
  if (args.seed >= 0) config.set("seed", std::to_string(args.seed));
  if (!args.out_dir.empty()) config.set("paths.out", args.out_dir);
  if (args.jobs > 0) config.set("run.jobs", std::to_string(args.jobs));
  if (!args.model_path.empty()) config.set("paths.model", args.model_path);
  return config;
}

ParseOptions parse_options(const GlobalArgs& args) {
  ParseOptions opt;
  require(args.delimiter.size() == 1, ErrorCode::ConfigError,
          "--delimiter must be a single byte");
  opt.delimiter = args.delimiter[0];
  opt.has_header = !args.no_header;
  if (!args.missing_tokens.empty()) {
    opt.missing_tokens = {args.missing_tokens.begin(), args.missing_tokens.end()};
  }
  return opt;
}

Model<float> load_base_model(const Config& config) {
  const std::string path = config.get_string("paths.model");
  require(!path.empty(), ErrorCode::ConfigError,
          "paths.model (or --model) must point to a base checkpoint");
  return model_from_checkpoint(load_checkpoint(path));
}

std::string out_path(const Config& config, const std::string& name) {
  const fs::path dir = config.get_string("paths.out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::IoFailure, "cannot create " + dir.string());
  return (dir / name).string();
}

std::string corpus_dir(const Config& config) {
  const std::string explicit_dir = config.get_string("paths.corpus");
  if (!explicit_dir.empty()) return explicit_dir;
  return (fs::path(config.get_string("paths.out")) / "corpus").string();
}

SectorTaxonomy taxonomy_from_config(const Config& config) {
  return build_taxonomy(static_cast<int>(config.get_int("taxonomy.n_sectors")),
                        static_cast<std::uint64_t>(config.get_int("seed")));
}

std::vector<std::uint64_t> eval_seeds(const Config& config) {
  const auto n = config.get_int("eval.n_seeds");
  const auto base = static_cast<std::uint64_t>(config.get_int("seed"));
  std::vector<std::uint64_t> seeds;
  for (std::int64_t i = 0; i < n; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));
  return seeds;
}

int cmd_gen_corpus(const Config& config) {
  const SectorTaxonomy taxonomy = taxonomy_from_config(config);
  Blocklist blocklist;
  const std::string blocklist_path = config.get_string("paths.blocklist");
  if (!blocklist_path.empty()) blocklist = load_blocklist(blocklist_path);

  const std::string dir = corpus_dir(config);
  const auto seed = static_cast<std::uint64_t>(config.get_int("seed"));
  const CorpusManifest manifest = build_corpus(
      taxonomy, static_cast<int>(config.get_int("corpus.datasets_per_sector")), blocklist,
      seed, dir);
  const std::string heldout_dir =
      (fs::path(config.get_string("paths.out")) / "heldout").string();
  const CorpusManifest heldout = build_corpus(
      taxonomy, static_cast<int>(config.get_int("corpus.eval_datasets_per_sector")),
      blocklist, derive_seed(seed, 0x68656c64), heldout_dir, 100000);
  save_taxonomy_json(taxonomy, out_path(config, "taxonomy.json"));
  std::cerr << "corpus: " << manifest.entries.size() << " datasets in " << dir
            << "; heldout: " << heldout.entries.size() << " in " << heldout_dir << "\n";
  return 0;
}

int cmd_pretrain(const Config& config) {
  const std::string dir = corpus_dir(config);
  CorpusReader reader(load_manifest((fs::path(dir) / "manifest.csv").string()), dir);
  LossWeights weights{config.get_double("loss.w_sector"), config.get_double("loss.w_class"),
                      config.get_double("loss.w_recon")};
  const TrainConfig tc = TrainConfig::from(config);
  PretrainStats stats;
  Model<float> model = pretrain(reader, weights, config.model_dims(),
                                config.encoder_config(), tc, &stats);
  const std::string path = out_path(config, "base.tdlm");
  save_checkpoint(path, model_to_checkpoint(model, tc.seed));
  std::cerr << "pretrain: loss step0 " << stats.loss_step0 << " -> ema " << stats.ema_final
            << "; checkpoint " << path << "\n";
  return 0;
}

int cmd_finetune(const Config& config, const GlobalArgs& args, const std::string& data_path,
                 int target_col, std::int64_t task_id) {
  const Model<float> base = load_base_model(config);
  FinetuneTask task;
  task.table = parse_table_file(data_path, parse_options(args));
  task.target_col = target_col;
  task.task_id = task_id;
  AblationFlags flags{config.get_bool("seq.retention_on"), config.get_bool("seq.memory_on")};
  TaskCheckpoint ckpt = finetune(base, task, flags, FinetuneConfig::from(config));
  const std::string path =
      out_path(config, "task_" + std::to_string(task_id) + ".tdlm");
  save_checkpoint(path, task_checkpoint_to_data(ckpt));
  std::cerr << "finetune: task " << task_id << " -> " << path << "\n";
  return 0;
}

int cmd_finetune_seq(const Config& config) {
  const Model<float> base = load_base_model(config);
  const SectorTaxonomy taxonomy = taxonomy_from_config(config);
  const int n_tasks = static_cast<int>(config.get_int("seq.n_tasks"));
  auto tasks = make_synthetic_tasks(taxonomy, n_tasks, 64,
                                    static_cast<std::uint64_t>(config.get_int("seed")),
                                    200000);
  StrictAccessor accessor(std::move(tasks));
  AblationFlags flags{config.get_bool("seq.retention_on"), config.get_bool("seq.memory_on")};
  RetentionTrace trace =
      sequential_finetune(base, accessor, n_tasks, flags, FinetuneConfig::from(config));
  const std::string path = out_path(config, "retention_trace.csv");
  save_trace_csv(trace, path);
  std::cerr << "finetune-seq: task1 retention " << retention(trace, 0) << ", mean "
            << mean_retention(trace) << "; trace " << path << "\n";
  return 0;
}

struct EvalModels {
  Model<float> base;
  std::vector<std::unique_ptr<EvalClassifier>> owned;
  std::vector<EvalClassifier*> ptrs;
};

EvalModels make_eval_models(const Config& config) {
  EvalModels m{load_base_model(config), {}, {}};
  m.owned.push_back(make_dlm_classifier(&m.base, FinetuneConfig::from(config)));
  m.owned.push_back(wrap_model(make_logistic_model()));
  m.owned.push_back(wrap_model(make_majority_model()));
  for (auto& p : m.owned) m.ptrs.push_back(p.get());
  return m;
}

int cmd_eval_cv(const Config& config) {
  EvalModels models = make_eval_models(config);
  const SectorTaxonomy taxonomy = taxonomy_from_config(config);
  auto tasks = make_synthetic_tasks(taxonomy,
                                    static_cast<int>(config.get_int("eval.n_datasets")), 80,
                                    static_cast<std::uint64_t>(config.get_int("seed")),
                                    300000);
  EvalReport report = run_cv_benchmark(tasks, models.ptrs,
                                       static_cast<int>(config.get_int("eval.folds")),
                                       config.get_double("eval.budget_s"),
                                       static_cast<std::uint64_t>(config.get_int("seed")),
                                       config);
  emit_report(report, config.get_string("paths.out"), "cv");
  std::cerr << "eval-cv: " << report.rows.size() << " rows\n";
  return 0;
}

int cmd_eval_missingness(const Config& config) {
  EvalModels models = make_eval_models(config);
  const SectorTaxonomy taxonomy = taxonomy_from_config(config);
  auto tasks = make_synthetic_tasks(taxonomy,
                                    static_cast<int>(config.get_int("eval.n_datasets")), 80,
                                    static_cast<std::uint64_t>(config.get_int("seed")),
                                    310000);
  EvalReport report = run_missingness_curve(
      tasks, models.ptrs, config.get_double_list("eval.rates"),
      static_cast<int>(config.get_int("eval.folds")), config.get_double("eval.budget_s"),
      eval_seeds(config), config);
  emit_report(report, config.get_string("paths.out"), "missingness");
  std::cerr << "eval-missingness: " << report.rows.size() << " rows\n";
  return 0;
}

int cmd_eval_impute(const Config& config) {
  const Model<float> base = load_base_model(config);
  const SectorTaxonomy taxonomy = taxonomy_from_config(config);
  std::vector<RawTable> tables;
  const int n = static_cast<int>(config.get_int("eval.n_datasets"));
  for (int i = 0; i < n; ++i) {
    const int sector = (i * static_cast<int>(taxonomy.sectors.size())) / std::max(1, n);
    tables.push_back(sample_dataset(
        taxonomy, sector, 96,
        derive_seed(static_cast<std::uint64_t>(config.get_int("seed")), 0x65766974,
                    static_cast<std::uint64_t>(320000 + i))));
  }
  auto col_mean = make_column_mean_imputer();
  auto knn = make_knn_imputer(5);
  DlmImputer dlm_imp(&base);
  std::vector<Imputer*> imputers = {col_mean.get(), knn.get(), &dlm_imp};
  EvalReport report = run_imputation_grid(tables, imputers, eval_seeds(config), config);
  emit_report(report, config.get_string("paths.out"), "imputation");
  std::cerr << "eval-impute: " << report.rows.size() << " rows\n";
  return 0;
}

int cmd_eval_agnostic(const Config& config) {
  EvalModels models = make_eval_models(config);
  const SectorTaxonomy taxonomy = taxonomy_from_config(config);
  auto tasks = make_synthetic_tasks(taxonomy,
                                    static_cast<int>(config.get_int("eval.n_datasets")), 80,
                                    static_cast<std::uint64_t>(config.get_int("seed")),
                                    330000);
  EvalReport report = run_column_agnostic(tasks, models.ptrs,
                                          config.get_double("eval.epsilon_bound"),
                                          config.get_double("eval.budget_s"),
                                          static_cast<std::uint64_t>(config.get_int("seed")),
                                          config);
  emit_report(report, config.get_string("paths.out"), "column_agnostic");
  std::cerr << "eval-agnostic: " << report.rows.size() << " rows\n";
  return 0;
}

int cmd_eval_sector(const Config& config) {
  const Model<float> base = load_base_model(config);
  const fs::path out = config.get_string("paths.out");
  const std::string heldout_dir = (out / "heldout").string();
  CorpusManifest heldout = load_manifest((fs::path(heldout_dir) / "manifest.csv").string());
  const std::string train_dir = corpus_dir(config);
  CorpusManifest training = load_manifest((fs::path(train_dir) / "manifest.csv").string());
  const int cap = static_cast<int>(config.get_int("eval.sector_tables"));
  if (static_cast<int>(heldout.entries.size()) > cap) heldout.entries.resize(cap);
  EvalReport report = run_sector_blind(heldout, heldout_dir, training, base, {1, 5}, config);
  emit_report(report, config.get_string("paths.out"), "sector_blind");
  std::cerr << "eval-sector: " << report.rows.size() << " rows\n";
  return 0;
}

int cmd_eval_retention(const Config& config) {
  const Model<float> base = load_base_model(config);
  const SectorTaxonomy taxonomy = taxonomy_from_config(config);
  auto tasks = make_synthetic_tasks(taxonomy,
                                    static_cast<int>(config.get_int("seq.n_tasks")), 64,
                                    static_cast<std::uint64_t>(config.get_int("seed")),
                                    340000);
  EvalReport report =
      run_retention_suite(base, tasks, FinetuneConfig::from(config), eval_seeds(config),
                          config, (fs::path(config.get_string("paths.out")) / "traces").string());
  emit_report(report, config.get_string("paths.out"), "retention");
  std::cerr << "eval-retention: " << report.rows.size() << " rows\n";
  return 0;
}

int cmd_identify(const Config& config, const GlobalArgs& args, const std::string& file) {
  const Model<float> base = load_base_model(config);
  const RawTable table = parse_table_file(file, parse_options(args));
  const auto top = identify_sector(table, base, 5);
  std::cout << "rank,sector_id,probability\n";
  for (std::size_t i = 0; i < top.size(); ++i) {
    std::cout << (i + 1) << ',' << top[i].first << ',' << format_double(top[i].second)
              << '\n';
  }
  return 0;
}

int cmd_impute(const Config& config, const GlobalArgs& args, const std::string& file) {
  const Model<float> base = load_base_model(config);
  std::optional<TaskCheckpoint> task;
  if (!args.adapters_path.empty()) {
    task = task_checkpoint_from_data(load_checkpoint(args.adapters_path), base.dims);
    require(task->base_ref == base_checksum(base), ErrorCode::BadCheckpoint,
            "task checkpoint references a different base model");
  }
  const ParseOptions opt = parse_options(args);
  const RawTable table = parse_table_file(file, opt);
  const RawTable filled =
      reconstruct_missing(table, base, task ? &task->adapters : nullptr);
  const std::string out = file + ".imputed.csv";
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::IoFailure, "cannot write " + out);
  const std::string csv = serialize_table(filled, opt.delimiter, "");
  f.write(csv.data(), static_cast<std::streamsize>(csv.size()));
  require(f.good(), ErrorCode::IoFailure, "write failed: " + out);
  std::cerr << "impute: wrote " << out << "\n";
  return 0;
}

int cmd_predict(const Config& config, const GlobalArgs& args, const std::string& file,
                int target_col) {
  const Model<float> base = load_base_model(config);
  std::optional<TaskCheckpoint> task;
  if (!args.adapters_path.empty()) {
    task = task_checkpoint_from_data(load_checkpoint(args.adapters_path), base.dims);
    require(task->base_ref == base_checksum(base), ErrorCode::BadCheckpoint,
            "task checkpoint references a different base model");
  }
  const RawTable table = parse_table_file(file, parse_options(args));
  const auto classes = target_classes(table, target_col);
  require(classes.size() >= 2, ErrorCode::TargetNotCategorical,
          "target column needs >= 2 categorical classes");
  const auto labels = target_labels(table, target_col, classes);
  std::vector<int> context, query;
  for (int r = 0; r < table.n_rows; ++r) {
    if (labels[r] >= 0) context.push_back(r);
    query.push_back(r);
  }
  require(!context.empty(), ErrorCode::TooFewRows, "no labeled rows in target column");
  const Eigen::MatrixXd probs =
      predict_proba(base, task ? &task->adapters : nullptr, task ? &task->head : nullptr,
                    table, target_col, context, query);
  std::cout << "row";
  for (const auto& c : classes) std::cout << ',' << c;
  std::cout << '\n';
  for (int r = 0; r < table.n_rows; ++r) {
    std::cout << r;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      std::cout << ',' << format_double(probs(r, c));
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tabular data-language-model toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs args;
  app.add_option("--config", args.config_path, "path to the config file");
  app.add_option("--seed", args.seed, "seed override");
  app.add_option("--out", args.out_dir, "output directory override");
  app.add_option("--jobs", args.jobs, "worker cap");
  app.add_option("--model", args.model_path, "base checkpoint path override");
  app.add_option("--adapters", args.adapters_path, "task checkpoint for impute/predict");
  app.add_option("--delimiter", args.delimiter, "field delimiter (single byte)");
  app.add_flag("--no-header", args.no_header, "input files carry no header row");
  app.add_option("--missing-token", args.missing_tokens, "extra missing token (repeatable)");

  auto* sc_gen = app.add_subcommand("gen-corpus", "generate taxonomy + corpora");
  sc_gen->fallthrough();
  auto* sc_pre = app.add_subcommand("pretrain", "pretrain the base model");
  sc_pre->fallthrough();
  auto* sc_ft = app.add_subcommand("finetune", "fine-tune on a labeled CSV");
  sc_ft->fallthrough();
  std::string ft_data;
  int ft_target = -1;
  std::int64_t ft_task_id = 1;
  sc_ft->add_option("--data", ft_data, "labeled CSV")->required();
  sc_ft->add_option("--target", ft_target, "target column index")->required();
  sc_ft->add_option("--task-id", ft_task_id, "task identifier");
  auto* sc_seq = app.add_subcommand("finetune-seq", "sequential fine-tuning protocol");
  sc_seq->fallthrough();
  auto* sc_cv = app.add_subcommand("eval-cv", "stratified CV benchmark");
  sc_cv->fallthrough();
  auto* sc_miss = app.add_subcommand("eval-missingness", "missingness robustness curve");
  sc_miss->fallthrough();
  auto* sc_imp = app.add_subcommand("eval-impute", "imputation grid");
  sc_imp->fallthrough();
  auto* sc_agn = app.add_subcommand("eval-agnostic", "column-name ablation");
  sc_agn->fallthrough();
  auto* sc_sec = app.add_subcommand("eval-sector", "blind sector identification");
  sc_sec->fallthrough();
  auto* sc_ret = app.add_subcommand("eval-retention", "retention ablation suite");
  sc_ret->fallthrough();
  auto* sc_ident = app.add_subcommand("identify", "top-5 sectors for a CSV");
  sc_ident->fallthrough();
  std::string ident_file;
  sc_ident->add_option("file", ident_file, "input CSV")->required();
  auto* sc_impute = app.add_subcommand("impute", "fill missing cells of a CSV");
  sc_impute->fallthrough();
  std::string impute_file;
  sc_impute->add_option("file", impute_file, "input CSV")->required();
  auto* sc_pred = app.add_subcommand("predict", "per-row class probabilities");
  sc_pred->fallthrough();
  std::string pred_file;
  int pred_target = -1;
  sc_pred->add_option("file", pred_file, "input CSV")->required();
  sc_pred->add_option("--target", pred_target, "target column index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: Usage: " << e.what() << "\n";
    std::cerr << app.help() << std::flush;
    return 1;
  }

  try {
    const Config config = load_config(args);
    if (sc_gen->parsed()) return cmd_gen_corpus(config);
    if (sc_pre->parsed()) return cmd_pretrain(config);
    if (sc_ft->parsed()) return cmd_finetune(config, args, ft_data, ft_target, ft_task_id);
    if (sc_seq->parsed()) return cmd_finetune_seq(config);
    if (sc_cv->parsed()) return cmd_eval_cv(config);
    if (sc_miss->parsed()) return cmd_eval_missingness(config);
    if (sc_imp->parsed()) return cmd_eval_impute(config);
    if (sc_agn->parsed()) return cmd_eval_agnostic(config);
    if (sc_sec->parsed()) return cmd_eval_sector(config);
    if (sc_ret->parsed()) return cmd_eval_retention(config);
    if (sc_ident->parsed()) return cmd_identify(config, args, ident_file);
    if (sc_impute->parsed()) return cmd_impute(config, args, impute_file);
    if (sc_pred->parsed()) return cmd_predict(config, args, pred_file, pred_target);
    std::cerr << "error: Usage: no subcommand\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return error_code_severity(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 3;
  }
}
