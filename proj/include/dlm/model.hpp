#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dlm/encoder.hpp"
#include "dlm/table.hpp"
#include "dlm/tape.hpp"

namespace dlm {

struct ModelDims {
  int d_sem = 32;
  int d_cell = 32;
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 128;
  int n_sectors = 20;
  int n_classes_max = 10;
  int adapter_rank = 8;

  int token_dim() const { return d_cell - kCellTokenOffset; }
};

// Probability floor mixed into the episode classifier so log-loss stays
// bounded; preserved row sums keep the normalization invariant intact.
inline constexpr double kClassMix = 0.05;

template <typename Scalar>
using DenseMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Named views over every trainable matrix of a parameter pack.
template <typename Scalar>
struct ParamSet {
  std::vector<std::pair<std::string, DenseMat<Scalar>*>> items;

  void add(const std::string& name, DenseMat<Scalar>& m) { items.emplace_back(name, &m); }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [name, m] : items) n += m->size();
    return n;
  }
};

template <typename Scalar>
struct BlockParams {
  DenseMat<Scalar> ln1_g, ln1_b, Wq, bq, Wk, bk, Wv, bv, Wo, bo;
  DenseMat<Scalar> ln2_g, ln2_b, W1, b1, W2, b2;
};

// Episode head: attention from query rows to labeled rows (keys carry label
// embeddings) plus a direct linear readout. The attention route generalizes
// across tasks; the readout columns hold task-specific state, which is what
// sequential fine-tuning protects or forgets.
template <typename Scalar>
struct ClassHeadParams {
  DenseMat<Scalar> Wq, Wk, E_lab;  // d x d, d x d, n_classes_max x d
  DenseMat<Scalar> temp;           // 1 x 1 learnable attention temperature
  DenseMat<Scalar> W_out;          // d x n_classes_max direct readout
  DenseMat<Scalar> amp;            // 1 x 1 weight of the attention evidence

  void collect(const std::string& prefix, ParamSet<Scalar>& out) {
    out.add(prefix + ".Wq", Wq);
    out.add(prefix + ".Wk", Wk);
    out.add(prefix + ".E_lab", E_lab);
    out.add(prefix + ".temp", temp);
    out.add(prefix + ".W_out", W_out);
    out.add(prefix + ".amp", amp);
  }
};

// Bottleneck residual adapters, one per block; A_up starts at zero so a fresh
// stack is the identity.
template <typename Scalar>
struct AdapterParams {
  struct Block {
    DenseMat<Scalar> down;  // d x r
    DenseMat<Scalar> up;    // r x d
  };
  std::vector<Block> blocks;

  void collect(const std::string& prefix, ParamSet<Scalar>& out) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      out.add(prefix + "." + std::to_string(i) + ".down", blocks[i].down);
      out.add(prefix + "." + std::to_string(i) + ".up", blocks[i].up);
    }
  }
};

template <typename Scalar>
struct ModelParams {
  DenseMat<Scalar> W_cell, b_cell;  // d_cell x d, 1 x d
  DenseMat<Scalar> W_sem, b_sem;    // d_sem x d
  DenseMat<Scalar> W_sum, b_sum;    // 7 x d
  DenseMat<Scalar> mask_embed, row_miss_embed, col_miss_embed;  // 1 x d
  std::vector<BlockParams<Scalar>> blocks;
  DenseMat<Scalar> lnf_g, lnf_b;
  DenseMat<Scalar> W_sector, b_sector;  // d x n_sectors
  ClassHeadParams<Scalar> class_head;
  DenseMat<Scalar> w_num, b_num;  // d x 1, 1 x 1
  DenseMat<Scalar> W_tok;         // d x token_dim

  ParamSet<Scalar> param_set();
};

// A trainable encoder over SignalBundles. Holds the base parameters; adapters
// and alternative class heads are provided per call by the training module.
template <typename Scalar>
struct Model {
  ModelDims dims;
  EncoderConfig encoder;
  ModelParams<Scalar> params;
  // Joint outputs must come from one pass each; tests assert on this.
  mutable std::int64_t forward_invocations = 0;
};

template <typename Scalar>
Model<Scalar> init_model(const ModelDims& dims, const EncoderConfig& encoder,
                         std::uint64_t seed);

template <typename Scalar>
AdapterParams<Scalar> init_adapters(const ModelDims& dims, std::uint64_t seed);

// 64-bit digest of every parameter byte, in param_set order.
template <typename Scalar>
std::uint64_t param_checksum(ParamSet<Scalar> params);

// ---------------------------------------------------------------------------
// Inference-facing types

struct Episode {
  std::vector<int> train_rows;
  std::vector<int> train_labels;  // in [0, n_classes)
  std::vector<int> query_rows;
  std::vector<int> query_labels;  // optional ground truth (empty at inference)
  int n_classes = 0;
};

struct ColumnVocab {
  std::vector<std::string> tokens;  // sorted observed categorical tokens
  Eigen::MatrixXd feats;            // tokens.size() x token_dim
};

struct ModelInput {
  SignalBundle bundle;
  std::vector<ColumnVocab> vocabs;  // one per column
};

ModelInput make_input(const RawTable& table, const EncoderConfig& config);
std::vector<ColumnVocab> build_column_vocabs(const RawTable& table,
                                             const EncoderConfig& config);

struct ReconPrediction {
  int row = 0;
  int col = 0;
  double numeric_scaled = 0.0;  // raw head output, scaled space
  double numeric_value = 0.0;   // mapped back through the column scaling
  std::vector<double> token_probs;  // aligned with the column vocab; may be empty
};

struct JointOutput {
  Eigen::VectorXd sector_dist;
  Eigen::MatrixXd class_probs;  // n_query x n_classes; 0 x 0 without episode
  std::vector<ReconPrediction> recon;
};

// Self-supervised reconstruction targets; positions refer to cells that are
// Missing in the (possibly degraded) table the bundle was built from.
struct ReconTask {
  std::vector<int> rows, cols;
  std::vector<int> kind;               // 1 numeric, 2 categorical
  std::vector<double> numeric_scaled;  // aligned, kind == 1
  std::vector<int> token_index;        // aligned, kind == 2
};

struct JointLossWeights {
  double w_sector = 0.0;
  double w_class = 0.0;
  double w_recon = 0.0;
};

// One table's worth of training signal.
struct TrainItem {
  ModelInput input;
  int sector_id = -1;  // < 0 disables the sector loss
  std::optional<Episode> episode;
  ReconTask recon;
};

// ---------------------------------------------------------------------------
// Graph construction (shared by inference, training and grad checking)

template <typename Scalar>
struct GraphOutputs {
  int cell_input = -1;  // leaf carrying cell_feats (grad-enabled when bound)
  int h_final = -1;
  int row_states = -1;
  int col_states = -1;
  int pooled = -1;  // 1 x d masked-mean dataset representation
  int sector_dist = -1;
  int class_probs = -1;
  int recon_num = -1;                // (#positions) x 1 scaled predictions
  std::vector<int> cat_prob_nodes;   // parallel to cat_groups
  struct CatGroup {
    int col;
    std::vector<int> position_index;  // indices into the recon position list
  };
  std::vector<CatGroup> cat_groups;
  int loss = -1;
};

template <typename Scalar>
struct ParamBindings {
  ParamSet<Scalar> set;
  std::vector<int> node_ids;  // aligned with set.items
};

template <typename Scalar>
GraphOutputs<Scalar> build_graph(Tape<Scalar>& tape, const Model<Scalar>& model,
                                 const AdapterParams<Scalar>* adapters,
                                 ClassHeadParams<Scalar>* head_override,
                                 const ModelInput& input, const Episode* episode,
                                 const ReconTask* recon,
                                 const JointLossWeights* loss_weights,
                                 ParamBindings<Scalar>* bindings);

// ---------------------------------------------------------------------------
// Operations

// Single pass producing all heads. Reconstruction covers every Missing cell.
template <typename Scalar>
JointOutput forward(const Model<Scalar>& model, const ModelInput& input,
                    const std::optional<Episode>& episode = std::nullopt,
                    const AdapterParams<Scalar>* adapters = nullptr,
                    ClassHeadParams<Scalar>* head_override = nullptr);

// Top-k sectors with the semantics pathway zeroed (agnostic mode).
template <typename Scalar>
std::vector<std::pair<int, double>> identify_sector(const RawTable& table,
                                                    const Model<Scalar>& model, int k);

// Fills every Missing cell; observed cells are untouched.
template <typename Scalar>
RawTable reconstruct_missing(const RawTable& table, const Model<Scalar>& model,
                             const AdapterParams<Scalar>* adapters = nullptr);

struct ColumnMatch {
  int table_a, col_a, table_b, col_b;
  double score;
};

// Cosine similarity between pooled per-column representations across tables
// of a bundle, sorted descending. No joins or keys are consulted.
template <typename Scalar>
std::vector<ColumnMatch> cross_correlations(const SourceBundle& sources,
                                            const Model<Scalar>& model);

// Max relative error between analytic gradients of the joint loss and central
// finite differences over sampled coordinates.
double grad_check(Model<double>& model, const std::vector<TrainItem>& batch,
                  double epsilon, const JointLossWeights& weights,
                  int n_coords = 200, std::uint64_t seed = 0);

// Loss and parameter gradients of the mean joint loss over a batch.
template <typename Scalar>
double batch_loss_and_grads(const Model<Scalar>& model,
                            const AdapterParams<Scalar>* adapters,
                            ClassHeadParams<Scalar>* head_override,
                            const std::vector<TrainItem>& batch,
                            const JointLossWeights& weights,
                            std::map<std::string, DenseMat<Scalar>>* grads,
                            const std::vector<std::string>* trainable = nullptr);

}  // namespace dlm
