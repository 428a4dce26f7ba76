#include "dlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dlm/hash.hpp"
#include "dlm/rng.hpp"

namespace dlm {

namespace {

template <typename Scalar>
DenseMat<Scalar> normal_init(int rows, int cols, double std_dev, Rng& rng) {
  DenseMat<Scalar> m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = static_cast<Scalar>(rng.normal(0.0, std_dev));
  }
  return m;
}

template <typename Scalar>
DenseMat<Scalar> const_init(int rows, int cols, double v) {
  return DenseMat<Scalar>::Constant(rows, cols, static_cast<Scalar>(v));
}

}  // namespace

template <typename Scalar>
ParamSet<Scalar> ModelParams<Scalar>::param_set() {
  ParamSet<Scalar> set;
  set.add("in.W_cell", W_cell);
  set.add("in.b_cell", b_cell);
  set.add("in.W_sem", W_sem);
  set.add("in.b_sem", b_sem);
  set.add("in.W_sum", W_sum);
  set.add("in.b_sum", b_sum);
  set.add("in.mask_embed", mask_embed);
  set.add("in.row_miss_embed", row_miss_embed);
  set.add("in.col_miss_embed", col_miss_embed);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block." + std::to_string(i) + ".";
    auto& b = blocks[i];
    set.add(p + "ln1_g", b.ln1_g);
    set.add(p + "ln1_b", b.ln1_b);
    set.add(p + "Wq", b.Wq);
    set.add(p + "bq", b.bq);
    set.add(p + "Wk", b.Wk);
    set.add(p + "bk", b.bk);
    set.add(p + "Wv", b.Wv);
    set.add(p + "bv", b.bv);
    set.add(p + "Wo", b.Wo);
    set.add(p + "bo", b.bo);
    set.add(p + "ln2_g", b.ln2_g);
    set.add(p + "ln2_b", b.ln2_b);
    set.add(p + "W1", b.W1);
    set.add(p + "b1", b.b1);
    set.add(p + "W2", b.W2);
    set.add(p + "b2", b.b2);
  }
  set.add("lnf_g", lnf_g);
  set.add("lnf_b", lnf_b);
  set.add("head.W_sector", W_sector);
  set.add("head.b_sector", b_sector);
  class_head.collect("class_head", set);
  set.add("head.w_num", w_num);
  set.add("head.b_num", b_num);
  set.add("head.W_tok", W_tok);
  return set;
}

template <typename Scalar>
Model<Scalar> init_model(const ModelDims& dims, const EncoderConfig& encoder,
                         std::uint64_t seed) {
  require(dims.d_model % dims.n_heads == 0, ErrorCode::ConfigError,
          "d_model must be divisible by n_heads");
  require(dims.d_sem == encoder.d_sem && dims.d_cell == encoder.d_cell,
          ErrorCode::ConfigError, "model dims and encoder config disagree");
  Model<Scalar> model;
  model.dims = dims;
  model.encoder = encoder;
  Rng rng(derive_seed(seed, 0x6d6f64656c));
  const int d = dims.d_model;
  const double s_in = 1.0 / std::sqrt(static_cast<double>(d));
  auto& p = model.params;
  p.W_cell = normal_init<Scalar>(dims.d_cell, d, 1.0 / std::sqrt((double)dims.d_cell), rng);
  p.b_cell = const_init<Scalar>(1, d, 0.0);
  p.W_sem = normal_init<Scalar>(dims.d_sem, d, 1.0 / std::sqrt((double)dims.d_sem), rng);
  p.b_sem = const_init<Scalar>(1, d, 0.0);
  p.W_sum = normal_init<Scalar>(7, d, 1.0 / std::sqrt(7.0), rng);
  p.b_sum = const_init<Scalar>(1, d, 0.0);
  p.mask_embed = normal_init<Scalar>(1, d, 0.02, rng);
  p.row_miss_embed = normal_init<Scalar>(1, d, 0.02, rng);
  p.col_miss_embed = normal_init<Scalar>(1, d, 0.02, rng);
  p.blocks.resize(dims.n_layers);
  for (auto& b : p.blocks) {
    b.ln1_g = const_init<Scalar>(1, d, 1.0);
    b.ln1_b = const_init<Scalar>(1, d, 0.0);
    b.Wq = normal_init<Scalar>(d, d, s_in, rng);
    b.bq = const_init<Scalar>(1, d, 0.0);
    b.Wk = normal_init<Scalar>(d, d, s_in, rng);
    b.bk = const_init<Scalar>(1, d, 0.0);
    b.Wv = normal_init<Scalar>(d, d, s_in, rng);
    b.bv = const_init<Scalar>(1, d, 0.0);
    b.Wo = normal_init<Scalar>(d, d, s_in / std::sqrt(2.0 * dims.n_layers), rng);
    b.bo = const_init<Scalar>(1, d, 0.0);
    b.ln2_g = const_init<Scalar>(1, d, 1.0);
    b.ln2_b = const_init<Scalar>(1, d, 0.0);
    b.W1 = normal_init<Scalar>(d, dims.d_ff, s_in, rng);
    b.b1 = const_init<Scalar>(1, dims.d_ff, 0.0);
    b.W2 = normal_init<Scalar>(dims.d_ff, d, 1.0 / std::sqrt((double)dims.d_ff) /
                                                  std::sqrt(2.0 * dims.n_layers),
                               rng);
    b.b2 = const_init<Scalar>(1, d, 0.0);
  }
  p.lnf_g = const_init<Scalar>(1, d, 1.0);
  p.lnf_b = const_init<Scalar>(1, d, 0.0);
  p.W_sector = normal_init<Scalar>(d, dims.n_sectors, s_in, rng);
  p.b_sector = const_init<Scalar>(1, dims.n_sectors, 0.0);
  // Shared query/key init makes the episode head a similarity kernel from the
  // start: queries attend to the most similar labeled rows before any tuning.
  p.class_head.Wq = normal_init<Scalar>(d, d, s_in, rng);
  p.class_head.Wk = p.class_head.Wq;
  p.class_head.E_lab = normal_init<Scalar>(dims.n_classes_max, d, 0.2, rng);
  p.class_head.temp = const_init<Scalar>(1, 1, 1.0);
  p.class_head.W_out = const_init<Scalar>(d, dims.n_classes_max, 0.0);
  p.class_head.amp = const_init<Scalar>(1, 1, 4.0);
  p.w_num = normal_init<Scalar>(d, 1, s_in, rng);
  p.b_num = const_init<Scalar>(1, 1, 0.0);
  p.W_tok = normal_init<Scalar>(d, dims.token_dim(), s_in, rng);
  return model;
}

template <typename Scalar>
AdapterParams<Scalar> init_adapters(const ModelDims& dims, std::uint64_t seed) {
  AdapterParams<Scalar> a;
  Rng rng(derive_seed(seed, 0x61646170));
  a.blocks.resize(dims.n_layers);
  for (auto& b : a.blocks) {
    b.down = normal_init<Scalar>(dims.d_model, dims.adapter_rank,
                                 1.0 / std::sqrt((double)dims.d_model), rng);
    b.up = const_init<Scalar>(dims.adapter_rank, dims.d_model, 0.0);
  }
  return a;
}

template <typename Scalar>
std::uint64_t param_checksum(ParamSet<Scalar> params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, m] : params.items) {
    h = fnv1a64(name, h);
    h = fnv1a64(m->data(), sizeof(Scalar) * m->size(), h);
  }
  return h;
}

std::vector<ColumnVocab> build_column_vocabs(const RawTable& table,
                                             const EncoderConfig& config) {
  const int token_dim = config.d_cell - kCellTokenOffset;
  std::vector<ColumnVocab> vocabs(table.n_cols);
  for (int c = 0; c < table.n_cols; ++c) {
    std::set<std::string> tokens;
    for (int r = 0; r < table.n_rows; ++r) {
      const auto& cell = table.at(r, c);
      if (cell.is_categorical()) tokens.insert(cell.token());
    }
    auto& v = vocabs[c];
    v.tokens.assign(tokens.begin(), tokens.end());
    v.feats.resize(static_cast<Eigen::Index>(v.tokens.size()), token_dim);
    for (std::size_t t = 0; t < v.tokens.size(); ++t) {
      v.feats.row(static_cast<Eigen::Index>(t)) =
          hashed_trigram_embedding(v.tokens[t], token_dim, config.hash_seed).transpose();
    }
  }
  return vocabs;
}

ModelInput make_input(const RawTable& table, const EncoderConfig& config) {
  ModelInput in;
  in.bundle = fuse(table, config);
  in.vocabs = build_column_vocabs(table, config);
  return in;
}

// ---------------------------------------------------------------------------

template <typename Scalar>
GraphOutputs<Scalar> build_graph(Tape<Scalar>& tape, const Model<Scalar>& model,
                                 const AdapterParams<Scalar>* adapters,
                                 ClassHeadParams<Scalar>* head_override,
                                 const ModelInput& input, const Episode* episode,
                                 const ReconTask* recon,
                                 const JointLossWeights* loss_weights,
                                 ParamBindings<Scalar>* bindings) {
  using Mat = typename Tape<Scalar>::Mat;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const SignalBundle& b = input.bundle;
  const ModelDims& dims = model.dims;
  const int R = b.n_rows, C = b.n_cols;
  const int N = R * C;
  const int d = dims.d_model;

  require(R >= 1 && C >= 1, ErrorCode::DimensionMismatch, "empty bundle");
  require(b.semantics.rows() == C && b.semantics.cols() == dims.d_sem,
          ErrorCode::DimensionMismatch, "semantics shape mismatch");
  require(b.summaries.rows() == C && b.summaries.cols() == 7,
          ErrorCode::DimensionMismatch, "summaries shape mismatch");
  require(b.cell_feats.rows() == N && b.cell_feats.cols() == dims.d_cell,
          ErrorCode::DimensionMismatch, "cell_feats shape mismatch");
  require(b.miss_mask.rows() == R && b.miss_mask.cols() == C,
          ErrorCode::DimensionMismatch, "miss_mask shape mismatch");

  // Parameter leaves. Binding order matches ParamSet order.
  ModelParams<Scalar>& params = const_cast<ModelParams<Scalar>&>(model.params);
  ParamSet<Scalar> set = params.param_set();
  if (head_override) {
    ParamSet<Scalar> base;
    for (auto& item : set.items) {
      if (item.first.rfind("class_head.", 0) != 0) base.items.push_back(item);
    }
    set = std::move(base);
    head_override->collect("task_head", set);
  }
  AdapterParams<Scalar>* adapters_mut = const_cast<AdapterParams<Scalar>*>(adapters);
  if (adapters_mut) adapters_mut->collect("adapter", set);

  const bool with_grads = bindings != nullptr;
  std::map<std::string, int> pnode;
  if (with_grads) {
    bindings->set = set;
    bindings->node_ids.clear();
  }
  for (auto& [name, mat] : set.items) {
    const int id = tape.leaf(*mat, with_grads);
    pnode[name] = id;
    if (with_grads) bindings->node_ids.push_back(id);
  }
  auto P = [&](const std::string& name) {
    auto it = pnode.find(name);
    require(it != pnode.end(), ErrorCode::Internal, "unbound param " + name);
    return it->second;
  };

  // Group index structure of the cell grid.
  typename Tape<Scalar>::Groups row_groups(R), col_groups(C);
  std::vector<int> col_of_cell(N), row_of_cell(N);
  for (int r = 0; r < R; ++r) {
    row_groups[r].reserve(C);
    for (int c = 0; c < C; ++c) {
      const int i = r * C + c;
      row_groups[r].push_back(i);
      col_groups[c].push_back(i);
      col_of_cell[i] = c;
      row_of_cell[i] = r;
    }
  }
  std::vector<int> all_cells(N);
  for (int i = 0; i < N; ++i) all_cells[i] = i;

  Vec present(N);
  for (int i = 0; i < N; ++i) {
    present[i] = static_cast<Scalar>(b.miss_mask(row_of_cell[i], col_of_cell[i]));
  }

  // Input stage: project the four pathways into d_model and sum cell-wise.
  const int cell_leaf = tape.leaf(b.cell_feats.template cast<Scalar>(), with_grads);
  const int cell_in = tape.signed_log1p(cell_leaf);
  const int cell_proj = tape.add_row(tape.matmul(cell_in, P("in.W_cell")), P("in.b_cell"));
  const int sem_in = tape.leaf(b.semantics.template cast<Scalar>());
  const int sum_in = tape.signed_log1p(tape.leaf(b.summaries.template cast<Scalar>()));
  const int sem_proj = tape.add_row(tape.matmul(sem_in, P("in.W_sem")), P("in.b_sem"));
  const int sum_proj = tape.add_row(tape.matmul(sum_in, P("in.W_sum")), P("in.b_sum"));
  const int col_ctx = tape.add(sem_proj, sum_proj);
  const int ctx_cells = tape.gather_rows(col_ctx, col_of_cell);
  int h = tape.add(cell_proj, ctx_cells);

  Vec miss_w = Vec::Ones(N) - present;
  h = tape.add_weighted_row(h, P("in.mask_embed"), miss_w);
  Vec row_frac_w(N), col_frac_w(N);
  for (int i = 0; i < N; ++i) {
    row_frac_w[i] = static_cast<Scalar>(b.row_miss_frac[row_of_cell[i]]);
    col_frac_w[i] = static_cast<Scalar>(b.col_miss_frac[col_of_cell[i]]);
  }
  h = tape.add_weighted_row(h, P("in.row_miss_embed"), row_frac_w);
  h = tape.add_weighted_row(h, P("in.col_miss_embed"), col_frac_w);

  // Alternating row-axis / column-axis attention blocks.
  for (int l = 0; l < dims.n_layers; ++l) {
    const std::string p = "block." + std::to_string(l) + ".";
    const auto& groups = (l % 2 == 0) ? row_groups : col_groups;
    const int x_ln = tape.layer_norm_rows(h, P(p + "ln1_g"), P(p + "ln1_b"));
    const int q = tape.add_row(tape.matmul(x_ln, P(p + "Wq")), P(p + "bq"));
    const int k = tape.add_row(tape.matmul(x_ln, P(p + "Wk")), P(p + "bk"));
    const int v = tape.add_row(tape.matmul(x_ln, P(p + "Wv")), P(p + "bv"));
    const int attn = tape.group_attention(q, k, v, groups, dims.n_heads);
    const int ao = tape.add_row(tape.matmul(attn, P(p + "Wo")), P(p + "bo"));
    h = tape.add(h, ao);
    const int x_ln2 = tape.layer_norm_rows(h, P(p + "ln2_g"), P(p + "ln2_b"));
    const int m1 = tape.gelu(tape.add_row(tape.matmul(x_ln2, P(p + "W1")), P(p + "b1")));
    const int m2 = tape.add_row(tape.matmul(m1, P(p + "W2")), P(p + "b2"));
    h = tape.add(h, m2);
    if (adapters) {
      const std::string ap = "adapter." + std::to_string(l) + ".";
      const int a1 = tape.gelu(tape.matmul(h, P(ap + "down")));
      const int a2 = tape.matmul(a1, P(ap + "up"));
      h = tape.add(h, a2);
    }
  }
  h = tape.layer_norm_rows(h, P("lnf_g"), P("lnf_b"));

  GraphOutputs<Scalar> out;
  out.cell_input = cell_leaf;
  out.h_final = h;

  // Pooled states. Present cells carry the weight; all-missing groups fall
  // back to a uniform mean inside the op.
  out.row_states = tape.group_weighted_mean(h, row_groups, present);
  out.col_states = tape.group_weighted_mean(h, col_groups, present);
  out.pooled = tape.group_weighted_mean(h, {all_cells}, present);
  const int sector_logits =
      tape.add_row(tape.matmul(out.pooled, P("head.W_sector")), P("head.b_sector"));
  out.sector_dist = tape.row_softmax(sector_logits);

  // Episode-conditioned class head: queries attend to labeled rows whose keys
  // carry label embeddings; attention mass aggregated per class.
  if (episode) {
    const Episode& ep = *episode;
    require(ep.n_classes >= 2 && ep.n_classes <= dims.n_classes_max,
            ErrorCode::InvalidLabel, "episode class count out of range");
    require(!ep.train_rows.empty() && !ep.query_rows.empty(), ErrorCode::DimensionMismatch,
            "episode needs train and query rows");
    require(ep.train_labels.size() == ep.train_rows.size(), ErrorCode::InvalidLabel,
            "train labels size mismatch");
    for (int row : ep.train_rows) {
      require(row >= 0 && row < R, ErrorCode::DimensionMismatch, "train row out of range");
    }
    for (int row : ep.query_rows) {
      require(row >= 0 && row < R, ErrorCode::DimensionMismatch, "query row out of range");
    }
    for (int y : ep.train_labels) {
      require(y >= 0 && y < ep.n_classes, ErrorCode::InvalidLabel, "train label out of range");
    }
    const std::string hp = head_override ? "task_head." : "class_head.";
    // Row states share a dominant table-level direction; centering across
    // rows followed by a non-affine LayerNorm restores per-row contrast, so
    // query/key attention starts out as a row-similarity kernel.
    const int ln_g = tape.leaf(Mat::Ones(1, d));
    const int ln_b = tape.leaf(Mat::Zero(1, d));
    const int rs_norm =
        tape.layer_norm_rows(tape.center_rows(out.row_states), ln_g, ln_b);
    const int rs_t = tape.gather_rows(rs_norm, ep.train_rows);
    const int rs_q = tape.gather_rows(rs_norm, ep.query_rows);
    const int qn = tape.matmul(rs_q, P(hp + "Wq"));
    const int kn = tape.add(tape.matmul(rs_t, P(hp + "Wk")),
                            tape.gather_rows(P(hp + "E_lab"), ep.train_labels));
    const int scores = tape.mul_scalar_node(
        tape.scale(tape.matmul_nt(qn, kn), static_cast<Scalar>(1.0 / std::sqrt((double)d))),
        P(hp + "temp"));
    const int alpha = tape.row_softmax(scores);
    Mat onehot = Mat::Zero(static_cast<Eigen::Index>(ep.train_rows.size()), ep.n_classes);
    for (std::size_t i = 0; i < ep.train_labels.size(); ++i) {
      onehot(static_cast<Eigen::Index>(i), ep.train_labels[i]) = 1;
    }
    const int evidence = tape.matmul(alpha, tape.leaf(std::move(onehot)));
    const int direct =
        tape.left_cols(tape.matmul(rs_q, P(hp + "W_out")), ep.n_classes);
    const int logits = tape.add(tape.mul_scalar_node(evidence, P(hp + "amp")), direct);
    out.class_probs =
        tape.mix_uniform(tape.row_softmax(logits), static_cast<Scalar>(kClassMix));
  }

  // Reconstruction head over the requested positions (defaults to every
  // missing cell of the bundle).
  std::vector<int> pos_rows, pos_cols;
  if (recon) {
    pos_rows = recon->rows;
    pos_cols = recon->cols;
  } else {
    for (int r = 0; r < R; ++r) {
      for (int c = 0; c < C; ++c) {
        if (b.miss_mask(r, c) == 0.0) {
          pos_rows.push_back(r);
          pos_cols.push_back(c);
        }
      }
    }
  }
  const int n_pos = static_cast<int>(pos_rows.size());
  if (n_pos > 0) {
    std::vector<int> cell_ids(n_pos);
    for (int i = 0; i < n_pos; ++i) cell_ids[i] = pos_rows[i] * C + pos_cols[i];
    const int hm = tape.gather_rows(h, cell_ids);
    out.recon_num = tape.add_row(tape.matmul(hm, P("head.w_num")), P("head.b_num"));

    // Token distributions, grouped per column. During training only positions
    // with categorical ground truth participate; at inference every position
    // in a column with observed vocabulary gets a distribution.
    std::map<int, std::vector<int>> by_col;
    for (int i = 0; i < n_pos; ++i) {
      const int c = pos_cols[i];
      if (c < 0 || c >= static_cast<int>(input.vocabs.size())) continue;
      if (input.vocabs[c].tokens.empty()) continue;
      if (recon && recon->kind[i] != 2) continue;
      by_col[c].push_back(i);
    }
    for (const auto& [c, position_index] : by_col) {
      typename GraphOutputs<Scalar>::CatGroup group;
      group.col = c;
      group.position_index = position_index;
      std::vector<int> ids;
      ids.reserve(position_index.size());
      for (int i : position_index) ids.push_back(pos_rows[i] * C + pos_cols[i]);
      const int hc = tape.gather_rows(h, ids);
      const int tokf = tape.leaf(input.vocabs[c].feats.template cast<Scalar>());
      const int scores = tape.matmul_nt(tape.matmul(hc, P("head.W_tok")), tokf);
      out.cat_prob_nodes.push_back(tape.row_softmax(scores));
      out.cat_groups.push_back(std::move(group));
    }
  }

  // Joint loss: class + reconstruction terms. The sector term is appended by
  // the caller, which knows the table's sector id.
  if (loss_weights) {
    const JointLossWeights& w = *loss_weights;
    int loss = -1;
    auto add_term = [&](int node, double weight) {
      const int scaled = tape.scale(node, static_cast<Scalar>(weight));
      loss = (loss < 0) ? scaled : tape.add(loss, scaled);
    };
    if (episode && !episode->query_labels.empty() && out.class_probs >= 0) {
      require(episode->query_labels.size() == episode->query_rows.size(),
              ErrorCode::InvalidLabel, "query labels size mismatch");
      for (int y : episode->query_labels) {
        require(y >= 0 && y < episode->n_classes, ErrorCode::InvalidLabel,
                "query label out of range");
      }
      add_term(tape.nll_probs(out.class_probs, episode->query_labels), w.w_class);
    }
    if (recon) {
      std::vector<int> num_idx;
      std::vector<double> num_targets;
      for (std::size_t i = 0; i < recon->rows.size(); ++i) {
        if (recon->kind[i] == 1) {
          num_idx.push_back(static_cast<int>(i));
          num_targets.push_back(recon->numeric_scaled[i]);
        }
      }
      int n_recon_terms = static_cast<int>(num_idx.size());
      for (const auto& g : out.cat_groups) n_recon_terms += static_cast<int>(g.position_index.size());
      if (n_recon_terms > 0) {
        int recon_sum = -1;
        if (!num_idx.empty()) {
          const int pred = tape.gather_rows(out.recon_num, num_idx);
          Mat targets(static_cast<Eigen::Index>(num_targets.size()), 1);
          for (std::size_t i = 0; i < num_targets.size(); ++i) {
            targets(static_cast<Eigen::Index>(i), 0) = static_cast<Scalar>(num_targets[i]);
          }
          recon_sum = tape.huber_sum(pred, std::move(targets));
        }
        for (std::size_t gi = 0; gi < out.cat_groups.size(); ++gi) {
          const auto& g = out.cat_groups[gi];
          std::vector<int> truth;
          truth.reserve(g.position_index.size());
          for (int i : g.position_index) truth.push_back(recon->token_index[i]);
          const int ce = tape.scale(tape.nll_probs(out.cat_prob_nodes[gi], truth),
                                    static_cast<Scalar>(g.position_index.size()));
          recon_sum = (recon_sum < 0) ? ce : tape.add(recon_sum, ce);
        }
        add_term(tape.scale(recon_sum, static_cast<Scalar>(1.0 / n_recon_terms)), w.w_recon);
      }
    }
    out.loss = loss;
  }

  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Scalar>
int append_sector_loss(Tape<Scalar>& tape, const GraphOutputs<Scalar>& out, int loss,
                       int sector_id, double w_sector) {
  if (sector_id < 0 || out.sector_dist < 0) return loss;
  const int term =
      tape.scale(tape.nll_probs(out.sector_dist, {sector_id}), static_cast<Scalar>(w_sector));
  return loss < 0 ? term : tape.add(loss, term);
}

template <typename Scalar>
double item_loss_and_grads(const Model<Scalar>& model, const AdapterParams<Scalar>* adapters,
                           ClassHeadParams<Scalar>* head_override, const TrainItem& item,
                           const JointLossWeights& weights,
                           std::map<std::string, DenseMat<Scalar>>* grads, double grad_scale,
                           const std::vector<std::string>* trainable) {
  Tape<Scalar> tape;
  ParamBindings<Scalar> bindings;
  const Episode* ep = item.episode ? &*item.episode : nullptr;
  const ReconTask* rt = item.recon.rows.empty() ? nullptr : &item.recon;
  GraphOutputs<Scalar> out =
      build_graph(tape, model, adapters, head_override, item.input, ep, rt, &weights,
                  grads ? &bindings : nullptr);
  int loss = out.loss;
  loss = append_sector_loss(tape, out, loss, item.sector_id, weights.w_sector);
  if (loss < 0) return 0.0;
  const double value = static_cast<double>(tape.val(loss)(0, 0));
  require(std::isfinite(value), ErrorCode::NonFiniteLoss, "joint loss is not finite");
  if (grads) {
    tape.backward(loss);
    for (std::size_t i = 0; i < bindings.set.items.size(); ++i) {
      const auto& [name, mat] = bindings.set.items[i];
      if (trainable) {
        bool keep = false;
        for (const auto& prefix : *trainable) {
          if (name.rfind(prefix, 0) == 0) {
            keep = true;
            break;
          }
        }
        if (!keep) continue;
      }
      auto& slot = (*grads)[name];
      const auto& g = tape.grad(bindings.node_ids[i]);
      if (slot.size() == 0) {
        slot = g * static_cast<Scalar>(grad_scale);
      } else {
        slot += g * static_cast<Scalar>(grad_scale);
      }
    }
  }
  return value;
}

}  // namespace

template <typename Scalar>
double batch_loss_and_grads(const Model<Scalar>& model, const AdapterParams<Scalar>* adapters,
                            ClassHeadParams<Scalar>* head_override,
                            const std::vector<TrainItem>& batch,
                            const JointLossWeights& weights,
                            std::map<std::string, DenseMat<Scalar>>* grads,
                            const std::vector<std::string>* trainable) {
  require(!batch.empty(), ErrorCode::EmptyInput, "empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      total += item_loss_and_grads(model, adapters, head_override, batch[i], weights, grads,
                                   scale, trainable);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFiniteLoss) {
        throw_error(ErrorCode::NonFiniteLoss,
                    "non-finite loss at batch item " + std::to_string(i), (std::int64_t)i);
      }
      throw;
    }
  }
  return total * scale;
}

template <typename Scalar>
JointOutput forward(const Model<Scalar>& model, const ModelInput& input,
                    const std::optional<Episode>& episode,
                    const AdapterParams<Scalar>* adapters,
                    ClassHeadParams<Scalar>* head_override) {
  model.forward_invocations += 1;
  Tape<Scalar> tape;
  const Episode* ep = episode ? &*episode : nullptr;
  GraphOutputs<Scalar> out =
      build_graph<Scalar>(tape, model, adapters, head_override, input, ep, nullptr, nullptr,
                          nullptr);

  JointOutput jo;
  jo.sector_dist = tape.val(out.sector_dist).row(0).transpose().template cast<double>();
  if (out.class_probs >= 0) {
    jo.class_probs = tape.val(out.class_probs).template cast<double>();
  }
  if (out.recon_num >= 0) {
    const SignalBundle& b = input.bundle;
    std::vector<std::pair<int, int>> positions;
    for (int r = 0; r < b.n_rows; ++r) {
      for (int c = 0; c < b.n_cols; ++c) {
        if (b.miss_mask(r, c) == 0.0) positions.emplace_back(r, c);
      }
    }
    const auto& preds = tape.val(out.recon_num);
    jo.recon.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
      auto& rp = jo.recon[i];
      rp.row = positions[i].first;
      rp.col = positions[i].second;
      rp.numeric_scaled = static_cast<double>(preds(static_cast<Eigen::Index>(i), 0));
      rp.numeric_value = rp.numeric_scaled * b.col_scale[rp.col] + b.col_center[rp.col];
    }
    for (std::size_t gi = 0; gi < out.cat_groups.size(); ++gi) {
      const auto& g = out.cat_groups[gi];
      const auto& probs = tape.val(out.cat_prob_nodes[gi]);
      for (std::size_t j = 0; j < g.position_index.size(); ++j) {
        auto& rp = jo.recon[g.position_index[j]];
        rp.token_probs.resize(probs.cols());
        for (Eigen::Index t = 0; t < probs.cols(); ++t) {
          rp.token_probs[t] = static_cast<double>(probs(static_cast<Eigen::Index>(j), t));
        }
      }
    }
  }
  return jo;
}

template <typename Scalar>
std::vector<std::pair<int, double>> identify_sector(const RawTable& table,
                                                    const Model<Scalar>& model, int k) {
  require(k >= 1, ErrorCode::ConfigError, "k must be >= 1");
  ModelInput input = make_input(table, model.encoder);
  input.bundle = zero_semantics(std::move(input.bundle));
  const JointOutput out = forward(model, input);
  std::vector<std::pair<int, double>> ranked;
  ranked.reserve(out.sector_dist.size());
  for (Eigen::Index s = 0; s < out.sector_dist.size(); ++s) {
    ranked.emplace_back(static_cast<int>(s), out.sector_dist[s]);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k)));
  return ranked;
}

template <typename Scalar>
RawTable reconstruct_missing(const RawTable& table, const Model<Scalar>& model,
                             const AdapterParams<Scalar>* adapters) {
  ModelInput input = make_input(table, model.encoder);
  const JointOutput out = forward(model, input, std::nullopt, adapters);
  RawTable filled = table;

  // Column type by observed majority; ties and empty columns go numeric.
  std::vector<int> n_num(table.n_cols, 0), n_cat(table.n_cols, 0);
  for (int r = 0; r < table.n_rows; ++r) {
    for (int c = 0; c < table.n_cols; ++c) {
      const auto& cell = table.at(r, c);
      if (cell.is_numeric()) ++n_num[c];
      if (cell.is_categorical()) ++n_cat[c];
    }
  }
  for (const auto& rp : out.recon) {
    const bool categorical = n_cat[rp.col] > n_num[rp.col] && !rp.token_probs.empty();
    if (categorical) {
      const auto& vocab = input.vocabs[rp.col].tokens;
      int best = 0;
      for (std::size_t t = 1; t < rp.token_probs.size(); ++t) {
        if (rp.token_probs[t] > rp.token_probs[best]) best = static_cast<int>(t);
      }
      filled.at(rp.row, rp.col) = CellValue::categorical(vocab[best]);
    } else {
      double v = rp.numeric_value;
      if (!std::isfinite(v)) v = 0.0;
      filled.at(rp.row, rp.col) = CellValue::numeric(v);
    }
  }
  return filled;
}

template <typename Scalar>
std::vector<ColumnMatch> cross_correlations(const SourceBundle& sources,
                                            const Model<Scalar>& model) {
  require(sources.tables.size() >= 2, ErrorCode::BundleTooSmall,
          "cross_correlations needs >= 2 tables");
  std::vector<Eigen::MatrixXd> reps;
  reps.reserve(sources.tables.size());
  for (const auto& table : sources.tables) {
    ModelInput input = make_input(table, model.encoder);
    Tape<Scalar> tape;
    GraphOutputs<Scalar> out =
        build_graph<Scalar>(tape, model, nullptr, nullptr, input, nullptr, nullptr, nullptr,
                            nullptr);
    reps.push_back(tape.val(out.col_states).template cast<double>());
  }
  std::vector<ColumnMatch> matches;
  for (std::size_t a = 0; a < reps.size(); ++a) {
    for (std::size_t b2 = a + 1; b2 < reps.size(); ++b2) {
      for (Eigen::Index i = 0; i < reps[a].rows(); ++i) {
        for (Eigen::Index j = 0; j < reps[b2].rows(); ++j) {
          const double na = reps[a].row(i).norm();
          const double nb = reps[b2].row(j).norm();
          double score = 0.0;
          if (na > 0.0 && nb > 0.0) {
            score = reps[a].row(i).dot(reps[b2].row(j)) / (na * nb);
            score = std::clamp(score, -1.0, 1.0);
          }
          matches.push_back({static_cast<int>(a), static_cast<int>(i), static_cast<int>(b2),
                             static_cast<int>(j), score});
        }
      }
    }
  }
  std::stable_sort(matches.begin(), matches.end(), [](const ColumnMatch& x, const ColumnMatch& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::tie(x.table_a, x.col_a, x.table_b, x.col_b) <
           std::tie(y.table_a, y.col_a, y.table_b, y.col_b);
  });
  return matches;
}

double grad_check(Model<double>& model, const std::vector<TrainItem>& batch, double epsilon,
                  const JointLossWeights& weights, int n_coords, std::uint64_t seed) {
  require(epsilon >= 1e-7 && epsilon <= 1e-3, ErrorCode::ConfigError,
          "epsilon out of [1e-7, 1e-3]");
  std::map<std::string, DenseMat<double>> grads;
  batch_loss_and_grads<double>(model, nullptr, nullptr, batch, weights, &grads, nullptr);

  ParamSet<double> set = model.params.param_set();
  Rng rng(derive_seed(seed, 0x67726164));
  double max_rel = 0.0;
  for (int t = 0; t < n_coords; ++t) {
    const auto pi = static_cast<std::size_t>(rng.below(set.items.size()));
    auto& [name, mat] = set.items[pi];
    const auto ci = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(mat->size())));
    double* slot = mat->data() + ci;
    const double orig = *slot;
    *slot = orig + epsilon;
    const double lp = batch_loss_and_grads<double>(model, nullptr, nullptr, batch, weights,
                                                   nullptr, nullptr);
    *slot = orig - epsilon;
    const double lm = batch_loss_and_grads<double>(model, nullptr, nullptr, batch, weights,
                                                   nullptr, nullptr);
    *slot = orig;
    const double numeric = (lp - lm) / (2.0 * epsilon);
    double analytic = 0.0;
    auto it = grads.find(name);
    if (it != grads.end()) analytic = *(it->second.data() + ci);
    // Central differences carry truncation noise around 1e-9 absolute here,
    // so coordinates smaller than 1e-3 are held to an absolute comparison;
    // anything larger is checked relatively.
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
    const double rel = std::abs(numeric - analytic) / denom;
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Explicit instantiations

template struct ModelParams<float>;
template struct ModelParams<double>;

template Model<float> init_model<float>(const ModelDims&, const EncoderConfig&, std::uint64_t);
template Model<double> init_model<double>(const ModelDims&, const EncoderConfig&, std::uint64_t);
template AdapterParams<float> init_adapters<float>(const ModelDims&, std::uint64_t);
template AdapterParams<double> init_adapters<double>(const ModelDims&, std::uint64_t);
template std::uint64_t param_checksum<float>(ParamSet<float>);
template std::uint64_t param_checksum<double>(ParamSet<double>);

template GraphOutputs<float> build_graph<float>(Tape<float>&, const Model<float>&,
                                                const AdapterParams<float>*,
                                                ClassHeadParams<float>*, const ModelInput&,
                                                const Episode*, const ReconTask*,
                                                const JointLossWeights*, ParamBindings<float>*);
template GraphOutputs<double> build_graph<double>(Tape<double>&, const Model<double>&,
                                                  const AdapterParams<double>*,
                                                  ClassHeadParams<double>*, const ModelInput&,
                                                  const Episode*, const ReconTask*,
                                                  const JointLossWeights*,
                                                  ParamBindings<double>*);

template double batch_loss_and_grads<float>(const Model<float>&, const AdapterParams<float>*,
                                            ClassHeadParams<float>*,
                                            const std::vector<TrainItem>&,
                                            const JointLossWeights&,
                                            std::map<std::string, DenseMat<float>>*,
                                            const std::vector<std::string>*);
template double batch_loss_and_grads<double>(const Model<double>&, const AdapterParams<double>*,
                                             ClassHeadParams<double>*,
                                             const std::vector<TrainItem>&,
                                             const JointLossWeights&,
                                             std::map<std::string, DenseMat<double>>*,
                                             const std::vector<std::string>*);

template JointOutput forward<float>(const Model<float>&, const ModelInput&,
                                    const std::optional<Episode>&, const AdapterParams<float>*,
                                    ClassHeadParams<float>*);
template JointOutput forward<double>(const Model<double>&, const ModelInput&,
                                     const std::optional<Episode>&, const AdapterParams<double>*,
                                     ClassHeadParams<double>*);

template std::vector<std::pair<int, double>> identify_sector<float>(const RawTable&,
                                                                    const Model<float>&, int);
template std::vector<std::pair<int, double>> identify_sector<double>(const RawTable&,
                                                                     const Model<double>&, int);

template RawTable reconstruct_missing<float>(const RawTable&, const Model<float>&,
                                             const AdapterParams<float>*);
template RawTable reconstruct_missing<double>(const RawTable&, const Model<double>&,
                                              const AdapterParams<double>*);

template std::vector<ColumnMatch> cross_correlations<float>(const SourceBundle&,
                                                            const Model<float>&);
template std::vector<ColumnMatch> cross_correlations<double>(const SourceBundle&,
                                                             const Model<double>&);

}  // namespace dlm
