#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "dlm/common.hpp"

namespace dlm {

// Reverse-mode tape over dense Eigen matrices. Ops execute eagerly and record
// a backward closure; backward() replays them in reverse creation order.
// Scalars are 1x1 matrices. Group-structured ops (attention, pooling) take
// explicit index lists so the cell grid never has to be reshaped.
template <typename Scalar>
class Tape {
 public:
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Groups = std::vector<std::vector<int>>;

  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> backward;
    bool requires_grad = false;
    bool grad_seen = false;
  };

  std::vector<Node> nodes;

  const Mat& val(int id) const { return nodes[id].value; }
  Mat& grad(int id) { return nodes[id].grad; }

  int size() const { return static_cast<int>(nodes.size()); }

  int leaf(Mat value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    nodes.push_back(std::move(n));
    return size() - 1;
  }

  void add_grad(int id, const Mat& g) {
    Node& n = nodes[id];
    if (!n.requires_grad) return;
    n.grad += g;
    n.grad_seen = true;
  }

  // C = A * B
  int matmul(int a, int b) {
    Mat value = val(a) * val(b);
    return record({a, b}, std::move(value), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      if (t.nodes[a].requires_grad) t.nodes[a].grad.noalias() += g * t.val(b).transpose();
      if (t.nodes[b].requires_grad) t.nodes[b].grad.noalias() += t.val(a).transpose() * g;
      t.nodes[a].grad_seen = t.nodes[a].grad_seen || t.nodes[a].requires_grad;
      t.nodes[b].grad_seen = t.nodes[b].grad_seen || t.nodes[b].requires_grad;
    });
  }

  // C = A * B^T
  int matmul_nt(int a, int b) {
    Mat value = val(a) * val(b).transpose();
    return record({a, b}, std::move(value), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      if (t.nodes[a].requires_grad) {
        t.nodes[a].grad.noalias() += g * t.val(b);
        t.nodes[a].grad_seen = true;
      }
      if (t.nodes[b].requires_grad) {
        t.nodes[b].grad.noalias() += g.transpose() * t.val(a);
        t.nodes[b].grad_seen = true;
      }
    });
  }

  int add(int a, int b) {
    Mat value = val(a) + val(b);
    return record({a, b}, std::move(value), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      t.add_grad(a, g);
      t.add_grad(b, g);
    });
  }

  // A + row vector broadcast over rows.
  int add_row(int a, int row) {
    Mat value = val(a).rowwise() + val(row).row(0);
    return record({a, row}, std::move(value), [a, row](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      t.add_grad(a, g);
      if (t.nodes[row].requires_grad) {
        t.nodes[row].grad.row(0) += g.colwise().sum();
        t.nodes[row].grad_seen = true;
      }
    });
  }

  int cwise_mul(int a, int b) {
    Mat value = val(a).cwiseProduct(val(b));
    return record({a, b}, std::move(value), [a, b](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      if (t.nodes[a].requires_grad) t.add_grad(a, g.cwiseProduct(t.val(b)));
      if (t.nodes[b].requires_grad) t.add_grad(b, g.cwiseProduct(t.val(a)));
    });
  }

  int scale(int a, Scalar s) {
    Mat value = val(a) * s;
    return record({a}, std::move(value), [a, s](Tape& t, int out) {
      t.add_grad(a, t.nodes[out].grad * s);
    });
  }

  // A plus an outer product weights * m, where weights is a constant column
  // vector (one entry per row of A) and m is a trainable 1 x d row.
  int add_weighted_row(int a, int m, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights) {
    Mat value = val(a) + weights * val(m);
    auto w = std::make_shared<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(std::move(weights));
    return record({a, m}, std::move(value), [a, m, w](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      t.add_grad(a, g);
      if (t.nodes[m].requires_grad) {
        t.nodes[m].grad.noalias() += w->transpose() * g;
        t.nodes[m].grad_seen = true;
      }
    });
  }

  // Smooth tanh-form GELU.
  int gelu(int a) {
    const Scalar c = static_cast<Scalar>(0.7978845608028654);  // sqrt(2/pi)
    const Scalar k = static_cast<Scalar>(0.044715);
    Mat x = val(a);
    Mat inner = (c * (x.array() + k * x.array().cube())).matrix();
    Mat tanh_inner = inner.array().tanh().matrix();
    Mat value = (static_cast<Scalar>(0.5) * x.array() * (1 + tanh_inner.array())).matrix();
    auto cache = std::make_shared<std::pair<Mat, Mat>>(std::move(x), std::move(tanh_inner));
    return record({a}, std::move(value), [a, cache, c, k](Tape& t, int out) {
      if (!t.nodes[a].requires_grad) return;
      const Mat& g = t.nodes[out].grad;
      const auto& x = cache->first.array();
      const auto& th = cache->second.array();
      auto sech2 = 1 - th * th;
      auto dinner = c * (1 + 3 * k * x * x);
      Mat dx = (g.array() * (static_cast<Scalar>(0.5) * (1 + th) +
                             static_cast<Scalar>(0.5) * x * sech2 * dinner))
                   .matrix();
      t.add_grad(a, dx);
    });
  }

  // Per-row layer norm with affine parameters gamma, beta (1 x d rows).
  int layer_norm_rows(int a, int gamma, int beta, Scalar eps = static_cast<Scalar>(1e-5)) {
    const Mat& x = val(a);
    const auto d = static_cast<Scalar>(x.cols());
    Mat xhat(x.rows(), x.cols());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar mu = x.row(r).mean();
      const Scalar var = (x.row(r).array() - mu).square().sum() / d;
      const Scalar is = static_cast<Scalar>(1) / std::sqrt(var + eps);
      inv_std[r] = is;
      xhat.row(r) = (x.row(r).array() - mu) * is;
    }
    Mat value = xhat * val(gamma).row(0).asDiagonal();
    value.rowwise() += val(beta).row(0);
    auto cache = std::make_shared<std::pair<Mat, Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>>(
        std::move(xhat), std::move(inv_std));
    return record({a, gamma, beta}, std::move(value), [a, gamma, beta, cache](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      const Mat& xhat = cache->first;
      const auto& inv_std = cache->second;
      if (t.nodes[gamma].requires_grad) {
        t.nodes[gamma].grad.row(0) += (g.array() * xhat.array()).colwise().sum().matrix();
        t.nodes[gamma].grad_seen = true;
      }
      if (t.nodes[beta].requires_grad) {
        t.nodes[beta].grad.row(0) += g.colwise().sum();
        t.nodes[beta].grad_seen = true;
      }
      if (t.nodes[a].requires_grad) {
        const auto d = static_cast<Scalar>(xhat.cols());
        Mat dxhat = g * t.val(gamma).row(0).asDiagonal();
        Mat dx(xhat.rows(), xhat.cols());
        for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
          const Scalar sum_d = dxhat.row(r).sum();
          const Scalar sum_dx = (dxhat.row(r).array() * xhat.row(r).array()).sum();
          dx.row(r) = (inv_std[r] / d) *
                      (d * dxhat.row(r).array() - sum_d - xhat.row(r).array() * sum_dx);
        }
        t.add_grad(a, dx);
      }
    });
  }

  // Row-wise softmax.
  int row_softmax(int a) {
    const Mat& x = val(a);
    Mat p(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar m = x.row(r).maxCoeff();
      p.row(r) = (x.row(r).array() - m).exp();
      p.row(r) /= p.row(r).sum();
    }
    Mat value = p;
    auto cache = std::make_shared<Mat>(std::move(p));
    return record({a}, std::move(value), [a, cache](Tape& t, int out) {
      if (!t.nodes[a].requires_grad) return;
      const Mat& g = t.nodes[out].grad;
      const Mat& p = *cache;
      Mat dx(p.rows(), p.cols());
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const Scalar dot = (g.row(r).array() * p.row(r).array()).sum();
        dx.row(r) = p.row(r).array() * (g.row(r).array() - dot);
      }
      t.add_grad(a, dx);
    });
  }

  // Rows of A gathered by index (duplicates allowed).
  int gather_rows(int a, std::vector<int> idx) {
    const Mat& x = val(a);
    Mat value(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) value.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    auto ids = std::make_shared<std::vector<int>>(std::move(idx));
    return record({a}, std::move(value), [a, ids](Tape& t, int out) {
      if (!t.nodes[a].requires_grad) return;
      const Mat& g = t.nodes[out].grad;
      Mat& ga = t.nodes[a].grad;
      for (std::size_t i = 0; i < ids->size(); ++i) {
        ga.row((*ids)[i]) += g.row(static_cast<Eigen::Index>(i));
      }
      t.nodes[a].grad_seen = true;
    });
  }

  // Weighted mean of rows of x within each group: out.row(g) =
  // sum_i w_i x_i / sum_i w_i. Zero-weight groups fall back to a uniform
  // mean so degenerate tables stay well-defined.
  int group_weighted_mean(int x, const Groups& groups,
                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& weights) {
    const Mat& xv = val(x);
    Mat value(static_cast<Eigen::Index>(groups.size()), xv.cols());
    auto eff = std::make_shared<std::vector<std::vector<std::pair<int, Scalar>>>>();
    eff->resize(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
      Scalar total = 0;
      for (int i : groups[g]) total += weights[i];
      auto& entries = (*eff)[g];
      entries.reserve(groups[g].size());
      if (total > 0) {
        for (int i : groups[g]) entries.emplace_back(i, weights[i] / total);
      } else {
        const Scalar u = static_cast<Scalar>(1) / static_cast<Scalar>(groups[g].size());
        for (int i : groups[g]) entries.emplace_back(i, u);
      }
      value.row(static_cast<Eigen::Index>(g)).setZero();
      for (auto [i, w] : entries) value.row(static_cast<Eigen::Index>(g)) += w * xv.row(i);
    }
    return record({x}, std::move(value), [x, eff](Tape& t, int out) {
      if (!t.nodes[x].requires_grad) return;
      const Mat& g = t.nodes[out].grad;
      Mat& gx = t.nodes[x].grad;
      for (std::size_t gi = 0; gi < eff->size(); ++gi) {
        for (auto [i, w] : (*eff)[gi]) gx.row(i) += w * g.row(static_cast<Eigen::Index>(gi));
      }
      t.nodes[x].grad_seen = true;
    });
  }

  // Multi-head scaled-dot attention applied independently inside each group.
  // q, k, v are N x d with d divisible by n_heads; the output is N x d with
  // rows outside every group left zero.
  int group_attention(int q, int k, int v, const Groups& groups, int n_heads) {
    const Mat& qv = val(q);
    const Mat& kv = val(k);
    const Mat& vv = val(v);
    const int d = static_cast<int>(qv.cols());
    require(d % n_heads == 0, ErrorCode::DimensionMismatch, "d_model % n_heads != 0");
    const int dh = d / n_heads;
    const Scalar inv_sqrt = static_cast<Scalar>(1) / std::sqrt(static_cast<Scalar>(dh));

    Mat value = Mat::Zero(qv.rows(), d);
    // Cached softmax matrices, one per (group, head).
    auto probs = std::make_shared<std::vector<Mat>>();
    probs->reserve(groups.size() * static_cast<std::size_t>(n_heads));
    auto groups_copy = std::make_shared<Groups>(groups);

    for (const auto& g : groups) {
      const auto n = static_cast<Eigen::Index>(g.size());
      for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        Mat Q(n, dh), K(n, dh), V(n, dh);
        for (Eigen::Index i = 0; i < n; ++i) {
          Q.row(i) = qv.block(g[i], off, 1, dh);
          K.row(i) = kv.block(g[i], off, 1, dh);
          V.row(i) = vv.block(g[i], off, 1, dh);
        }
        Mat S = (Q * K.transpose()) * inv_sqrt;
        for (Eigen::Index r = 0; r < n; ++r) {
          const Scalar m = S.row(r).maxCoeff();
          S.row(r) = (S.row(r).array() - m).exp();
          S.row(r) /= S.row(r).sum();
        }
        Mat O = S * V;
        for (Eigen::Index i = 0; i < n; ++i) value.block(g[i], off, 1, dh) = O.row(i);
        probs->push_back(std::move(S));
      }
    }

    return record({q, k, v}, std::move(value),
                  [q, k, v, groups_copy, probs, n_heads, dh, inv_sqrt](Tape& t, int out) {
      const Mat& gout = t.nodes[out].grad;
      const Mat& qv = t.val(q);
      const Mat& kv = t.val(k);
      const Mat& vv = t.val(v);
      const bool need_q = t.nodes[q].requires_grad;
      const bool need_k = t.nodes[k].requires_grad;
      const bool need_v = t.nodes[v].requires_grad;
      std::size_t cache_at = 0;
      for (const auto& g : *groups_copy) {
        const auto n = static_cast<Eigen::Index>(g.size());
        for (int h = 0; h < n_heads; ++h) {
          const int off = h * dh;
          const Mat& P = (*probs)[cache_at++];
          Mat dO(n, dh), Q(n, dh), K(n, dh), V(n, dh);
          for (Eigen::Index i = 0; i < n; ++i) {
            dO.row(i) = gout.block(g[i], off, 1, dh);
            Q.row(i) = qv.block(g[i], off, 1, dh);
            K.row(i) = kv.block(g[i], off, 1, dh);
            V.row(i) = vv.block(g[i], off, 1, dh);
          }
          if (need_v) {
            Mat dV = P.transpose() * dO;
            for (Eigen::Index i = 0; i < n; ++i)
              t.nodes[v].grad.block(g[i], off, 1, dh) += dV.row(i);
          }
          if (need_q || need_k) {
            Mat dP = dO * V.transpose();
            Mat dS(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
              const Scalar dot = (dP.row(r).array() * P.row(r).array()).sum();
              dS.row(r) = P.row(r).array() * (dP.row(r).array() - dot);
            }
            dS *= inv_sqrt;
            if (need_q) {
              Mat dQ = dS * K;
              for (Eigen::Index i = 0; i < n; ++i)
                t.nodes[q].grad.block(g[i], off, 1, dh) += dQ.row(i);
            }
            if (need_k) {
              Mat dK = dS.transpose() * Q;
              for (Eigen::Index i = 0; i < n; ++i)
                t.nodes[k].grad.block(g[i], off, 1, dh) += dK.row(i);
            }
          }
        }
      }
      t.nodes[q].grad_seen = t.nodes[q].grad_seen || need_q;
      t.nodes[k].grad_seen = t.nodes[k].grad_seen || need_k;
      t.nodes[v].grad_seen = t.nodes[v].grad_seen || need_v;
    });
  }

  // Leading n columns of A.
  int left_cols(int a, int n) {
    Mat value = val(a).leftCols(n);
    return record({a}, std::move(value), [a, n](Tape& t, int out) {
      if (!t.nodes[a].requires_grad) return;
      t.nodes[a].grad.leftCols(n) += t.nodes[out].grad;
      t.nodes[a].grad_seen = true;
    });
  }

  // Subtracts the mean row: per-row residual against the set of rows.
  int center_rows(int a) {
    const Mat& x = val(a);
    Mat value = x.rowwise() - x.colwise().mean();
    return record({a}, std::move(value), [a](Tape& t, int out) {
      if (!t.nodes[a].requires_grad) return;
      const Mat& g = t.nodes[out].grad;
      Mat dx = g.rowwise() - g.colwise().mean();
      t.add_grad(a, dx);
    });
  }

  // A * s where s is a trainable 1x1 node.
  int mul_scalar_node(int a, int s) {
    Mat value = val(a) * val(s)(0, 0);
    return record({a, s}, std::move(value), [a, s](Tape& t, int out) {
      const Mat& g = t.nodes[out].grad;
      const Scalar sv = t.val(s)(0, 0);
      if (t.nodes[a].requires_grad) t.add_grad(a, g * sv);
      if (t.nodes[s].requires_grad) {
        t.nodes[s].grad(0, 0) += (g.array() * t.val(a).array()).sum();
        t.nodes[s].grad_seen = true;
      }
    });
  }

  // (1 - lambda) * P + lambda / n_cols, keeping row sums at 1.
  int mix_uniform(int p, Scalar lambda) {
    const Mat& pv = val(p);
    const Scalar u = lambda / static_cast<Scalar>(pv.cols());
    Mat value = (pv.array() * (1 - lambda) + u).matrix();
    return record({p}, std::move(value), [p, lambda](Tape& t, int out) {
      t.add_grad(p, t.nodes[out].grad * (1 - lambda));
    });
  }

  // Scalar node: -(1/n) * sum_i log max(P(i, labels[i]), floor).
  int nll_probs(int p, std::vector<int> labels,
                Scalar floor = static_cast<Scalar>(1e-12)) {
    const Mat& pv = val(p);
    require(static_cast<Eigen::Index>(labels.size()) == pv.rows(),
            ErrorCode::DimensionMismatch, "labels size != rows");
    const auto n = static_cast<Scalar>(labels.size());
    Scalar loss = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      loss -= std::log(std::max(pv(static_cast<Eigen::Index>(i), labels[i]), floor));
    }
    Mat value(1, 1);
    value(0, 0) = loss / n;
    auto labs = std::make_shared<std::vector<int>>(std::move(labels));
    return record({p}, std::move(value), [p, labs, floor, n](Tape& t, int out) {
      if (!t.nodes[p].requires_grad) return;
      const Scalar g = t.nodes[out].grad(0, 0);
      Mat& gp = t.nodes[p].grad;
      const Mat& pv = t.val(p);
      for (std::size_t i = 0; i < labs->size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const Scalar pi = std::max(pv(r, (*labs)[i]), floor);
        gp(r, (*labs)[i]) -= g / (n * pi);
      }
      t.nodes[p].grad_seen = true;
    });
  }

  // Scalar node: sum of the smooth (pseudo) Huber of pred - target.
  // delta^2 (sqrt(1 + (r/delta)^2) - 1): quadratic near zero, linear tails,
  // twice differentiable everywhere so finite-difference checks stay clean.
  int huber_sum(int pred, Mat target, Scalar delta = static_cast<Scalar>(1)) {
    const Mat& pv = val(pred);
    Mat diff = pv - target;
    Scalar loss = 0;
    const Scalar* dptr = diff.data();
    for (Eigen::Index i = 0; i < diff.size(); ++i) {
      const Scalar r = dptr[i] / delta;
      loss += delta * delta * (std::sqrt(1 + r * r) - 1);
    }
    Mat value(1, 1);
    value(0, 0) = loss;
    auto dcache = std::make_shared<Mat>(std::move(diff));
    return record({pred}, std::move(value), [pred, dcache, delta](Tape& t, int out) {
      if (!t.nodes[pred].requires_grad) return;
      const Scalar g = t.nodes[out].grad(0, 0);
      const Mat& diff = *dcache;
      Mat dp(diff.rows(), diff.cols());
      const Scalar* dptr = diff.data();
      Scalar* outp = dp.data();
      for (Eigen::Index i = 0; i < diff.size(); ++i) {
        const Scalar r = dptr[i] / delta;
        outp[i] = dptr[i] / std::sqrt(1 + r * r);
      }
      t.add_grad(pred, dp * g);
    });
  }

  // Transform summary-scale inputs into a bounded range: sign(x) * log1p(|x|).
  int signed_log1p(int a) {
    const Mat& x = val(a);
    Mat value = (x.array().sign() * (x.array().abs() + 1).log()).matrix();
    return record({a}, std::move(value), [a](Tape& t, int out) {
      if (!t.nodes[a].requires_grad) return;
      const Mat& g = t.nodes[out].grad;
      const Mat& x = t.val(a);
      Mat dx = (g.array() / (x.array().abs() + 1)).matrix();
      t.add_grad(a, dx);
    });
  }

  void backward(int loss_id) {
    Node& top = nodes[loss_id];
    require(top.value.size() == 1, ErrorCode::Internal, "backward target must be scalar");
    if (!top.requires_grad) return;
    top.grad.setOnes();
    top.grad_seen = true;
    for (int i = loss_id; i >= 0; --i) {
      Node& n = nodes[i];
      if (n.backward && n.grad_seen) n.backward(*this);
    }
  }

 private:
  int record(std::initializer_list<int> inputs, Mat value,
             std::function<void(Tape&, int)> back) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes[i].requires_grad;
    Node n;
    n.value = std::move(value);
    n.requires_grad = needs;
    if (needs) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
      const int out = size();
      n.backward = [back = std::move(back), out](Tape& t) { back(t, out); };
    }
    nodes.push_back(std::move(n));
    return size() - 1;
  }
};

}  // namespace dlm
