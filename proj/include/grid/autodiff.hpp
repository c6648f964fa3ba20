#pragma once

// Reverse-mode automatic differentiation on a flat tape. Node values are dense
// row-major Eigen matrices; ops append nodes and capture parent indices, backward()
// walks the tape once in reverse. The tape is created per forward pass and thrown
// away afterwards, so ids are plain ints and nothing is reference counted.

#include <cassert>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace grid::ad {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tape {
public:
  using M = Mat<T>;

  int leaf(M value) {
    nodes_.push_back({std::move(value), {}, {}});
    return last();
  }

  const M& val(int id) const { return nodes_[static_cast<std::size_t>(id)].val; }

  // Gradient of the last backward() seed w.r.t. node id; zeros when the node is
  // not on any path to the seed.
  M grad(int id) const {
    const NodeRec& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) return M::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- primitive ops ----

  // C = op_a(A) * op_b(B) with optional transposes.
  int matmul(int a, int b, bool ta = false, bool tb = false) {
    const M& A = val(a);
    const M& B = val(b);
    M out;
    if (!ta && !tb) out = A * B;
    else if (ta && !tb) out = A.transpose() * B;
    else if (!ta && tb) out = A * B.transpose();
    else out = A.transpose() * B.transpose();
    return push(std::move(out), [a, b, ta, tb](Tape& t, const M& g) {
      const M& A = t.val(a);
      const M& B = t.val(b);
      if (!ta && !tb) {
        t.acc(a, g * B.transpose());
        t.acc(b, A.transpose() * g);
      } else if (ta && !tb) {
        t.acc(a, B * g.transpose());
        t.acc(b, A * g);
      } else if (!ta && tb) {
        t.acc(a, g * B);
        t.acc(b, g.transpose() * A);
      } else {
        t.acc(a, B.transpose() * g.transpose());
        t.acc(b, g.transpose() * A.transpose());
      }
    });
  }

  int add(int a, int b) {
    return push(val(a) + val(b), [a, b](Tape& t, const M& g) {
      t.acc(a, g);
      t.acc(b, g);
    });
  }

  // A (n x d) + row vector v (1 x d) broadcast over rows.
  int add_rowvec(int a, int v) {
    M out = val(a);
    out.rowwise() += Eigen::Matrix<T, 1, Eigen::Dynamic>(val(v).row(0));
    return push(std::move(out), [a, v](Tape& t, const M& g) {
      t.acc(a, g);
      t.acc(v, g.colwise().sum());
    });
  }

  // n copies of the row vector v (1 x d).
  int repeat_row(int v, Eigen::Index n) {
    M out(n, val(v).cols());
    out.rowwise() = Eigen::Matrix<T, 1, Eigen::Dynamic>(val(v).row(0));
    return push(std::move(out), [v](Tape& t, const M& g) {
      t.acc(v, g.colwise().sum());
    });
  }

  int scale(int a, T c) {
    return push(val(a) * c, [a, c](Tape& t, const M& g) { t.acc(a, g * c); });
  }

  int hadamard(int a, int b) {
    return push(val(a).cwiseProduct(val(b)), [a, b](Tape& t, const M& g) {
      t.acc(a, g.cwiseProduct(t.val(b)));
      t.acc(b, g.cwiseProduct(t.val(a)));
    });
  }

  // Rows of A scaled by the column vector s (n x 1).
  int row_scale(int a, int s) {
    M out = val(a).array().colwise() * val(s).col(0).array();
    return push(std::move(out), [a, s](Tape& t, const M& g) {
      t.acc(a, g.array().colwise() * t.val(s).col(0).array());
      t.acc(s, g.cwiseProduct(t.val(a)).rowwise().sum());
    });
  }

  int concat_rows(const std::vector<int>& parts) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = val(parts.front()).cols();
    for (int p : parts) rows += val(p).rows();
    M out(rows, cols);
    Eigen::Index at = 0;
    for (int p : parts) {
      out.middleRows(at, val(p).rows()) = val(p);
      at += val(p).rows();
    }
    return push(std::move(out), [parts](Tape& t, const M& g) {
      Eigen::Index at = 0;
      for (int p : parts) {
        t.acc(p, g.middleRows(at, t.val(p).rows()));
        at += t.val(p).rows();
      }
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(parts.front()).rows();
    for (int p : parts) cols += val(p).cols();
    M out(rows, cols);
    Eigen::Index at = 0;
    for (int p : parts) {
      out.middleCols(at, val(p).cols()) = val(p);
      at += val(p).cols();
    }
    return push(std::move(out), [parts](Tape& t, const M& g) {
      Eigen::Index at = 0;
      for (int p : parts) {
        t.acc(p, g.middleCols(at, t.val(p).cols()));
        at += t.val(p).cols();
      }
    });
  }

  int slice_rows(int a, Eigen::Index r0, Eigen::Index n) {
    return push(M(val(a).middleRows(r0, n)), [a, r0, n](Tape& t, const M& g) {
      M ga = M::Zero(t.val(a).rows(), t.val(a).cols());
      ga.middleRows(r0, n) = g;
      t.acc(a, std::move(ga));
    });
  }

  int slice_cols(int a, Eigen::Index c0, Eigen::Index n) {
    return push(M(val(a).middleCols(c0, n)), [a, c0, n](Tape& t, const M& g) {
      M ga = M::Zero(t.val(a).rows(), t.val(a).cols());
      ga.middleCols(c0, n) = g;
      t.acc(a, std::move(ga));
    });
  }

  // out[k] = A[idx[k]]; duplicate indices allowed.
  int gather_rows(int a, std::vector<int> idx) {
    M out(static_cast<Eigen::Index>(idx.size()), val(a).cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = val(a).row(idx[k]);
    return push(std::move(out), [a, idx = std::move(idx)](Tape& t, const M& g) {
      M ga = M::Zero(t.val(a).rows(), t.val(a).cols());
      for (std::size_t k = 0; k < idx.size(); ++k)
        ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
      t.acc(a, std::move(ga));
    });
  }

  // out has out_rows rows; out[idx[k]] += A[k]. The scatter-add dual of gather_rows.
  int scatter_add_rows(int a, std::vector<int> idx, Eigen::Index out_rows) {
    M out = M::Zero(out_rows, val(a).cols());
    for (std::size_t k = 0; k < idx.size(); ++k)
      out.row(idx[k]) += val(a).row(static_cast<Eigen::Index>(k));
    return push(std::move(out), [a, idx = std::move(idx)](Tape& t, const M& g) {
      M ga(static_cast<Eigen::Index>(idx.size()), g.cols());
      for (std::size_t k = 0; k < idx.size(); ++k)
        ga.row(static_cast<Eigen::Index>(k)) = g.row(idx[k]);
      t.acc(a, std::move(ga));
    });
  }

  int row_softmax(int a) {
    M out = val(a);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      T mx = out.row(i).maxCoeff();
      out.row(i) = (out.row(i).array() - mx).exp();
      out.row(i) /= out.row(i).sum();
    }
    int id = push(std::move(out), {});
    set_backward(id, [a, id](Tape& t, const M& g) {
      const M& y = t.val(id);
      M ga(y.rows(), y.cols());
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        T dot = g.row(i).dot(y.row(i));
        ga.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
      t.acc(a, std::move(ga));
    });
    return id;
  }

  // Softmax over groups of rows of a column vector (E x 1). Every row index must
  // belong to exactly one segment; used for per-neighborhood attention weights.
  int segment_softmax(int a, std::vector<std::vector<int>> segments) {
    M out = val(a);
    for (const std::vector<int>& seg : segments) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int r : seg) mx = std::max(mx, out(r, 0));
      T sum = T(0);
      for (int r : seg) {
        out(r, 0) = std::exp(out(r, 0) - mx);
        sum += out(r, 0);
      }
      for (int r : seg) out(r, 0) /= sum;
    }
    int id = push(std::move(out), {});
    set_backward(id, [a, id, segments = std::move(segments)](Tape& t, const M& g) {
      const M& y = t.val(id);
      M ga = M::Zero(y.rows(), 1);
      for (const std::vector<int>& seg : segments) {
        T dot = T(0);
        for (int r : seg) dot += g(r, 0) * y(r, 0);
        for (int r : seg) ga(r, 0) = y(r, 0) * (g(r, 0) - dot);
      }
      t.acc(a, std::move(ga));
    });
    return id;
  }

  int relu(int a) {
    return push(val(a).cwiseMax(T(0)), [a](Tape& t, const M& g) {
      t.acc(a, (t.val(a).array() > T(0)).template cast<T>().matrix().cwiseProduct(g));
    });
  }

  int leaky_relu(int a, T slope) {
    M out = val(a).unaryExpr([slope](T x) { return x > T(0) ? x : slope * x; });
    return push(std::move(out), [a, slope](Tape& t, const M& g) {
      M m = t.val(a).unaryExpr([slope](T x) { return x > T(0) ? T(1) : slope; });
      t.acc(a, m.cwiseProduct(g));
    });
  }

  // ELU with alpha = 1.
  int elu(int a) {
    M out = val(a).unaryExpr([](T x) { return x > T(0) ? x : std::expm1(x); });
    int id = push(std::move(out), {});
    set_backward(id, [a, id](Tape& t, const M& g) {
      const M& y = t.val(id);
      M m = t.val(a).binaryExpr(y, [](T x, T yy) { return x > T(0) ? T(1) : yy + T(1); });
      t.acc(a, m.cwiseProduct(g));
    });
    return id;
  }

  // Per-row layer norm with affine parameters gamma, beta (both 1 x d).
  int layer_norm(int a, int gamma, int beta, T eps = T(1e-5)) {
    const M& x = val(a);
    const Eigen::Index n = x.rows(), d = x.cols();
    M xhat(n, d);
    M inv_std(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      T mu = x.row(i).mean();
      T var = (x.row(i).array() - mu).square().sum() / T(d);
      T is = T(1) / std::sqrt(var + eps);
      inv_std(i, 0) = is;
      xhat.row(i) = (x.row(i).array() - mu) * is;
    }
    M out = xhat;
    out.array().rowwise() *= Eigen::Array<T, 1, Eigen::Dynamic>(val(gamma).row(0).array());
    out.rowwise() += Eigen::Matrix<T, 1, Eigen::Dynamic>(val(beta).row(0));
    return push(std::move(out),
                [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& t, const M& g) {
      const Eigen::Index n = g.rows(), d = g.cols();
      const auto gam = t.val(gamma).row(0);
      M dxhat = g;
      dxhat.array().rowwise() *= Eigen::Array<T, 1, Eigen::Dynamic>(gam.array());
      M ga(n, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        T m1 = dxhat.row(i).mean();
        T m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
        ga.row(i) = ((dxhat.row(i).array() - m1) - xhat.row(i).array() * m2) * inv_std(i, 0);
      }
      t.acc(a, std::move(ga));
      t.acc(gamma, g.cwiseProduct(xhat).colwise().sum());
      t.acc(beta, g.colwise().sum());
    });
  }

  // Zero-pad A (n x d) to total_rows x d. The padding is constant, so gradients of the
  // padded region vanish.
  int pad_rows(int a, Eigen::Index total_rows) {
    M out = M::Zero(total_rows, val(a).cols());
    out.topRows(val(a).rows()) = val(a);
    return push(std::move(out), [a](Tape& t, const M& g) {
      t.acc(a, g.topRows(t.val(a).rows()));
    });
  }

  // Row-major flatten to 1 x (r*c).
  int reshape_row(int a) {
    const M& A = val(a);
    M out = Eigen::Map<const M>(A.data(), 1, A.size());
    return push(std::move(out), [a](Tape& t, const M& g) {
      const M& A = t.val(a);
      t.acc(a, Eigen::Map<const M>(g.data(), A.rows(), A.cols()));
    });
  }

  int sum_all(int a) {
    M out(1, 1);
    out(0, 0) = val(a).sum();
    return push(std::move(out), [a](Tape& t, const M& g) {
      t.acc(a, M::Constant(t.val(a).rows(), t.val(a).cols(), g(0, 0)));
    });
  }

  // Sum of absolute values. Subgradient 0 at exactly 0.
  int l1_norm(int a) {
    M out(1, 1);
    out(0, 0) = val(a).array().abs().sum();
    return push(std::move(out), [a](Tape& t, const M& g) {
      M s = t.val(a).unaryExpr([](T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
      t.acc(a, s * g(0, 0));
    });
  }

  int sum_squares(int a) {
    M out(1, 1);
    out(0, 0) = val(a).array().square().sum();
    return push(std::move(out), [a](Tape& t, const M& g) {
      t.acc(a, t.val(a) * (T(2) * g(0, 0)));
    });
  }

  // Numerically stable cross entropy from logits (1 x C): logsumexp(l) - l[target].
  int cross_entropy_logits(int logits, int target) {
    const M& l = val(logits);
    T mx = l.maxCoeff();
    T lse = mx + std::log((l.array() - mx).exp().sum());
    M out(1, 1);
    out(0, 0) = lse - l(0, target);
    return push(std::move(out), [logits, target, lse](Tape& t, const M& g) {
      const M& l = t.val(logits);
      M p = (l.array() - lse).exp();
      p(0, target) -= T(1);
      t.acc(logits, p * g(0, 0));
    });
  }

  // Seeds d(out)/d(out) = 1 and propagates to every reachable node. The seed must be 1x1.
  void backward(int seed) {
    NodeRec& s = nodes_[static_cast<std::size_t>(seed)];
    assert(s.val.rows() == 1 && s.val.cols() == 1);
    s.grad = M::Constant(1, 1, T(1));
    for (int id = seed; id >= 0; --id) {
      NodeRec& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

private:
  struct NodeRec {
    M val;
    M grad;
    std::function<void(Tape&, const M&)> backward;
  };

  int last() const { return static_cast<int>(nodes_.size()) - 1; }

  int push(M val, std::function<void(Tape&, const M&)> bwd) {
    nodes_.push_back({std::move(val), {}, std::move(bwd)});
    return last();
  }

  void set_backward(int id, std::function<void(Tape&, const M&)> bwd) {
    nodes_[static_cast<std::size_t>(id)].backward = std::move(bwd);
  }

  void acc(int id, M g) {
    NodeRec& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0)
      n.grad = std::move(g);
    else
      n.grad += g;
  }

  std::vector<NodeRec> nodes_;
};

}  // namespace grid::ad
