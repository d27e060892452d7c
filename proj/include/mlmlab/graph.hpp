#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/rng.hpp"
#include "mlmlab/tensor.hpp"

namespace mlmlab {

// Reverse-mode autodiff over an explicit graph: forward calls append nodes,
// backward() walks them in reverse creation order (already topological).
// backward() recomputes all gradients from scratch, so repeated calls are
// idempotent.
//
// Reductions run in a fixed sequential order; internal parallelism (matmul)
// only splits independent output elements, so results are bit-reproducible.
template <class Real>
class Graph {
public:
  using Id = int;

  explicit Graph(std::uint64_t dropout_seed = 0) : dropout_seed_(dropout_seed) {}

  Id leaf(Tensor<Real> value, bool requires_grad = true) {
    return push(std::move(value), {}, nullptr, requires_grad);
  }

  Id constant(Tensor<Real> value) { return leaf(std::move(value), false); }

  const Tensor<Real>& value(Id id) const { return nodes_[check(id)].val; }
  const Tensor<Real>& grad(Id id) const { return nodes_[check(id)].grad; }

  // ---- elementwise / structural ops -------------------------------------

  Id add(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    require(A.same_shape(B), "add", A, B);
    Tensor<Real> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += B.v[i];
    return push(std::move(out), {a, b}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      g.accumulate(n.inputs[0], n.grad.v);
      g.accumulate(n.inputs[1], n.grad.v);
    });
  }

  // adds a [1 x c] row vector to every row
  Id add_row_broadcast(Id a, Id row) {
    const auto& A = value(a);
    const auto& R = value(row);
    require(R.rows == 1 && R.cols == A.cols, "add_row_broadcast", A, R);
    Tensor<Real> out = A;
    for (int r = 0; r < out.rows; ++r)
      for (int c = 0; c < out.cols; ++c) out.at(r, c) += R.at(0, c);
    return push(std::move(out), {a, row}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      g.accumulate(n.inputs[0], n.grad.v);
      auto& rg = g.nodes_[n.inputs[1]].grad;
      if (g.nodes_[n.inputs[1]].requires_grad)
        for (int r = 0; r < n.grad.rows; ++r)
          for (int c = 0; c < n.grad.cols; ++c) rg.at(0, c) += n.grad.at(r, c);
    });
  }

  // multiplies every row by a [1 x c] row vector (layer-norm gain)
  Id mul_row_broadcast(Id a, Id row) {
    const auto& A = value(a);
    const auto& R = value(row);
    require(R.rows == 1 && R.cols == A.cols, "mul_row_broadcast", A, R);
    Tensor<Real> out = A;
    for (int r = 0; r < out.rows; ++r)
      for (int c = 0; c < out.cols; ++c) out.at(r, c) *= R.at(0, c);
    return push(std::move(out), {a, row}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      const auto& A = g.nodes_[n.inputs[0]].val;
      const auto& R = g.nodes_[n.inputs[1]].val;
      if (g.nodes_[n.inputs[0]].requires_grad) {
        auto& ag = g.nodes_[n.inputs[0]].grad;
        for (int r = 0; r < n.grad.rows; ++r)
          for (int c = 0; c < n.grad.cols; ++c) ag.at(r, c) += n.grad.at(r, c) * R.at(0, c);
      }
      if (g.nodes_[n.inputs[1]].requires_grad) {
        auto& rg = g.nodes_[n.inputs[1]].grad;
        for (int r = 0; r < n.grad.rows; ++r)
          for (int c = 0; c < n.grad.cols; ++c) rg.at(0, c) += n.grad.at(r, c) * A.at(r, c);
      }
    });
  }

  Id scale(Id a, Real s) {
    Tensor<Real> out = value(a);
    for (auto& x : out.v) x *= s;
    return push(std::move(out), {a}, [s](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      for (std::size_t i = 0; i < n.grad.size(); ++i) ag.v[i] += s * n.grad.v[i];
    });
  }

  Id transpose(Id a) {
    const auto& A = value(a);
    Tensor<Real> out(A.cols, A.rows);
    for (int r = 0; r < A.rows; ++r)
      for (int c = 0; c < A.cols; ++c) out.at(c, r) = A.at(r, c);
    return push(std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      for (int r = 0; r < n.grad.rows; ++r)
        for (int c = 0; c < n.grad.cols; ++c) ag.at(c, r) += n.grad.at(r, c);
    });
  }

  Id reshape(Id a, int rows, int cols) {
    const auto& A = value(a);
    if (static_cast<std::size_t>(rows) * cols != A.size())
      throw std::invalid_argument("reshape: element count mismatch " + A.shape_str() + " -> [" +
                                  std::to_string(rows) + " x " + std::to_string(cols) + "]");
    Tensor<Real> out(rows, cols);
    out.v = A.v;
    return push(std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      g.accumulate(n.inputs[0], n.grad.v);
    });
  }

  Id slice_rows(Id a, int start, int count) {
    const auto& A = value(a);
    if (start < 0 || start + count > A.rows)
      throw std::invalid_argument("slice_rows out of range on " + A.shape_str());
    Tensor<Real> out(count, A.cols);
    for (int r = 0; r < count; ++r)
      for (int c = 0; c < A.cols; ++c) out.at(r, c) = A.at(start + r, c);
    return push(std::move(out), {a}, [start](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      for (int r = 0; r < n.grad.rows; ++r)
        for (int c = 0; c < n.grad.cols; ++c) ag.at(start + r, c) += n.grad.at(r, c);
    });
  }

  Id slice_cols(Id a, int start, int count) {
    const auto& A = value(a);
    if (start < 0 || start + count > A.cols)
      throw std::invalid_argument("slice_cols out of range on " + A.shape_str());
    Tensor<Real> out(A.rows, count);
    for (int r = 0; r < A.rows; ++r)
      for (int c = 0; c < count; ++c) out.at(r, c) = A.at(r, start + c);
    return push(std::move(out), {a}, [start](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      for (int r = 0; r < n.grad.rows; ++r)
        for (int c = 0; c < n.grad.cols; ++c) ag.at(r, start + c) += n.grad.at(r, c);
    });
  }

  Id concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    int cols = value(parts[0]).cols;
    int rows = 0;
    for (Id p : parts) {
      if (value(p).cols != cols) throw std::invalid_argument("concat_rows: column mismatch");
      rows += value(p).rows;
    }
    Tensor<Real> out(rows, cols);
    int r0 = 0;
    for (Id p : parts) {
      const auto& P = value(p);
      for (int r = 0; r < P.rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r0 + r, c) = P.at(r, c);
      r0 += P.rows;
    }
    return push(std::move(out), parts, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      int r0 = 0;
      for (Id p : n.inputs) {
        auto& pn = g.nodes_[p];
        if (pn.requires_grad)
          for (int r = 0; r < pn.val.rows; ++r)
            for (int c = 0; c < pn.val.cols; ++c) pn.grad.at(r, c) += n.grad.at(r0 + r, c);
        r0 += pn.val.rows;
      }
    });
  }

  Id concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    int rows = value(parts[0]).rows;
    int cols = 0;
    for (Id p : parts) {
      if (value(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += value(p).cols;
    }
    Tensor<Real> out(rows, cols);
    int c0 = 0;
    for (Id p : parts) {
      const auto& P = value(p);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < P.cols; ++c) out.at(r, c0 + c) = P.at(r, c);
      c0 += P.cols;
    }
    return push(std::move(out), parts, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      int c0 = 0;
      for (Id p : n.inputs) {
        auto& pn = g.nodes_[p];
        if (pn.requires_grad)
          for (int r = 0; r < pn.val.rows; ++r)
            for (int c = 0; c < pn.val.cols; ++c) pn.grad.at(r, c) += n.grad.at(r, c0 + c);
        c0 += pn.val.cols;
      }
    });
  }

  // ---- dense algebra ------------------------------------------------------

  Id matmul(Id a, Id b) {
    const auto& A = value(a);
    const auto& B = value(b);
    require(A.cols == B.rows, "matmul", A, B);
    Tensor<Real> out(A.rows, B.cols);
    matmul_into(A, B, out, false, false);
    return push(std::move(out), {a, b}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      const auto& A = g.nodes_[n.inputs[0]].val;
      const auto& B = g.nodes_[n.inputs[1]].val;
      if (g.nodes_[n.inputs[0]].requires_grad) {
        // dA += dOut * B^T
        Tensor<Real> tmp(A.rows, A.cols);
        matmul_into(n.grad, B, tmp, false, true);
        g.accumulate(n.inputs[0], tmp.v);
      }
      if (g.nodes_[n.inputs[1]].requires_grad) {
        // dB += A^T * dOut
        Tensor<Real> tmp(B.rows, B.cols);
        matmul_into(A, n.grad, tmp, true, false);
        g.accumulate(n.inputs[1], tmp.v);
      }
    });
  }

  // ---- nonlinearities ------------------------------------------------------

  Id gelu(Id a) {
    const auto& A = value(a);
    Tensor<Real> out = A;
    for (auto& x : out.v) {
      double xd = static_cast<double>(x);
      x = static_cast<Real>(0.5 * xd * (1.0 + std::erf(xd * kInvSqrt2)));
    }
    return push(std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      const auto& A = g.nodes_[n.inputs[0]].val;
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        double x = static_cast<double>(A.v[i]);
        double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                   x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
        ag.v[i] += n.grad.v[i] * static_cast<Real>(d);
      }
    });
  }

  Id softmax_rows(Id a) {
    const auto& A = value(a);
    Tensor<Real> out = A;
    for (int r = 0; r < out.rows; ++r) {
      Real mx = out.at(r, 0);
      for (int c = 1; c < out.cols; ++c) mx = std::max(mx, out.at(r, c));
      Real sum = 0;
      for (int c = 0; c < out.cols; ++c) {
        out.at(r, c) = std::exp(out.at(r, c) - mx);
        sum += out.at(r, c);
      }
      for (int c = 0; c < out.cols; ++c) out.at(r, c) /= sum;
    }
    return push(std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      const auto& Y = n.val;
      for (int r = 0; r < Y.rows; ++r) {
        Real dot = 0;
        for (int c = 0; c < Y.cols; ++c) dot += n.grad.at(r, c) * Y.at(r, c);
        for (int c = 0; c < Y.cols; ++c)
          ag.at(r, c) += Y.at(r, c) * (n.grad.at(r, c) - dot);
      }
    });
  }

  // row-wise normalization without affine terms; compose with
  // mul_row_broadcast / add_row_broadcast for gain and bias
  Id layer_norm_rows(Id a, Real eps = Real(1e-5)) {
    const auto& A = value(a);
    Tensor<Real> out(A.rows, A.cols);
    Tensor<Real> inv_std(A.rows, 1);
    for (int r = 0; r < A.rows; ++r) {
      Real mean = 0;
      for (int c = 0; c < A.cols; ++c) mean += A.at(r, c);
      mean /= static_cast<Real>(A.cols);
      Real var = 0;
      for (int c = 0; c < A.cols; ++c) {
        Real d = A.at(r, c) - mean;
        var += d * d;
      }
      var /= static_cast<Real>(A.cols);
      Real is = Real(1) / std::sqrt(var + eps);
      inv_std.at(r, 0) = is;
      for (int c = 0; c < A.cols; ++c) out.at(r, c) = (A.at(r, c) - mean) * is;
    }
    return push(std::move(out), {a}, [inv_std](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      const auto& Y = n.val;
      auto cols = static_cast<Real>(Y.cols);
      for (int r = 0; r < Y.rows; ++r) {
        Real mean_dy = 0, mean_dyy = 0;
        for (int c = 0; c < Y.cols; ++c) {
          mean_dy += n.grad.at(r, c);
          mean_dyy += n.grad.at(r, c) * Y.at(r, c);
        }
        mean_dy /= cols;
        mean_dyy /= cols;
        for (int c = 0; c < Y.cols; ++c)
          ag.at(r, c) +=
              inv_std.at(r, 0) * (n.grad.at(r, c) - mean_dy - Y.at(r, c) * mean_dyy);
      }
    });
  }

  // inverted dropout; rate 0 is the identity. Mask derives from the graph's
  // dropout seed and a per-call counter, so replays are exact.
  Id dropout(Id a, double rate) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must be in [0,1)");
    const auto& A = value(a);
    if (rate == 0.0) return a;
    Rng rng(Rng::derive(dropout_seed_, dropout_counter_++));
    std::vector<std::uint8_t> keep(A.size());
    Tensor<Real> out = A;
    auto scale = static_cast<Real>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < A.size(); ++i) {
      keep[i] = rng.next_double() >= rate ? 1 : 0;
      out.v[i] = keep[i] ? A.v[i] * scale : Real(0);
    }
    return push(std::move(out), {a}, [keep, scale](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        if (keep[i]) ag.v[i] += n.grad.v[i] * scale;
    });
  }

  // gathers rows of `table` by index; duplicate ids accumulate gradient
  Id embedding_rows(Id table, std::vector<int> ids) {
    const auto& T = value(table);
    for (int id : ids)
      if (id < 0 || id >= T.rows)
        throw std::invalid_argument("embedding_rows: id " + std::to_string(id) +
                                    " out of range for " + T.shape_str());
    Tensor<Real> out(static_cast<int>(ids.size()), T.cols);
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (int c = 0; c < T.cols; ++c) out.at(static_cast<int>(r), c) = T.at(ids[r], c);
    return push(std::move(out), {table}, [ids](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& tg = g.nodes_[n.inputs[0]].grad;
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (int c = 0; c < n.grad.cols; ++c)
          tg.at(ids[r], c) += n.grad.at(static_cast<int>(r), c);
    });
  }

  // ---- losses / reductions --------------------------------------------------

  Id sum(Id a) {
    const auto& A = value(a);
    Tensor<Real> out(1, 1);
    Real s = 0;
    for (Real x : A.v) s += x;
    out.at(0, 0) = s;
    return push(std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.nodes_[n.inputs[0]].requires_grad) return;
      auto& ag = g.nodes_[n.inputs[0]].grad;
      for (auto& x : ag.v) x += n.grad.at(0, 0);
    });
  }

  // mean over flagged rows of -log softmax(logits)[target]; unflagged rows
  // contribute nothing to value or gradient
  Id cross_entropy_masked(Id logits, std::vector<int> targets,
                          std::vector<std::uint8_t> flags) {
    const auto& L = value(logits);
    if (static_cast<int>(targets.size()) != L.rows ||
        static_cast<int>(flags.size()) != L.rows)
      throw std::invalid_argument("cross_entropy_masked: targets/flags must have one entry per row");
    int flagged = 0;
    for (std::size_t r = 0; r < flags.size(); ++r) {
      if (!flags[r]) continue;
      ++flagged;
      if (targets[r] < 0 || targets[r] >= L.cols)
        throw std::invalid_argument("cross_entropy_masked: target out of class range");
    }
    if (flagged == 0) throw std::invalid_argument("cross_entropy_masked: zero flagged positions");
    Tensor<Real> out(1, 1);
    Real total = 0;
    for (int r = 0; r < L.rows; ++r) {
      if (!flags[static_cast<std::size_t>(r)]) continue;
      Real mx = L.at(r, 0);
      for (int c = 1; c < L.cols; ++c) mx = std::max(mx, L.at(r, c));
      Real lse = 0;
      for (int c = 0; c < L.cols; ++c) lse += std::exp(L.at(r, c) - mx);
      lse = std::log(lse) + mx;
      total += lse - L.at(r, targets[static_cast<std::size_t>(r)]);
    }
    out.at(0, 0) = total / static_cast<Real>(flagged);
    return push(std::move(out), {logits},
                [targets, flags, flagged](Graph& g, int self) {
                  auto& n = g.nodes_[self];
                  if (!g.nodes_[n.inputs[0]].requires_grad) return;
                  auto& lg = g.nodes_[n.inputs[0]].grad;
                  const auto& L = g.nodes_[n.inputs[0]].val;
                  Real go = n.grad.at(0, 0) / static_cast<Real>(flagged);
                  for (int r = 0; r < L.rows; ++r) {
                    if (!flags[static_cast<std::size_t>(r)]) continue;
                    Real mx = L.at(r, 0);
                    for (int c = 1; c < L.cols; ++c) mx = std::max(mx, L.at(r, c));
                    Real sum = 0;
                    for (int c = 0; c < L.cols; ++c) sum += std::exp(L.at(r, c) - mx);
                    for (int c = 0; c < L.cols; ++c) {
                      Real p = std::exp(L.at(r, c) - mx) / sum;
                      lg.at(r, c) +=
                          go * (p - (c == targets[static_cast<std::size_t>(r)] ? Real(1) : Real(0)));
                    }
                  }
                });
  }

  // ---- backward --------------------------------------------------------------

  void backward(Id loss) {
    auto& ln = nodes_[check(loss)];
    if (ln.val.rows != 1 || ln.val.cols != 1)
      throw std::invalid_argument("backward: loss must be scalar, got " + ln.val.shape_str());
    zero_grad();
    ln.grad.at(0, 0) = Real(1);
    for (int i = loss; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(*this, i);
  }

  void zero_grad() {
    for (auto& n : nodes_)
      std::fill(n.grad.v.begin(), n.grad.v.end(), Real(0));
  }

  std::size_t node_count() const { return nodes_.size(); }

private:
  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr double kInvSqrt2Pi = 0.39894228040143267794;

  struct Node {
    Tensor<Real> val;
    Tensor<Real> grad;
    std::vector<Id> inputs;
    std::function<void(Graph&, int)> back;
    bool requires_grad = false;
  };

  Id push(Tensor<Real> val, std::vector<Id> inputs, std::function<void(Graph&, int)> back,
          bool leaf_requires_grad = false) {
    Node n;
    n.grad = Tensor<Real>(val.rows, val.cols);
    n.val = std::move(val);
    n.inputs = std::move(inputs);
    n.requires_grad = leaf_requires_grad;
    for (Id i : n.inputs)
      if (nodes_[check(i)].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  void accumulate(Id id, const std::vector<Real>& g) {
    auto& n = nodes_[check(id)];
    if (!n.requires_grad) return;
    for (std::size_t i = 0; i < g.size(); ++i) n.grad.v[i] += g[i];
  }

  int check(Id id) const {
    if (id < 0 || id >= static_cast<Id>(nodes_.size()))
      throw std::out_of_range("invalid graph node id");
    return id;
  }

  static void require(bool ok, const char* op, const Tensor<Real>& a, const Tensor<Real>& b) {
    if (!ok)
      throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                  " and " + b.shape_str());
  }

  // C = op(A) * op(B); transposition applied logically
  static void matmul_into(const Tensor<Real>& A, const Tensor<Real>& B, Tensor<Real>& C,
                          bool trans_a, bool trans_b) {
    int M = trans_a ? A.cols : A.rows;
    int K = trans_a ? A.rows : A.cols;
    int N = trans_b ? B.rows : B.cols;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
      Real* crow = &C.v[static_cast<std::size_t>(i) * N];
      std::fill(crow, crow + N, Real(0));
      for (int k = 0; k < K; ++k) {
        Real a = trans_a ? A.at(k, i) : A.at(i, k);
        if (trans_b) {
          for (int j = 0; j < N; ++j) crow[j] += a * B.at(j, k);
        } else {
          const Real* brow = &B.v[static_cast<std::size_t>(k) * B.cols];
          for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
      }
    }
  }

  std::vector<Node> nodes_;
  std::uint64_t dropout_seed_;
  std::uint64_t dropout_counter_ = 0;
};

}  // namespace mlmlab
