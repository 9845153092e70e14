#pragma once

// Dense row-major matrices, a tensor-level reverse-mode tape and Adam.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "plcbinx/common.hpp"

namespace plcbinx::learn {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// mt19937_64 is fully specified by the standard; distributions are not, so
// the derived draws are computed here.
using plcbinx::Rng;

struct Param {
  std::string name;
  Mat value, grad, m, v;

  Param() = default;
  Param(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), value(r, c), grad(r, c), m(r, c), v(r, c) {}

  void glorot(Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(value.rows + value.cols));
    for (auto& x : value.data) x = rng.uniform(-a, a);
  }
  void fill(double x) { std::fill(value.data.begin(), value.data.end(), x); }
};

using ParamList = std::vector<Param*>;

inline void zero_grads(const ParamList& ps) {
  for (auto* p : ps) p->grad.zero();
}

struct AdamConfig {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const ParamList& ps) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : ps) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = p->grad.data[i];
        double& m = p->m.data[i];
        double& v = p->v.data[i];
        m = cfg_.beta1 * m + (1 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1 - cfg_.beta2) * g * g;
        p->value.data[i] -= cfg_.lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

// Sparse rows (index, value) used as a constant input matrix.
struct SparseRows {
  std::size_t cols = 0;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;
};

class Tape {
 public:
  using Id = std::size_t;

  Id input(Mat m) { return push(std::move(m), false, nullptr); }

  Id param(Param& p) {
    Node n;
    n.param = &p;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  const Mat& value(Id i) const { return nodes_[i].param ? nodes_[i].param->value : nodes_[i].value; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Id loss) {
    require(value(loss).size() == 1, "backward needs a scalar");
    grad(loss).data[0] += 1.0;
    for (std::size_t i = loss + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.back && n.has_grad) n.back(*this);
    }
  }

  // a[m×k] · b[k×n]
  Id matmul(Id a, Id b) {
    const Mat &A = value(a), &B = value(b);
    require(A.cols == B.rows, "matmul shape");
    Mat C(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      double* c = C.row(i);
      for (std::size_t k = 0; k < A.cols; ++k) {
        const double x = A(i, k);
        if (x == 0) continue;
        const double* brow = B.row(k);
        for (std::size_t j = 0; j < B.cols; ++j) c[j] += x * brow[j];
      }
    }
    return push(std::move(C), needs(a) || needs(b), [a, b, self = next_id()](Tape& t) {
      const Mat &A = t.value(a), &B = t.value(b), &G = t.grad(self);
      if (t.needs(a)) {
        Mat& GA = t.grad(a);
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t k = 0; k < A.cols; ++k) {
            GA(i, k) += dot(G.row(i), B.row(k), B.cols);
          }
      }
      if (t.needs(b)) {
        Mat& GB = t.grad(b);
        for (std::size_t i = 0; i < A.rows; ++i) {
          const double* g = G.row(i);
          for (std::size_t k = 0; k < A.cols; ++k) {
            const double x = A(i, k);
            if (x == 0) continue;
            double* gb = GB.row(k);
            for (std::size_t j = 0; j < B.cols; ++j) gb[j] += x * g[j];
          }
        }
      }
    });
  }

  // a[m×k] · b[n×k]ᵀ
  Id matmul_nt(Id a, Id b) {
    const Mat &A = value(a), &B = value(b);
    require(A.cols == B.cols, "matmul_nt shape");
    Mat C(A.rows, B.rows);
    for (std::size_t i = 0; i < A.rows; ++i)
      for (std::size_t j = 0; j < B.rows; ++j) C(i, j) = dot(A.row(i), B.row(j), A.cols);
    return push(std::move(C), needs(a) || needs(b), [a, b, self = next_id()](Tape& t) {
      const Mat &A = t.value(a), &B = t.value(b), &G = t.grad(self);
      if (t.needs(a)) {
        Mat& GA = t.grad(a);
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < B.rows; ++j) axpy(G(i, j), B.row(j), GA.row(i), A.cols);
      }
      if (t.needs(b)) {
        Mat& GB = t.grad(b);
        for (std::size_t i = 0; i < A.rows; ++i)
          for (std::size_t j = 0; j < B.rows; ++j) axpy(G(i, j), A.row(i), GB.row(j), A.cols);
      }
    });
  }

  // a[k×m]ᵀ · b[k×n]
  Id matmul_tn(Id a, Id b) {
    const Mat &A = value(a), &B = value(b);
    require(A.rows == B.rows, "matmul_tn shape");
    Mat C(A.cols, B.cols);
    for (std::size_t k = 0; k < A.rows; ++k)
      for (std::size_t i = 0; i < A.cols; ++i) axpy(A(k, i), B.row(k), C.row(i), B.cols);
    return push(std::move(C), needs(a) || needs(b), [a, b, self = next_id()](Tape& t) {
      const Mat &A = t.value(a), &B = t.value(b), &G = t.grad(self);
      if (t.needs(a)) {
        Mat& GA = t.grad(a);
        for (std::size_t k = 0; k < A.rows; ++k)
          for (std::size_t i = 0; i < A.cols; ++i) GA(k, i) += dot(G.row(i), B.row(k), B.cols);
      }
      if (t.needs(b)) {
        Mat& GB = t.grad(b);
        for (std::size_t k = 0; k < A.rows; ++k)
          for (std::size_t i = 0; i < A.cols; ++i) axpy(A(k, i), G.row(i), GB.row(k), B.cols);
      }
    });
  }

  // Constant sparse matrix times a dense node.
  Id sparse_matmul(const SparseRows& x, Id w) {
    const Mat& W = value(w);
    require(x.cols == W.rows, "sparse_matmul shape");
    Mat C(x.rows.size(), W.cols);
    for (std::size_t i = 0; i < x.rows.size(); ++i)
      for (auto [k, v] : x.rows[i]) axpy(v, W.row(k), C.row(i), W.cols);
    return push(std::move(C), needs(w), [x, w, self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      Mat& GW = t.grad(w);
      for (std::size_t i = 0; i < x.rows.size(); ++i)
        for (auto [k, v] : x.rows[i]) axpy(v, G.row(i), GW.row(k), G.cols);
    });
  }

  Id add(Id a, Id b) {
    const Mat &A = value(a), &B = value(b);
    require(A.same_shape(B), "add shape");
    Mat C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    return push(std::move(C), needs(a) || needs(b), [a, b, self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      for (Id x : {a, b})
        if (t.needs(x)) {
          Mat& GX = t.grad(x);
          for (std::size_t i = 0; i < G.size(); ++i) GX.data[i] += G.data[i];
        }
    });
  }

  // Broadcast-add a 1×c row to every row of a.
  Id add_row(Id a, Id bias) {
    const Mat &A = value(a), &B = value(bias);
    require(B.rows == 1 && B.cols == A.cols, "add_row shape");
    Mat C = A;
    for (std::size_t i = 0; i < C.rows; ++i) axpy(1.0, B.row(0), C.row(i), C.cols);
    return push(std::move(C), needs(a) || needs(bias), [a, bias, self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      if (t.needs(a)) {
        Mat& GA = t.grad(a);
        for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += G.data[i];
      }
      if (t.needs(bias)) {
        Mat& GB = t.grad(bias);
        for (std::size_t i = 0; i < G.rows; ++i) axpy(1.0, G.row(i), GB.row(0), G.cols);
      }
    });
  }

  Id scale(Id a, double s) {
    Mat C = value(a);
    for (auto& x : C.data) x *= s;
    return push(std::move(C), needs(a), [a, s, self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      Mat& GA = t.grad(a);
      for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += s * G.data[i];
    });
  }

  Id relu(Id a) {
    Mat C = value(a);
    for (auto& x : C.data) x = x > 0 ? x : 0;
    return push(std::move(C), needs(a), [a, self = next_id()](Tape& t) {
      const Mat &X = t.value(a), &G = t.grad(self);
      Mat& GA = t.grad(a);
      for (std::size_t i = 0; i < G.size(); ++i)
        if (X.data[i] > 0) GA.data[i] += G.data[i];
    });
  }

  Id tanh(Id a) {
    Mat C = value(a);
    for (auto& x : C.data) x = std::tanh(x);
    return push(std::move(C), needs(a), [a, self = next_id()](Tape& t) {
      const Mat &Y = t.value(self), &G = t.grad(self);
      Mat& GA = t.grad(a);
      for (std::size_t i = 0; i < G.size(); ++i) GA.data[i] += G.data[i] * (1 - Y.data[i] * Y.data[i]);
    });
  }

  Id softmax_rows(Id a) {
    Mat C = value(a);
    for (std::size_t i = 0; i < C.rows; ++i) softmax_inplace(C.row(i), C.cols);
    return push(std::move(C), needs(a), [a, self = next_id()](Tape& t) {
      const Mat &Y = t.value(self), &G = t.grad(self);
      Mat& GA = t.grad(a);
      for (std::size_t i = 0; i < Y.rows; ++i) {
        const double s = dot(Y.row(i), G.row(i), Y.cols);
        for (std::size_t j = 0; j < Y.cols; ++j) GA(i, j) += Y(i, j) * (G(i, j) - s);
      }
    });
  }

  // Softmax over every element (used for a k×1 score column).
  Id softmax_all(Id a) {
    Mat C = value(a);
    softmax_inplace(C.data.data(), C.size());
    return push(std::move(C), needs(a), [a, self = next_id()](Tape& t) {
      const Mat &Y = t.value(self), &G = t.grad(self);
      Mat& GA = t.grad(a);
      const double s = dot(Y.data.data(), G.data.data(), Y.size());
      for (std::size_t i = 0; i < Y.size(); ++i) GA.data[i] += Y.data[i] * (G.data[i] - s);
    });
  }

  Id layer_norm(Id a, Id gamma, Id beta, double eps = 1e-5) {
    const Mat &X = value(a), &Ga = value(gamma), &Be = value(beta);
    require(Ga.rows == 1 && Ga.cols == X.cols && Be.same_shape(Ga), "layer_norm shape");
    Mat Y(X.rows, X.cols), Xhat(X.rows, X.cols);
    std::vector<double> inv_std(X.rows);
    const double n = static_cast<double>(X.cols);
    for (std::size_t i = 0; i < X.rows; ++i) {
      const double* x = X.row(i);
      double mean = 0;
      for (std::size_t j = 0; j < X.cols; ++j) mean += x[j];
      mean /= n;
      double var = 0;
      for (std::size_t j = 0; j < X.cols; ++j) var += (x[j] - mean) * (x[j] - mean);
      var /= n;
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < X.cols; ++j) {
        Xhat(i, j) = (x[j] - mean) * inv_std[i];
        Y(i, j) = Xhat(i, j) * Ga(0, j) + Be(0, j);
      }
    }
    return push(std::move(Y), needs(a) || needs(gamma) || needs(beta),
                [a, gamma, beta, n, xhat = std::move(Xhat), inv_std = std::move(inv_std), self = next_id()](Tape& t) {
                  const Mat &G = t.grad(self), &Ga = t.value(gamma);
                  if (t.needs(gamma) || t.needs(beta)) {
                    Mat& GG = t.grad(gamma);
                    Mat& GB = t.grad(beta);
                    for (std::size_t i = 0; i < G.rows; ++i)
                      for (std::size_t j = 0; j < G.cols; ++j) {
                        GG(0, j) += G(i, j) * xhat(i, j);
                        GB(0, j) += G(i, j);
                      }
                  }
                  if (t.needs(a)) {
                    Mat& GA = t.grad(a);
                    for (std::size_t i = 0; i < G.rows; ++i) {
                      double s1 = 0, s2 = 0;
                      for (std::size_t j = 0; j < G.cols; ++j) {
                        const double d = G(i, j) * Ga(0, j);
                        s1 += d;
                        s2 += d * xhat(i, j);
                      }
                      for (std::size_t j = 0; j < G.cols; ++j) {
                        const double d = G(i, j) * Ga(0, j);
                        GA(i, j) += inv_std[i] / n * (n * d - s1 - xhat(i, j) * s2);
                      }
                    }
                  }
                });
  }

  // Rows of `table` selected by index.
  Id gather(Id table, std::vector<std::uint32_t> idx) {
    const Mat& T = value(table);
    Mat C(idx.size(), T.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] < T.rows, "gather index");
      std::copy_n(T.row(idx[i]), T.cols, C.row(i));
    }
    return push(std::move(C), needs(table), [table, idx = std::move(idx), self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      Mat& GT = t.grad(table);
      for (std::size_t i = 0; i < idx.size(); ++i) axpy(1.0, G.row(i), GT.row(idx[i]), G.cols);
    });
  }

  // Row i becomes the mean of rows nbrs[i]; rows without neighbours are zero.
  Id neighbor_mean(Id a, const std::vector<std::vector<std::uint32_t>>& nbrs) {
    const Mat& A = value(a);
    require(nbrs.size() == A.rows, "neighbor_mean shape");
    Mat C(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
      if (nbrs[i].empty()) continue;
      const double w = 1.0 / static_cast<double>(nbrs[i].size());
      for (auto j : nbrs[i]) axpy(w, A.row(j), C.row(i), A.cols);
    }
    return push(std::move(C), needs(a), [a, nbrs, self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      Mat& GA = t.grad(a);
      for (std::size_t i = 0; i < G.rows; ++i) {
        if (nbrs[i].empty()) continue;
        const double w = 1.0 / static_cast<double>(nbrs[i].size());
        for (auto j : nbrs[i]) axpy(w, G.row(i), GA.row(j), G.cols);
      }
    });
  }

  // Mean over consecutive row ranges [bounds[s], bounds[s+1]).
  Id segment_mean(Id a, std::vector<std::size_t> bounds) {
    const Mat& A = value(a);
    require(bounds.size() >= 2 && bounds.back() == A.rows, "segment_mean bounds");
    Mat C(bounds.size() - 1, A.cols);
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
      const std::size_t lo = bounds[s], hi = bounds[s + 1];
      require(hi > lo, "empty segment");
      const double w = 1.0 / static_cast<double>(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) axpy(w, A.row(i), C.row(s), A.cols);
    }
    return push(std::move(C), needs(a), [a, bounds = std::move(bounds), self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      Mat& GA = t.grad(a);
      for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
        const double w = 1.0 / static_cast<double>(bounds[s + 1] - bounds[s]);
        for (std::size_t i = bounds[s]; i < bounds[s + 1]; ++i) axpy(w, G.row(s), GA.row(i), G.cols);
      }
    });
  }

  Id mean_rows(Id a) { return segment_mean(a, {0, value(a).rows}); }

  // Column-wise max; ties route the gradient to the first maximal row.
  Id max_rows(Id a) {
    const Mat& A = value(a);
    require(A.rows > 0, "max_rows of empty matrix");
    Mat C(1, A.cols);
    std::vector<std::size_t> arg(A.cols, 0);
    for (std::size_t j = 0; j < A.cols; ++j) {
      C(0, j) = A(0, j);
      for (std::size_t i = 1; i < A.rows; ++i)
        if (A(i, j) > C(0, j)) {
          C(0, j) = A(i, j);
          arg[j] = i;
        }
    }
    return push(std::move(C), needs(a), [a, arg = std::move(arg), self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      Mat& GA = t.grad(a);
      for (std::size_t j = 0; j < G.cols; ++j) GA(arg[j], j) += G(0, j);
    });
  }

  Id concat_cols(std::vector<Id> parts) {
    require(!parts.empty(), "concat of nothing");
    const std::size_t rows = value(parts[0]).rows;
    std::size_t cols = 0;
    bool any = false;
    for (Id p : parts) {
      require(value(p).rows == rows, "concat rows");
      cols += value(p).cols;
      any = any || needs(p);
    }
    Mat C(rows, cols);
    std::size_t off = 0;
    for (Id p : parts) {
      const Mat& P = value(p);
      for (std::size_t i = 0; i < rows; ++i) std::copy_n(P.row(i), P.cols, C.row(i) + off);
      off += P.cols;
    }
    return push(std::move(C), any, [parts = std::move(parts), self = next_id()](Tape& t) {
      const Mat& G = t.grad(self);
      std::size_t off = 0;
      for (Id p : parts) {
        const std::size_t pc = t.value(p).cols;
        if (t.needs(p)) {
          Mat& GP = t.grad(p);
          for (std::size_t i = 0; i < G.rows; ++i) axpy(1.0, G.row(i) + off, GP.row(i), pc);
        }
        off += pc;
      }
    });
  }

  // Weighted cross-entropy of a 1×C logit row against `label`.
  Id cross_entropy(Id logits, std::size_t label, double weight = 1.0) {
    const Mat& L = value(logits);
    require(L.rows == 1 && label < L.cols, "cross_entropy shape");
    std::vector<double> p(L.data);
    softmax_inplace(p.data(), p.size());
    Mat C(1, 1, -weight * std::log(std::max(p[label], std::numeric_limits<double>::min())));
    return push(std::move(C), needs(logits), [logits, label, weight, p = std::move(p), self = next_id()](Tape& t) {
      const double g = t.grad(self).data[0] * weight;
      Mat& GL = t.grad(logits);
      for (std::size_t j = 0; j < p.size(); ++j) GL.data[j] += g * (p[j] - (j == label ? 1.0 : 0.0));
    });
  }

  static void softmax_inplace(double* x, std::size_t n) {
    if (n == 0) return;
    const double mx = *std::max_element(x, x + n);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (x[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < n; ++i) x[i] /= s;
  }

 private:
  struct Node {
    Mat value, grad;
    Param* param = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
    std::function<void(Tape&)> back;
  };

  static void require(bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvariantViolation, std::string("tape: ") + what);
  }
  static double dot(const double* a, const double* b, std::size_t n) {
    double s[4] = {0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
      for (std::size_t l = 0; l < 4; ++l) s[l] += a[i + l] * b[i + l];
    for (; i < n; ++i) s[0] += a[i] * b[i];
    return (s[0] + s[1]) + (s[2] + s[3]);
  }
  static void axpy(double a, const double* x, double* y, std::size_t n) {
    if (a == 0) return;
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
  }

  bool needs(Id i) const { return nodes_[i].needs_grad; }
  Id next_id() const { return nodes_.size(); }

  Mat& grad(Id i) {
    auto& n = nodes_[i];
    n.has_grad = true;
    if (n.param) return n.param->grad;
    if (n.grad.size() != n.value.size()) n.grad = Mat(n.value.rows, n.value.cols);
    return n.grad;
  }

  Id push(Mat v, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    if (needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
};

inline std::vector<double> softmax(std::vector<double> x) {
  Tape::softmax_inplace(x.data(), x.size());
  return x;
}

inline std::size_t argmax(const std::vector<double>& x) {
  return static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin());
}

}  // namespace plcbinx::learn
