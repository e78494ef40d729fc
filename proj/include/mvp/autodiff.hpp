// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mvp/linalg.hpp"

namespace mvp {

namespace kernels {

// c += a * b
inline void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c.data() + i * m;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// c += a * b^T
inline void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// c += a^T * b
inline void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.data() + p * n;
    const double* bp = b.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace kernels

/// Minimal reverse-mode autodiff over dense matrices. Nodes are appended in
/// evaluation order and `backward` replays them in reverse. Only nodes that
/// depend on a parameter carry gradients, so frozen weights never get one.
class Tape {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Var constant(Matrix m) { return push(std::move(m), false, nullptr); }

  /// Non-owning constant; `m` must outlive the tape.
  Var constant_ref(const Matrix& m) {
    nodes_.emplace_back();
    nodes_.back().ref = &m;
    return {nodes_.size() - 1};
  }

  Var parameter(Matrix m) { return push(std::move(m), true, nullptr); }

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.owned;
  }

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of `v`, zero-initialized on first access.
  Matrix& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty() && !value(v).empty()) {
      const Matrix& val = value(v);
      n.grad = Matrix(val.rows(), val.cols(), 0.0);
    }
    return n.grad;
  }

  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

  void backward() {
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backward && !n.grad.empty()) n.backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- operations ------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
    Matrix C(A.rows(), B.cols(), 0.0);
    kernels::gemm_nn(A, B, C);
    return push_op(std::move(C), {a, b}, [this, a, b](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      if (requires_grad(a)) kernels::gemm_nt(g, value(b), grad(a));
      if (requires_grad(b)) kernels::gemm_tn(value(a), g, grad(b));
    });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols() != B.cols()) throw std::invalid_argument("matmul_nt: inner dimensions differ");
    Matrix C(A.rows(), B.rows(), 0.0);
    kernels::gemm_nt(A, B, C);
    return push_op(std::move(C), {a, b}, [this, a, b](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      if (requires_grad(a)) kernels::gemm_nn(g, value(b), grad(a));
      if (requires_grad(b)) kernels::gemm_tn(g, value(a), grad(b));
    });
  }

  Var add(Var a, Var b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
    Matrix C = A;
    for (std::size_t i = 0; i < C.size(); ++i) C.values()[i] += B.values()[i];
    return push_op(std::move(C), {a, b}, [this, a, b](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      if (requires_grad(a)) accumulate(grad(a), g);
      if (requires_grad(b)) accumulate(grad(b), g);
    });
  }

  /// Adds a 1 x cols row vector to every row.
  Var add_row(Var a, Var bias) {
    const Matrix& A = value(a);
    const Matrix& b = value(bias);
    require_shape(b, 1, A.cols(), "add_row bias");
    Matrix C = A;
    for (std::size_t r = 0; r < C.rows(); ++r)
      for (std::size_t c = 0; c < C.cols(); ++c) C(r, c) += b(0, c);
    return push_op(std::move(C), {a, bias}, [this, a, bias](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      if (requires_grad(a)) accumulate(grad(a), g);
      if (requires_grad(bias)) {
        Matrix& gb = grad(bias);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      }
    });
  }

  Var scale(Var a, double s) {
    Matrix C = value(a);
    for (double& x : C.values()) x *= s;
    return push_op(std::move(C), {a}, [this, a, s](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      Matrix& ga = grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += s * g.values()[i];
    });
  }

  /// tanh-approximated GELU.
  Var gelu(Var a) {
    const Matrix& A = value(a);
    Matrix C(A.rows(), A.cols());
    for (std::size_t i = 0; i < A.size(); ++i) {
      const double x = A.values()[i];
      C.values()[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
    }
    return push_op(std::move(C), {a}, [this, a](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      const Matrix& A = value(a);
      Matrix& ga = grad(a);
      for (std::size_t i = 0; i < A.size(); ++i) {
        const double x = A.values()[i];
        const double t = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
        ga.values()[i] += d * g.values()[i];
      }
    });
  }

  /// Per-row layer normalization with 1 x cols gain and bias.
  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& A = value(a);
    const Matrix& G = value(gain);
    const Matrix& B = value(bias);
    require_shape(G, 1, A.cols(), "layer_norm gain");
    require_shape(B, 1, A.cols(), "layer_norm bias");
    const std::size_t n = A.rows(), d = A.cols();
    Matrix xhat(n, d);
    std::vector<double> inv_std(n);
    Matrix C(n, d);
    for (std::size_t r = 0; r < n; ++r) {
      double mean = 0.0;
      for (std::size_t c = 0; c < d; ++c) mean += A(r, c);
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t c = 0; c < d; ++c) var += (A(r, c) - mean) * (A(r, c) - mean);
      var /= static_cast<double>(d);
      inv_std[r] = 1.0 / std::sqrt(var + eps);
      for (std::size_t c = 0; c < d; ++c) {
        xhat(r, c) = (A(r, c) - mean) * inv_std[r];
        C(r, c) = G(0, c) * xhat(r, c) + B(0, c);
      }
    }
    return push_op(std::move(C), {a, gain, bias},
                   [this, a, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Var out) {
                     const Matrix& g = nodes_[out.id].grad;
                     const Matrix& G = value(gain);
                     const std::size_t n = g.rows(), d = g.cols();
                     if (requires_grad(a)) {
                       Matrix& ga = grad(a);
                       std::vector<double> dx(d);
                       for (std::size_t r = 0; r < n; ++r) {
                         double m1 = 0.0, m2 = 0.0;
                         for (std::size_t c = 0; c < d; ++c) {
                           dx[c] = g(r, c) * G(0, c);
                           m1 += dx[c];
                           m2 += dx[c] * xhat(r, c);
                         }
                         m1 /= static_cast<double>(d);
                         m2 /= static_cast<double>(d);
                         for (std::size_t c = 0; c < d; ++c) {
                           ga(r, c) += inv_std[r] * (dx[c] - m1 - xhat(r, c) * m2);
                         }
                       }
                     }
                     if (requires_grad(gain)) {
                       Matrix& gg = grad(gain);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < d; ++c) gg(0, c) += g(r, c) * xhat(r, c);
                     }
                     if (requires_grad(bias)) {
                       Matrix& gb = grad(bias);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < d; ++c) gb(0, c) += g(r, c);
                     }
                   });
  }

  /// Row-wise softmax. With `causal`, entry (r, c) for c > r is masked to 0.
  Var softmax_rows(Var a, bool causal = false) {
    const Matrix& A = value(a);
    Matrix C(A.rows(), A.cols(), 0.0);
    for (std::size_t r = 0; r < A.rows(); ++r) {
      const std::size_t end = causal ? std::min(A.cols(), r + 1) : A.cols();
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < end; ++c) mx = std::max(mx, A(r, c));
      double s = 0.0;
      for (std::size_t c = 0; c < end; ++c) {
        C(r, c) = std::exp(A(r, c) - mx);
        s += C(r, c);
      }
      for (std::size_t c = 0; c < end; ++c) C(r, c) /= s;
    }
    return push_op(std::move(C), {a}, [this, a](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      const Matrix& y = value(out);
      Matrix& ga = grad(a);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) s += g(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - s);
      }
    });
  }

  Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Matrix& A = value(a);
    if (begin > end || end > A.rows()) throw std::out_of_range("slice_rows");
    Matrix C(end - begin, A.cols());
    std::copy(A.data() + begin * A.cols(), A.data() + end * A.cols(), C.data());
    return push_op(std::move(C), {a}, [this, a, begin](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      Matrix& ga = grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga.values()[begin * ga.cols() + i] += g.values()[i];
    });
  }

  Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Matrix& A = value(a);
    if (begin > end || end > A.cols()) throw std::out_of_range("slice_cols");
    Matrix C(A.rows(), end - begin);
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) C(r, c - begin) = A(r, c);
    return push_op(std::move(C), {a}, [this, a, begin](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      Matrix& ga = grad(a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c + begin) += g(r, c);
    });
  }

  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
    std::size_t rows = 0;
    const std::size_t cols = value(parts.front()).cols();
    for (Var p : parts) {
      if (value(p).cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
      rows += value(p).rows();
    }
    Matrix C(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
      const Matrix& P = value(p);
      std::copy(P.data(), P.data() + P.size(), C.data() + off);
      off += P.size();
    }
    return push_op(std::move(C), parts, [this, parts](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      std::size_t off = 0;
      for (Var p : parts) {
        const std::size_t sz = value(p).size();
        if (requires_grad(p)) {
          Matrix& gp = grad(p);
          for (std::size_t i = 0; i < sz; ++i) gp.values()[i] += g.values()[off + i];
        }
        off += sz;
      }
    });
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
    const std::size_t rows = value(parts.front()).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Matrix C(rows, cols);
    std::size_t off = 0;
    for (Var p : parts) {
      const Matrix& P = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < P.cols(); ++c) C(r, off + c) = P(r, c);
      off += P.cols();
    }
    return push_op(std::move(C), parts, [this, parts](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      std::size_t off = 0;
      for (Var p : parts) {
        const std::size_t pc = value(p).cols();
        if (requires_grad(p)) {
          Matrix& gp = grad(p);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, off + c);
        }
        off += pc;
      }
    });
  }

  /// Scales every row to unit L2 norm.
  Var normalize_rows(Var a) {
    const Matrix& A = value(a);
    Matrix C = A;
    std::vector<double> norms(A.rows());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      norms[r] = l2_norm(A.row(r));
      if (norms[r] == 0.0) throw std::domain_error("normalize_rows: zero row");
      for (double& x : C.row(r)) x /= norms[r];
    }
    return push_op(std::move(C), {a}, [this, a, norms = std::move(norms)](Var out) {
      const Matrix& g = nodes_[out.id].grad;
      const Matrix& y = value(out);
      Matrix& ga = grad(a);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double yg = dot(y.row(r), g.row(r));
        for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += (g(r, c) - y(r, c) * yg) / norms[r];
      }
    });
  }

 private:
  static constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  static void accumulate(Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < src.size(); ++i) dst.values()[i] += src.values()[i];
  }

  Var push(Matrix m, bool rg, std::function<void()> back) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.owned = std::move(m);
    n.requires_grad = rg;
    n.backward = std::move(back);
    return {nodes_.size() - 1};
  }

  template <typename F>
  Var push_op(Matrix m, const std::vector<Var>& inputs, F&& back) {
    bool rg = false;
    for (Var v : inputs) rg = rg || requires_grad(v);
    Var out = push(std::move(m), rg, nullptr);
    if (rg) nodes_[out.id].backward = [back = std::forward<F>(back), out]() { back(out); };
    return out;
  }

  std::deque<Node> nodes_;
};

}  // namespace mvp
