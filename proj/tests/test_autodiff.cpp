// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <functional>

#include "mvp/autodiff.hpp"
#include "mvp/random.hpp"

using namespace mvp;
using V = Tape::Var;
using Builder = std::function<V(Tape&, const std::vector<V>&)>;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double sd = 1.0) {
  Matrix m(r, c);
  for (double& x : m.values()) x = rng.normal(0.0, sd);
  return m;
}

/// Objective sum(W .* f(params)) with fixed random W; compares the tape
/// gradient with central differences.
double max_gradient_error(const std::vector<Matrix>& inputs, const Builder& f, std::uint64_t seed = 3) {
  Matrix weights;
  auto objective = [&](const std::vector<Matrix>& xs, std::vector<Matrix>* grads) {
    Tape t;
    std::vector<V> vars;
    for (const auto& x : xs) vars.push_back(t.parameter(x));
    const V out = f(t, vars);
    const Matrix& y = t.value(out);
    if (weights.empty()) {
      Rng rng(seed);
      weights = random_matrix(rng, y.rows(), y.cols());
    }
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += weights.values()[i] * y.values()[i];
    if (grads) {
      t.grad(out) = weights;
      t.backward();
      for (V v : vars) grads->push_back(t.grad(v));
    }
    return s;
  };
  std::vector<Matrix> analytic;
  objective(inputs, &analytic);
  double worst = 0;
  const double h = 1e-5;
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double x0 = probe[k].values()[i];
      probe[k].values()[i] = x0 + h;
      const double fp = objective(probe, nullptr);
      probe[k].values()[i] = x0 - h;
      const double fm = objective(probe, nullptr);
      probe[k].values()[i] = x0;
      const double fd = (fp - fm) / (2 * h);
      const double an = analytic[k].values()[i];
      worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
    }
  }
  return worst;
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Autodiff, MatmulVariants) {
  Rng rng(1);
  const auto a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 5), c = random_matrix(rng, 5, 4);
  EXPECT_LT(max_gradient_error({a, b}, [](Tape& t, const std::vector<V>& v) { return t.matmul(v[0], v[1]); }), kTol);
  EXPECT_LT(max_gradient_error({a, c}, [](Tape& t, const std::vector<V>& v) { return t.matmul_nt(v[0], v[1]); }),
            kTol);
}

TEST(Autodiff, MatmulValue) {
  Tape t;
  Matrix a(2, 2), b(2, 2);
  a.values() = {1, 2, 3, 4};
  b.values() = {5, 6, 7, 8};
  const auto c = t.matmul(t.constant(a), t.constant(b));
  EXPECT_EQ(t.value(c).values(), (std::vector<double>{19, 22, 43, 50}));
  const auto d = t.matmul_nt(t.constant(a), t.constant(b));
  EXPECT_EQ(t.value(d).values(), (std::vector<double>{17, 23, 39, 53}));
}

TEST(Autodiff, Elementwise) {
  Rng rng(2);
  const auto a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 4), bias = random_matrix(rng, 1, 4);
  EXPECT_LT(max_gradient_error({a, b}, [](Tape& t, const std::vector<V>& v) { return t.add(v[0], v[1]); }), kTol);
  EXPECT_LT(max_gradient_error({a, bias}, [](Tape& t, const std::vector<V>& v) { return t.add_row(v[0], v[1]); }),
            kTol);
  EXPECT_LT(max_gradient_error({a}, [](Tape& t, const std::vector<V>& v) { return t.scale(v[0], -1.7); }), kTol);
  EXPECT_LT(max_gradient_error({a}, [](Tape& t, const std::vector<V>& v) { return t.gelu(v[0]); }), kTol);
}

TEST(Autodiff, LayerNorm) {
  Rng rng(3);
  const auto a = random_matrix(rng, 4, 6), g = random_matrix(rng, 1, 6), b = random_matrix(rng, 1, 6);
  EXPECT_LT(max_gradient_error({a, g, b},
                               [](Tape& t, const std::vector<V>& v) { return t.layer_norm(v[0], v[1], v[2]); }),
            kTol);
}

TEST(Autodiff, SoftmaxRows) {
  Rng rng(4);
  const auto a = random_matrix(rng, 4, 4);
  EXPECT_LT(max_gradient_error({a}, [](Tape& t, const std::vector<V>& v) { return t.softmax_rows(v[0]); }), kTol);
  EXPECT_LT(max_gradient_error({a}, [](Tape& t, const std::vector<V>& v) { return t.softmax_rows(v[0], true); }),
            kTol);
}

TEST(Autodiff, SoftmaxCausalMasksFuture) {
  Tape t;
  Matrix a(3, 3, 0.0);
  const auto s = t.softmax_rows(t.constant(a), true);
  const Matrix& y = t.value(s);
  EXPECT_EQ(y(0, 0), 1.0);
  EXPECT_EQ(y(0, 1), 0.0);
  EXPECT_EQ(y(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(y(2, 2), 1.0 / 3.0);
}

TEST(Autodiff, SliceAndConcat) {
  Rng rng(5);
  const auto a = random_matrix(rng, 5, 6), b = random_matrix(rng, 2, 6), c = random_matrix(rng, 5, 3);
  EXPECT_LT(max_gradient_error({a}, [](Tape& t, const std::vector<V>& v) { return t.slice_rows(v[0], 1, 4); }), kTol);
  EXPECT_LT(max_gradient_error({a}, [](Tape& t, const std::vector<V>& v) { return t.slice_cols(v[0], 2, 5); }), kTol);
  EXPECT_LT(max_gradient_error({a, b},
                               [](Tape& t, const std::vector<V>& v) { return t.concat_rows({v[0], v[1], v[0]}); }),
            kTol);
  EXPECT_LT(max_gradient_error({a, c}, [](Tape& t, const std::vector<V>& v) { return t.concat_cols({v[1], v[0]}); }),
            kTol);
}

TEST(Autodiff, NormalizeRows) {
  Rng rng(6);
  const auto a = random_matrix(rng, 3, 5);
  EXPECT_LT(max_gradient_error({a}, [](Tape& t, const std::vector<V>& v) { return t.normalize_rows(v[0]); }), kTol);
  Tape t;
  EXPECT_THROW(t.normalize_rows(t.constant(Matrix(1, 3, 0.0))), std::domain_error);
}

TEST(Autodiff, Composite) {
  Rng rng(7);
  const auto x = random_matrix(rng, 4, 6), w = random_matrix(rng, 6, 6, 0.4), g = random_matrix(rng, 1, 6);
  auto f = [](Tape& t, const std::vector<V>& v) {
    const V h = t.layer_norm(v[0], v[2], t.constant(Matrix(1, 6, 0.0)));
    const V q = t.matmul(h, v[1]);
    const V att = t.softmax_rows(t.matmul_nt(q, h));
    return t.normalize_rows(t.add(t.gelu(t.matmul(att, h)), v[0]));
  };
  EXPECT_LT(max_gradient_error({x, w, g}, f), 1e-6);
}

TEST(Autodiff, ConstantsCarryNoGradient) {
  Tape t;
  Matrix w(2, 2, 1.0);
  const V a = t.constant_ref(w);
  const V p = t.parameter(Matrix(2, 2, 0.5));
  const V c = t.matmul(a, a);
  const V d = t.matmul(c, p);
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_TRUE(t.requires_grad(d));
  t.grad(d) = Matrix(2, 2, 1.0);
  t.backward();
  EXPECT_FALSE(t.has_grad(a));
  EXPECT_FALSE(t.has_grad(c));
  EXPECT_TRUE(t.has_grad(p));
}

TEST(Autodiff, ShapeErrors) {
  Tape t;
  const V a = t.constant(Matrix(2, 3, 1.0));
  EXPECT_THROW(t.matmul(a, a), std::invalid_argument);
  EXPECT_THROW(t.add(a, t.constant(Matrix(3, 2, 1.0))), std::invalid_argument);
}
