// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "hierpath/error.hpp"
#include "hierpath/nncore.hpp"

using namespace hierpath;
using namespace hierpath::nn;

namespace {

NdArray from(std::vector<std::size_t> shape, std::vector<double> values) {
  NdArray a(std::move(shape));
  a.values = std::move(values);
  return a;
}

Parameter param(std::string name, std::vector<std::size_t> shape, std::vector<double> values) {
  return Parameter(std::move(name), from(std::move(shape), std::move(values)));
}

Parameter random_param(std::string name, std::vector<std::size_t> shape, Rng& rng, double limit = 1.0) {
  return Parameter(std::move(name), init_uniform(std::move(shape), limit, rng));
}

// Loop-level valid convolution used as the reference for conv1d_forward.
NdArray reference_conv(const NdArray& x, const Parameter& w, const Parameter& b, Activation act) {
  const auto L = x.dim(0), D = x.dim(1), F = w.value.dim(0), h = w.value.dim(1);
  NdArray out({L - h + 1, F});
  for (std::size_t t = 0; t + h <= L; ++t)
    for (std::size_t f = 0; f < F; ++f) {
      double s = b.value[f];
      for (std::size_t j = 0; j < h; ++j)
        for (std::size_t d = 0; d < D; ++d) s += w.value.values[(f * h + j) * D + d] * x.at(t + j, d);
      out.at(t, f) = activate(s, act);
    }
  return out;
}

}  // namespace

TEST(Embedding, ForwardLooksUpRows) {
  auto table = param("emb", {3, 2}, {0, 0, 1, 2, 3, 4});
  const std::vector<int> idx{2, 0, 1};
  const auto out = embedding_forward(idx, table);
  EXPECT_EQ(out.shape, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(out.values, (std::vector<double>{3, 4, 0, 0, 1, 2}));
  EXPECT_THROW(embedding_forward(std::vector<int>{3}, table), ContractError);
  EXPECT_THROW(embedding_forward(std::vector<int>{-1}, table), ContractError);
}

TEST(Embedding, BackwardScatterAddsDuplicates) {
  auto table = param("emb", {4, 2}, std::vector<double>(8, 0.5));
  const std::vector<int> idx{2, 3, 2, 0, 2};
  const auto up = from({5, 2}, {1, 10, 2, 20, 3, 30, 4, 40, 5, 50});
  table.zero_grad();
  embedding_backward(idx, up, table);
  EXPECT_EQ(table.grad.values, (std::vector<double>{0, 0, 0, 0, 9, 90, 2, 20}));
}

TEST(Conv, HandExample) {
  // Rows [1,0],[0,1],[1,1]; one filter of width 2 with all ones: [1+1, 1+2] = [2,3].
  const auto x = from({3, 2}, {1, 0, 0, 1, 1, 1});
  auto w = param("w", {1, 2, 2}, {1, 1, 1, 1});
  auto b = param("b", {1}, {0});
  const auto r = conv1d_forward(x, w, b, Activation::none);
  EXPECT_EQ(r.out.shape, (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(r.out.values, (std::vector<double>{2, 3}));
}

TEST(Conv, MatchesLoopReferenceWithPadding) {
  Rng rng(3);
  for (auto act : {Activation::none, Activation::relu, Activation::tanh}) {
    auto x = init_uniform({9, 5}, 1.0, rng);
    for (std::size_t r : {2u, 6u, 7u, 8u}) std::fill_n(x.values.begin() + r * 5, 5, 0.0);
    auto w = random_param("w", {4, 3, 5}, rng);
    auto b = random_param("b", {4}, rng);
    const auto got = conv1d_forward(x, w, b, act);
    const auto want = reference_conv(x, w, b, act);
    ASSERT_EQ(got.out.shape, want.shape);
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got.out[i], want[i], 1e-12);
  }
}

TEST(Conv, LinearInInput) {
  Rng rng(4);
  auto w = random_param("w", {3, 2, 4}, rng);
  auto b = param("b", {3}, {0, 0, 0});
  const auto x = init_uniform({6, 4}, 1.0, rng);
  const auto y = init_uniform({6, 4}, 1.0, rng);
  NdArray combo({6, 4});
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = 2.0 * x[i] - 0.5 * y[i];
  const auto fx = conv1d_forward(x, w, b, Activation::none).out;
  const auto fy = conv1d_forward(y, w, b, Activation::none).out;
  const auto fc = conv1d_forward(combo, w, b, Activation::none).out;
  for (std::size_t i = 0; i < fc.size(); ++i) EXPECT_NEAR(fc[i], 2.0 * fx[i] - 0.5 * fy[i], 1e-12);
}

TEST(Conv, ShortInputRejected) {
  auto w = param("w", {1, 3, 1}, {1, 1, 1});
  auto b = param("b", {1}, {0});
  EXPECT_THROW(conv1d_forward(from({2, 1}, {1, 1}), w, b, Activation::none), ContractError);
}

TEST(Conv, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  auto x = init_uniform({7, 3}, 1.0, rng);
  auto w = random_param("w", {2, 3, 3}, rng);
  auto b = random_param("b", {2}, rng);
  const auto up = init_uniform({5, 2}, 1.0, rng);
  auto objective = [&] {
    const auto r = conv1d_forward(x, w, b, Activation::tanh);
    return std::inner_product(r.out.values.begin(), r.out.values.end(), up.values.begin(), 0.0);
  };
  w.zero_grad();
  b.zero_grad();
  const auto r = conv1d_forward(x, w, b, Activation::tanh);
  const auto gx = conv1d_backward(x, r.pre, up, w, b, Activation::tanh);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double f1 = objective();
    x[i] = saved - h;
    const double f0 = objective();
    x[i] = saved;
    EXPECT_NEAR(gx[i], (f1 - f0) / (2 * h), 1e-7);
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w.value[i];
    w.value[i] = saved + h;
    const double f1 = objective();
    w.value[i] = saved - h;
    const double f0 = objective();
    w.value[i] = saved;
    EXPECT_NEAR(w.grad[i], (f1 - f0) / (2 * h), 1e-7);
  }
}

TEST(MaxPool, TiesPickEarliest) {
  const auto fm = from({3, 2}, {5, -1, 5, 2, 1, 2});
  const auto p = max_over_time(fm);
  EXPECT_EQ(p.values.values, (std::vector<double>{5, 2}));
  EXPECT_EQ(p.argmax, (std::vector<std::size_t>{0, 1}));
}

TEST(MaxPool, BackwardRoutesToOneStepPerColumn) {
  Rng rng(6);
  const auto fm = init_uniform({11, 4}, 1.0, rng);
  const auto p = max_over_time(fm);
  const auto g = max_over_time_backward(from({4}, {1, 2, 3, 4}), p.argmax, 11);
  ASSERT_EQ(g.shape, (std::vector<std::size_t>{11, 4}));
  for (std::size_t f = 0; f < 4; ++f) {
    int nonzero = 0;
    for (std::size_t t = 0; t < 11; ++t)
      if (g.at(t, f) != 0.0) {
        ++nonzero;
        EXPECT_EQ(t, p.argmax[f]);
        EXPECT_EQ(g.at(t, f), static_cast<double>(f + 1));
      }
    EXPECT_EQ(nonzero, 1);
  }
}

TEST(Dropout, InvertedScalingStatistics) {
  Rng rng(7);
  const NdArray x({100000}, 1.0);
  const auto r = dropout(x, 0.5, Mode::train, rng);
  std::size_t zeros = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_TRUE(r.mask[i] == 0.0 || r.mask[i] == 2.0);
    zeros += r.mask[i] == 0.0;
    sum += r.out[i];
  }
  // Binomial(1e5, 0.5) has sd 158; 5 sd is 791.
  EXPECT_NEAR(static_cast<double>(zeros), 50000.0, 791.0);
  EXPECT_NEAR(sum / 1e5, 1.0, 0.016);
}

TEST(Dropout, InferModeAndZeroRateAreIdentity) {
  Rng rng(8);
  const auto x = init_uniform({50}, 1.0, rng);
  EXPECT_EQ(dropout(x, 0.5, Mode::infer, rng).out, x);
  EXPECT_EQ(dropout(x, 0.0, Mode::train, rng).out, x);
  EXPECT_THROW(dropout(x, 1.0, Mode::train, rng), ContractError);
  const auto r = dropout(x, 0.3, Mode::train, rng);
  const auto g = dropout_backward(NdArray({50}, 1.0), r.mask);
  EXPECT_EQ(g, r.mask);
}

TEST(Dense, HandExample) {
  auto w = param("w", {2, 3}, {1, 2, 3, -1, 0, 1});
  auto b = param("b", {2}, {0.5, -10});
  const auto x = from({3}, {1, 1, 2});
  const auto r = dense_forward(x, w, b, Activation::relu);
  EXPECT_EQ(r.pre.values, (std::vector<double>{9.5, -9}));
  EXPECT_EQ(r.out.values, (std::vector<double>{9.5, 0}));
  w.zero_grad();
  b.zero_grad();
  const auto gx = dense_backward(x, r.pre, from({2}, {1, 1}), w, b, Activation::relu);
  // The second unit is inactive, so only row 0 contributes.
  EXPECT_EQ(gx.values, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(w.grad.values, (std::vector<double>{1, 1, 2, 0, 0, 0}));
  EXPECT_EQ(b.grad.values, (std::vector<double>{1, 0}));
}

TEST(Dense, ShapeMismatchRejected) {
  auto w = param("w", {2, 3}, std::vector<double>(6, 0.0));
  auto b = param("b", {2}, {0, 0});
  EXPECT_THROW(dense_forward(from({2}, {1, 1}), w, b, Activation::none), ContractError);
}

TEST(Softmax, UniformLogits) {
  const auto r = softmax_xent(from({3}, {0, 0, 0}), 1);
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-15);
  for (double p : r.probs.values) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const auto r = softmax_xent(from({2}, {1000, 0}), 0);
  EXPECT_TRUE(r.probs.all_finite());
  EXPECT_NEAR(r.probs[0], 1.0, 1e-15);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
  const auto wrong = softmax_xent(from({2}, {1000, 0}), 1);
  EXPECT_NEAR(wrong.loss, 1000.0, 1e-9);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  auto z = init_uniform({5}, 3.0, rng);
  const auto r = softmax_xent(z, 3);
  const auto g = softmax_xent_backward(r.probs, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    const double saved = z[i];
    z[i] = saved + 1e-6;
    const double up = softmax_xent(z, 3).loss;
    z[i] = saved - 1e-6;
    const double down = softmax_xent(z, 3).loss;
    z[i] = saved;
    EXPECT_NEAR(g[i], (up - down) / 2e-6, 1e-8);
  }
  EXPECT_NEAR(std::accumulate(g.values.begin(), g.values.end(), 0.0), 0.0, 1e-15);
  EXPECT_THROW(softmax_xent(z, 5), ContractError);
}

TEST(Adadelta, FirstStepValue) {
  auto p = param("p", {1}, {0.0});
  p.grad[0] = 1.0;
  adadelta_step(p, {0.9, 1e-6});
  // -sqrt(eps) / sqrt(0.1 + eps)
  EXPECT_NEAR(p.value[0], -3.1623e-3, 1e-7);
  EXPECT_NEAR(p.value[0], -std::sqrt(1e-6) / std::sqrt(0.1 + 1e-6), 1e-18);
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Adadelta, MatchesElementwiseReference) {
  Rng rng(10);
  auto p = random_param("p", {40}, rng);
  std::vector<double> v = p.value.values, eg(40, 0.0), ed(40, 0.0);
  const AdadeltaConfig cfg{0.95, 1e-6};
  for (int step = 0; step < 25; ++step) {
    const auto g = init_uniform({40}, 2.0, rng);
    p.grad = g;
    adadelta_step(p, cfg);
    for (std::size_t i = 0; i < 40; ++i) {
      eg[i] = cfg.rho * eg[i] + (1 - cfg.rho) * g[i] * g[i];
      const double dx = -std::sqrt(ed[i] + cfg.eps) / std::sqrt(eg[i] + cfg.eps) * g[i];
      ed[i] = cfg.rho * ed[i] + (1 - cfg.rho) * dx * dx;
      v[i] += dx;
    }
  }
  for (std::size_t i = 0; i < 40; ++i) EXPECT_NEAR(p.value[i], v[i], 1e-12);
}

TEST(Adadelta, FrozenAndZeroGradientLeaveValues) {
  Rng rng(11);
  auto frozen = random_param("f", {10}, rng);
  frozen.frozen = true;
  const auto before = frozen.value;
  frozen.grad.fill(3.0);
  adadelta_step(frozen, {});
  EXPECT_EQ(frozen.value, before);

  auto idle = random_param("i", {10}, rng);
  const auto idle_before = idle.value;
  for (int s = 0; s < 5; ++s) adadelta_step(idle, {});
  EXPECT_EQ(idle.value, idle_before);
}

TEST(Adadelta, NonFiniteGradientIsNumericError) {
  auto p = param("p", {2}, {0, 0});
  p.grad[1] = std::nan("");
  try {
    adadelta_step(p, {});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_EQ(e.exit_code(), 3);
  }
  EXPECT_THROW(adadelta_step(p, {1.0, 1e-6}), ContractError);
}

TEST(Init, XavierBoundAndMean) {
  Rng rng(12);
  const auto w = init_params({100, 3, 50}, InitScheme::uniform_xavier, rng);
  const double limit = std::sqrt(6.0 / (150.0 + 100.0));
  double sum = 0.0, sq = 0.0;
  for (double v : w.values) {
    EXPECT_LE(std::abs(v), limit);
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(w.size());
  // Uniform(-a, a): mean 0 with sd a/sqrt(3n) for the sample mean; variance a^2/3.
  EXPECT_NEAR(sum / n, 0.0, 5.0 * limit / std::sqrt(3.0 * n));
  EXPECT_NEAR(sq / n, limit * limit / 3.0, 0.02 * limit * limit);
  const auto z = init_params({4, 4}, InitScheme::zeros, rng);
  EXPECT_EQ(z, NdArray({4, 4}));
}

TEST(Init, SameSeedSameValues) {
  Rng a(13), b(13);
  EXPECT_EQ(init_params({5, 7}, InitScheme::uniform_xavier, a), init_params({5, 7}, InitScheme::uniform_xavier, b));
}

TEST(GradCheck, QuadraticAgreesTightly) {
  Rng rng(14);
  auto p = random_param("p", {6}, rng);
  auto q = random_param("q", {2, 3}, rng);
  const std::vector<double> c{1, -2, 3, 0.5, 4, -1};
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < 6; ++i) s += c[i] * p.value[i] * p.value[i] + 3.0 * q.value[i];
    return s;
  };
  auto backprop = [&] {
    for (std::size_t i = 0; i < 6; ++i) {
      p.grad[i] += 2.0 * c[i] * p.value[i];
      q.grad[i] += 3.0;
    }
  };
  std::vector<Parameter*> ps{&p, &q};
  GradCheckOptions opt;
  opt.tolerance = 1e-9;
  const auto report = gradient_check(loss, backprop, ps, opt);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-9);
  EXPECT_EQ(report.params[0].coords_checked, 6u);
}

TEST(GradCheck, DetectsWrongBackward) {
  Rng rng(15);
  auto p = random_param("p", {8}, rng);
  auto loss = [&] {
    double s = 0.0;
    for (double v : p.value.values) s += std::sin(v);
    return s;
  };
  auto wrong = [&] {
    for (std::size_t i = 0; i < 8; ++i) p.grad[i] += std::cos(p.value[i]) * (i == 5 ? 1.01 : 1.0);
  };
  std::vector<Parameter*> ps{&p};
  const auto report = gradient_check(loss, wrong, ps, {});
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_error, 1e-3);
}

TEST(GradCheck, NondeterministicLossRejected) {
  auto p = param("p", {1}, {0});
  double drift = 0.0;
  std::vector<Parameter*> ps{&p};
  EXPECT_THROW(gradient_check([&] { return drift += 1.0; }, [] {}, ps, {}), ContractError);
}
