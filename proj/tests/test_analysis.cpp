#include "ilprox/analysis.hpp"
#include "ilprox/datasets.hpp"
#include "test_util.hpp"

#include <Eigen/LU>
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace ilprox;
using namespace testutil;

namespace {

const std::vector<int> kToy{10, 5, 5, 5, 5};

}  // namespace

TEST(FiniteDiff, Quadratic) {
  Rng rng(1);
  const Vector v = gauss(5, rng);
  EXPECT_LT((finite_diff([](const Vector& u) { return 0.5 * u.squaredNorm(); }, v) - v).norm(), 1e-7);
  EXPECT_LT(finite_diff([](const Vector&) { return 3.0; }, v).norm(), 1e-12);
}

TEST(Descent, ZeroErrorIsSkipped) {
  Rng rng(2);
  NetworkParams p = gauss_net(kToy, rng, false);
  const Vector x = gauss(10, rng);
  const Vector y = feedforward(p, Activation::Linear, x).back();
  EXPECT_TRUE(verify_descent(p, x, y, GnRule::IlGn, 0.1).skipped);
}

TEST(Descent, IlGnFollowsNegativeGradient) {
  const Dataset data = teacher_student_dataset(7, 50, kToy);
  int qualifying = 0;
  for (double alpha : {0.001, 0.01, 0.1, 1.0, 5.0}) {
    for (int seed = 0; seed < 50; ++seed) {
      Rng rng(100 + seed);
      NetworkParams p = init_params(kToy, rng, false);
      const DescentReport r = verify_descent(p, data.inputs[seed], data.targets[seed], GnRule::IlGn, alpha);
      if (r.skipped || !r.assumptions_hold()) continue;
      ++qualifying;
      EXPECT_GT(r.cosine, 0.0);
      EXPECT_NEAR(r.cosine, 1.0, 1e-6) << "alpha " << alpha << " seed " << seed;
    }
  }
  EXPECT_GT(qualifying, 0);
}

TEST(Descent, BpGnCanAscendAtLargeRate) {
  const Dataset data = teacher_student_dataset(7, 50, kToy);
  int ascents = 0;
  for (double alpha : {0.001, 0.01, 0.1, 1.0, 5.0}) {
    for (int seed = 0; seed < 50; ++seed) {
      Rng rng(100 + seed);
      NetworkParams p = init_params(kToy, rng, false);
      const DescentReport r = verify_descent(p, data.inputs[seed], data.targets[seed], GnRule::BpGn, alpha);
      if (!r.skipped && r.cosine <= 0.0) ++ascents;
    }
  }
  EXPECT_GE(ascents, 1);
}

TEST(Compatibility, DegenerateCases) {
  Rng rng(3);
  NetworkParams one = gauss_net({4, 2}, rng, true);
  const Vector x = gauss(4, rng);
  const CompatReport single = compatibility_from_deltas(one, Activation::Linear, x, {gauss_mat(2, 5, rng)});
  EXPECT_EQ(single.total, 1);
  EXPECT_EQ(single.score, 1.0);
  NetworkParams p = gauss_net({4, 3, 2}, rng, true);
  const CompatReport zero =
      compatibility_from_deltas(p, Activation::Tanh, x, {Matrix::Zero(3, 5), Matrix::Zero(2, 4)});
  EXPECT_EQ(zero.score, 1.0);
  EXPECT_EQ(zero.total, 2);
}

TEST(Compatibility, OrderIndependent) {
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(200 + seed);
    NetworkParams p = gauss_net({4, 5, 5, 3}, rng, true);
    const Vector x = gauss(4, rng);
    std::vector<Matrix> deltas;
    for (const auto& w : p.layers) deltas.push_back(gauss_mat(w.rows(), w.cols(), rng, 0.3));
    const CompatReport a = compatibility_from_deltas(p, Activation::Tanh, x, deltas, {0, 1, 2});
    const CompatReport b = compatibility_from_deltas(p, Activation::Tanh, x, deltas, {2, 0, 1});
    EXPECT_EQ(a.compatible, b.compatible);
    EXPECT_EQ(a.score, b.score);
  }
}

TEST(Compatibility, IlScoresAboveBpOnToyNets) {
  const Dataset data = teacher_student_dataset(11, 200, kToy);
  std::vector<double> il, bp;
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(300 + seed);
    const NetworkParams p = init_params(kToy, rng);
    for (auto a : {AlgorithmKind::IlSgd, AlgorithmKind::BpSgd}) {
      (a == AlgorithmKind::IlSgd ? il : bp)
          .push_back(mean_compatibility(p, a, toy_config(a, 0.001), data.inputs, data.targets, 100));
    }
  }
  EXPECT_GT(mean_std(il).first, mean_std(bp).first);
  EXPECT_GT(welch_t(il, bp), 2.0);
}

TEST(MinNorm, Cosines) {
  const Vector before = vec({1, 0}), y = vec({0, 1});
  EXPECT_NEAR(min_norm_cosine(before, y, y), 1.0, 1e-15);
  EXPECT_NEAR(min_norm_cosine(before, 2 * before - y, y), -1.0, 1e-15);
  EXPECT_THROW(min_norm_cosine(before, before, y), LinalgError);
}

TEST(Stats, UpdateNorms) {
  std::vector<TrainRecord> recs(3);
  for (auto& r : recs) r.update_norm = 0.4;
  auto [m, s] = update_norm_stats(recs);
  EXPECT_DOUBLE_EQ(m, 0.4);
  EXPECT_NEAR(s, 0.0, 1e-15);
  recs.resize(2);
  recs[0].update_norm = 0.0;
  recs[1].update_norm = 2.0;
  std::tie(m, s) = update_norm_stats(recs);
  EXPECT_DOUBLE_EQ(m, 1.0);
  EXPECT_DOUBLE_EQ(s, 1.0);
  EXPECT_THROW(update_norm_stats({}), std::invalid_argument);
}

TEST(Stats, WelchT) {
  // means 2 and 0, unbiased variances 1 and 1, n = 3 each: t = 2 / sqrt(2/3)
  EXPECT_NEAR(welch_t({1, 2, 3}, {-1, 0, 1}), 2.0 / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_EQ(welch_t({1, 1}, {1, 1}), 0.0);
  EXPECT_THROW(welch_t({1}, {1, 2}), std::invalid_argument);
}

TEST(Interference, ZeroErrorHasNoEffect) {
  Rng rng(4);
  NetworkParams p = gauss_net({4, 3, 3}, rng, false);
  const Vector x = gauss(4, rng);
  const Vector y = feedforward(p, Activation::Linear, x).back();
  for (auto rule : {GnRule::IlGn, GnRule::BpGn}) {
    const InterferenceReport r = interference_effect_pair(p, x, y, rule, 0.1);
    EXPECT_EQ(r.together_w0 + r.together_w1 + r.alone_w0 + r.alone_w1, 0.0);
  }
}

TEST(Interference, ScalarsMatchFormulas) {
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(400 + seed);
    NetworkParams p = gauss_net({4, 3, 3}, rng, false);
    const Vector x = gauss(4, rng), y = gauss(3, rng);
    const double alpha = 0.05, gamma = 0.4;
    const InterferenceReport r = interference_effect_pair(p, x, y, GnRule::IlGn, alpha, gamma);
    const auto h = feedforward(p, Activation::Linear, x);
    const Vector dh2 = y - h[2];
    const Vector hhat1 = h[1] + gamma * (p.layers[1].inverse() * dh2);
    EXPECT_NEAR(r.c1, alpha * x.squaredNorm(), 1e-12);
    EXPECT_NEAR(r.c2, alpha * hhat1.dot(h[1]), 1e-10);
    const double rho = gamma / (1 - gamma);
    EXPECT_NEAR(r.g1, rho + alpha * (hhat1.squaredNorm() - hhat1.dot(h[1])), 1e-10);
    EXPECT_LT((r.e2 - (1 - gamma) * dh2).norm(), 1e-10);
    // exact, the second-order term is folded into g1
    EXPECT_LT((r.h2_both - (r.h2 + r.c2 * r.e2 + r.g1 * r.c1 * r.e2)).norm(), 1e-10);
  }
}

TEST(Interference, IlOrderingOnConstructedInstance) {
  // square W1 and a rescaled W0 make c1 = c2; then g1 > 1 means the joint
  // effect of each update exceeds its effect alone
  int checked = 0;
  for (int seed = 0; seed < 40; ++seed) {
    Rng rng(500 + seed);
    NetworkParams p = gauss_net({4, 3, 3}, rng, false, 0.6);
    const Vector x = gauss(4, rng), y = gauss(3, rng);
    const double gamma = 0.5, alpha = 0.05;  // rho = 1
    const Vector h1 = p.layers[0] * x;
    // solve t^2 (1-gamma)|h1|^2 + gamma t h1.(W1^{-1} y) = |x|^2 for t > 0, with h1 -> t h1
    const double a = (1 - gamma) * h1.squaredNorm();
    const double b = gamma * h1.dot(p.layers[1].inverse() * y);
    const double c = -x.squaredNorm();
    const double disc = b * b - 4 * a * c;
    if (disc < 0) continue;
    const double t = (-b + std::sqrt(disc)) / (2 * a);
    if (!(t > 0)) continue;
    p.layers[0] *= t;
    const InterferenceReport r = interference_effect_pair(p, x, y, GnRule::IlGn, alpha, gamma);
    ASSERT_NEAR(r.c1, r.c2, 1e-9 * r.c1);
    if (r.g1 <= 1.0) continue;
    ++checked;
    EXPECT_GT(r.together_w1, r.alone_w1);
    EXPECT_GT(r.together_w0, r.alone_w0);
  }
  EXPECT_GT(checked, 5);
}

TEST(Interference, BpInstanceDisjunction) {
  int checked = 0;
  for (int seed = 0; seed < 40; ++seed) {
    Rng rng(600 + seed);
    NetworkParams p = gauss_net({4, 3, 3}, rng, false, 0.6);
    const Vector x = gauss(4, rng), y = gauss(3, rng);
    const InterferenceReport r = interference_effect_pair(p, x, y, GnRule::BpGn, 0.05);
    if (r.g1 >= 1.0) continue;
    ++checked;
    EXPECT_TRUE(r.alone_w1 >= r.together_w1 || r.alone_w0 >= r.together_w0 || !r.output_descends);
  }
  EXPECT_GT(checked, 5);
}
