#include "ilprox/analysis.hpp"
#include "ilprox/learners.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ilprox;
using namespace testutil;

namespace {

Vector flat(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

Matrix unflat(const Vector& v, Eigen::Index r, Eigen::Index c) {
  return Eigen::Map<const Matrix>(v.data(), r, c);
}

TrainConfig mse_config(AlgorithmKind a, double lr, Activation act = Activation::Linear) {
  TrainConfig c = default_train_config(a, lr);
  c.loss = LossKind::MSE;
  c.act = act;
  return c;
}

double weight_distance_sq(const NetworkParams& a, const NetworkParams& b) {
  double d = 0.0;
  for (std::size_t n = 0; n < a.depth(); ++n) d += (a.layers[n] - b.layers[n]).squaredNorm();
  return d;
}

}  // namespace

TEST(BpTargets, ZeroGradientKeepsActivities) {
  Rng rng(1);
  NetworkParams p = gauss_net({3, 4, 2}, rng, true);
  const auto h = feedforward(p, Activation::Tanh, gauss(3, rng));
  const auto t = bp_local_targets(p, Activation::Tanh, h, LossKind::MSE, h[2]);
  for (std::size_t n = 1; n <= 2; ++n) EXPECT_EQ(t[n], h[n]);
}

TEST(BpTargets, OneLayerMseTargetIsLabel) {
  Rng rng(2);
  NetworkParams p = gauss_net({3, 2}, rng, true);
  const Vector y = gauss(2, rng);
  const auto h = feedforward(p, Activation::Linear, gauss(3, rng));
  EXPECT_LT((bp_local_targets(p, Activation::Linear, h, LossKind::MSE, y)[1] - y).norm(), 1e-15);
}

TEST(BpTargets, LocalUpdateIsNegativeGlobalGradient) {
  for (auto loss : {LossKind::MSE, LossKind::SoftmaxCE}) {
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(10 + seed);
      NetworkParams p = gauss_net({4, 5, 3, 3}, rng, true);
      const Vector x = gauss(4, rng);
      Vector y = gauss(3, rng);
      if (loss == LossKind::SoftmaxCE) {
        y = Vector::Zero(3);
        y(seed % 3) = 1.0;
      }
      TrainConfig cfg = mse_config(AlgorithmKind::BpSgd, 1.0, Activation::Tanh);
      cfg.loss = loss;
      const SampleUpdate u = bp_direction(p, cfg, x, y);
      for (std::size_t n = 0; n < 3; ++n) {
        const Matrix& w = p.layers[n];
        auto fn = [&](const Vector& v) {
          NetworkParams q = p;
          q.layers[n] = unflat(v, w.rows(), w.cols());
          return loss_value(loss, feedforward(q, Activation::Tanh, x).back(), y);
        };
        EXPECT_LT(rel_err(flat(u.dir[n]), -finite_diff(fn, flat(w))), 1e-5) << "layer " << n;
      }
    }
  }
}

TEST(Lms, Examples) {
  const Matrix w = Matrix::Zero(1, 2);
  EXPECT_EQ(lms_update(w, vec({0}), vec({3, 1}), 0.7), w);
  Matrix expect(1, 2);
  expect << 2, 2;
  EXPECT_EQ(lms_update(w, vec({2}), vec({1, 1}), 1.0), expect);
  EXPECT_THROW(lms_update(w, vec({1, 1}), vec({1, 1}), 1.0), LinalgError);
}

TEST(Lms, ProportionalToNlms) {
  Rng rng(3);
  const Matrix w = gauss_mat(3, 4, rng);
  const Vector e = gauss(3, rng), a = gauss(4, rng);
  const double alpha = 0.37;
  const Matrix lms = lms_update(w, e, a, alpha) - w;
  const Matrix nlms = nlms_update(w, e, a, 0.0) - w;
  EXPECT_LT((lms - alpha * a.squaredNorm() * nlms).norm(), 1e-13);
}

TEST(Nlms, Examples) {
  const Matrix w = Matrix::Zero(1, 2);
  EXPECT_EQ(nlms_update(w, vec({0}), vec({1, 1}), 0.0), w);
  const Matrix w2 = nlms_update(w, vec({2}), vec({1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(w2(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(w2(0, 1), 1.0);
  EXPECT_DOUBLE_EQ((w2 * vec({1, 1}))(0), 2.0);
  EXPECT_THROW(nlms_update(w, vec({1}), vec({0, 0}), 0.0), std::domain_error);
}

TEST(Nlms, MinimumNormInterpolation) {
  for (int seed = 0; seed < 50; ++seed) {
    Rng rng(100 + seed);
    const Matrix w = gauss_mat(3, 5, rng);
    const Vector a = gauss(5, rng), target = gauss(3, rng);
    const Vector e = target - w * a;
    const Matrix w2 = nlms_update(w, e, a, 0.0);
    EXPECT_LT((w2 * a - target).norm(), 1e-12);
    Matrix col(5, 1);
    col.col(0) = a;
    const Matrix oracle = w + e * pinv(col).row(0);
    EXPECT_LT((w2 - oracle).norm(), 1e-10);
  }
}

TEST(Adam, FirstStepIsSignStep) {
  Rng rng(4);
  NetworkParams p = gauss_net({3, 2}, rng, true);
  AdamState s(p);
  const Matrix g = gauss_mat(2, 4, rng);
  const auto d = adam_step(s, {g}, 0.01);
  EXPECT_EQ(s.t, 1);
  EXPECT_LT((d[0] + 0.01 * g.array().sign().matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Adam, ZeroGradientsGiveZeroDelta) {
  Rng rng(5);
  NetworkParams p = gauss_net({3, 2}, rng, true);
  AdamState s(p);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(adam_step(s, {Matrix::Zero(2, 4)}, 0.1)[0].norm(), 0.0);
}

TEST(Adam, RepeatedGradientDoesNotGrowStep) {
  Rng rng(6);
  NetworkParams p = gauss_net({3, 2}, rng, true);
  AdamState s(p);
  const Matrix g = gauss_mat(2, 4, rng);
  const double d1 = adam_step(s, {g}, 0.01)[0].norm();
  const double d2 = adam_step(s, {g}, 0.01)[0].norm();
  EXPECT_LE(d2, d1 * 1.01);
}

TEST(Adam, ShapeMismatchThrows) {
  Rng rng(6);
  NetworkParams p = gauss_net({3, 2}, rng, true);
  AdamState s(p);
  EXPECT_THROW(adam_step(s, {Matrix::Zero(3, 3)}, 0.1), LinalgError);
  EXPECT_THROW(adam_step(s, {}, 0.1), LinalgError);
}

TEST(TrainStep, ZeroLearningRateLeavesBpUnchanged) {
  Rng rng(7);
  NetworkParams p = gauss_net({3, 4, 2}, rng, true);
  const NetworkParams before = p;
  const TrainRecord r = train_step(AlgorithmKind::BpSgd, p, nullptr, mse_config(AlgorithmKind::BpSgd, 0.0),
                                   gauss(3, rng), gauss(2, rng));
  EXPECT_EQ(r.update_norm, 0.0);
  EXPECT_EQ(weight_distance_sq(p, before), 0.0);
}

TEST(TrainStep, AdamVariantNeedsState) {
  Rng rng(7);
  NetworkParams p = gauss_net({3, 2}, rng, true);
  EXPECT_THROW(train_step(AlgorithmKind::BpAdam, p, nullptr, mse_config(AlgorithmKind::BpAdam, 0.1), gauss(3, rng),
                          gauss(2, rng)),
               std::invalid_argument);
}

TEST(TrainStep, IlProxWithZeroAlphaBarelyMoves) {
  Rng rng(8);
  NetworkParams p = gauss_net({4, 5, 3}, rng, true);
  TrainConfig cfg = mse_config(AlgorithmKind::IlProx, 0.0, Activation::ReLU);
  cfg.gammas.beta = 0.1;
  const TrainRecord r = train_step(AlgorithmKind::IlProx, p, nullptr, cfg, gauss(4, rng), gauss(3, rng));
  EXPECT_LT(r.update_norm, 1e-9);
}

TEST(TrainStep, IlProxSolutionReproducesTargets) {
  for (auto act : {Activation::Linear, Activation::Tanh}) {
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(200 + seed);
      NetworkParams p = gauss_net({4, 6, 5, 3}, rng, true);
      const Vector x = gauss(4, rng), y = gauss(3, rng);
      TrainConfig cfg = mse_config(AlgorithmKind::IlProx, 0.5, act);
      cfg.epsilon = 0.0;
      const SampleUpdate u = sample_update(AlgorithmKind::IlProx, p, cfg, x, y);
      train_step(AlgorithmKind::IlProx, p, nullptr, cfg, x, y);
      const auto h = feedforward(p, act, x);
      for (std::size_t n = 1; n <= 3; ++n) EXPECT_LT((h[n] - u.hhat[n]).norm(), 1e-9) << "layer " << n;
    }
  }
}

TEST(TrainStep, DuplicatedBatchEqualsSingleSample) {
  for (auto a : {AlgorithmKind::BpSgd, AlgorithmKind::IlSgd, AlgorithmKind::IlProx, AlgorithmKind::BpProx}) {
    Rng rng(9);
    NetworkParams p = gauss_net({4, 5, 3}, rng, true);
    NetworkParams q = p;
    const Vector x = gauss(4, rng);
    Vector y = Vector::Zero(3);
    y(1) = 1.0;
    TrainConfig cfg = default_train_config(a, 0.05);
    train_step(a, p, nullptr, cfg, x, y);
    train_batch(a, q, nullptr, cfg, {x, x, x}, {y, y, y});
    EXPECT_LT(weight_distance_sq(p, q), 1e-24) << algorithm_name(a);
  }
}

TEST(TrainStep, AllAlgorithmsProduceFiniteUpdates) {
  for (auto a : {AlgorithmKind::BpSgd, AlgorithmKind::BpAdam, AlgorithmKind::IlSgd, AlgorithmKind::IlAdam,
                 AlgorithmKind::IlProx, AlgorithmKind::IlProxFast, AlgorithmKind::IlProxAdam, AlgorithmKind::BpProx}) {
    Rng rng(10);
    NetworkParams p = init_params({6, 5, 4}, rng);
    AdamState adam(p);
    TrainConfig cfg = default_train_config(a, is_adam(a) && a != AlgorithmKind::IlProxAdam ? 1e-3 : 0.05);
    Vector y = Vector::Zero(4);
    y(2) = 1.0;
    const TrainRecord r = train_step(a, p, &adam, cfg, gauss(6, rng), y);
    EXPECT_FALSE(r.diverged) << algorithm_name(a);
    EXPECT_GT(r.update_norm, 0.0) << algorithm_name(a);
    EXPECT_TRUE(std::isfinite(r.loss));
  }
}

TEST(TrainStep, RepeatedStepsReduceLossOnOneSample) {
  for (auto a : {AlgorithmKind::BpSgd, AlgorithmKind::IlSgd, AlgorithmKind::IlProx, AlgorithmKind::BpProx}) {
    Rng rng(11);
    NetworkParams p = init_params({6, 8, 4}, rng);
    const Vector x = gauss(6, rng);
    Vector y = Vector::Zero(4);
    y(0) = 1.0;
    const TrainConfig cfg = default_train_config(a, 0.1);
    const double first = train_step(a, p, nullptr, cfg, x, y).loss;
    double last = first;
    for (int i = 0; i < 30; ++i) last = train_step(a, p, nullptr, cfg, x, y).loss;
    EXPECT_LT(last, first) << algorithm_name(a);
  }
}

TEST(BpProx, ZeroAlphaLeavesParamsUnchanged) {
  Rng rng(12);
  NetworkParams p = gauss_net({3, 4, 2}, rng, true);
  const NetworkParams before = p;
  const TrainRecord r = bp_prox_step(p, mse_config(AlgorithmKind::BpProx, 0.0), gauss(3, rng), gauss(2, rng));
  EXPECT_EQ(r.update_norm, 0.0);
  EXPECT_EQ(weight_distance_sq(p, before), 0.0);
}

TEST(BpProx, LargeAlphaInterpolatesLabel) {
  Rng rng(13);
  NetworkParams p = gauss_net({3, 2}, rng, true);
  const Vector x = gauss(3, rng), y = gauss(2, rng);
  TrainConfig cfg = mse_config(AlgorithmKind::BpProx, 1e12);
  cfg.epsilon = 0.0;
  const Matrix expect = nlms_update(p.layers[0], y - feedforward(p, Activation::Linear, x)[1], augment(x), 0.0);
  bp_prox_step(p, cfg, x, y);
  EXPECT_LT((p.layers[0] - expect).norm(), 1e-9);
}

TEST(BpProx, CoincidesWithIlProxWithoutHiddenLayers) {
  for (auto loss : {LossKind::MSE, LossKind::SoftmaxCE}) {
    Rng rng(14);
    NetworkParams p = gauss_net({5, 3}, rng, true);
    NetworkParams q = p;
    const Vector x = gauss(5, rng);
    Vector y = Vector::Zero(3);
    y(2) = 1.0;
    TrainConfig cfg = default_train_config(AlgorithmKind::IlProx, 0.3);
    cfg.loss = loss;
    train_step(AlgorithmKind::IlProx, p, nullptr, cfg, x, y);
    bp_prox_step(q, cfg, x, y);
    EXPECT_LT(std::sqrt(weight_distance_sq(p, q)), 1e-9);
  }
}

TEST(IlProx, ProximalDescent) {
  for (double alpha : {0.1, 1.0, 10.0, 100.0}) {
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng(300 + seed);
      NetworkParams p = gauss_net({4, 5, 4, 3}, rng, true);
      const Vector x = gauss(4, rng), y = gauss(3, rng);
      TrainConfig cfg = mse_config(AlgorithmKind::IlProx, alpha);
      cfg.epsilon = 0.0;
      cfg.gammas.scheme = GammaScheme::ProxLimits;
      cfg.gammas.beta = 0.01 * std::min(1.0, alpha);
      cfg.gammas.steps = 2000;
      const NetworkParams before = p;
      const double l0 = loss_value(LossKind::MSE, feedforward(p, Activation::Linear, x).back(), y);
      train_step(AlgorithmKind::IlProx, p, nullptr, cfg, x, y);
      const double l1 = loss_value(LossKind::MSE, feedforward(p, Activation::Linear, x).back(), y);
      EXPECT_LE(l1 + weight_distance_sq(p, before) / (2 * alpha), l0 + 1e-8) << "alpha " << alpha << " seed " << seed;
    }
  }
}

TEST(Algorithms, NamesRoundTrip) {
  for (auto a : {AlgorithmKind::BpSgd, AlgorithmKind::BpAdam, AlgorithmKind::IlSgd, AlgorithmKind::IlAdam,
                 AlgorithmKind::IlProx, AlgorithmKind::IlProxFast, AlgorithmKind::IlProxAdam, AlgorithmKind::BpProx}) {
    EXPECT_EQ(parse_algorithm(algorithm_name(a)), a);
  }
  EXPECT_FALSE(parse_algorithm("sgd").has_value());
  EXPECT_EQ(default_train_config(AlgorithmKind::IlProxFast, 0.1).gammas.steps, 12);
  EXPECT_EQ(default_train_config(AlgorithmKind::IlProx, 0.1).gammas.steps, 25);
}
