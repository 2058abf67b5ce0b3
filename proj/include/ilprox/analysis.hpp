// Oracles and diagnostics: finite differences, output-descent checks for
// IL-GN / BP-GN, compatibility scores, interference magnitudes and simple
// statistics.
#pragma once

#include "ilprox/closed_form.hpp"
#include "ilprox/learners.hpp"
#include "ilprox/linalg.hpp"
#include "ilprox/nn.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace ilprox {

inline Vector finite_diff(const std::function<double(const Vector&)>& fn, const Vector& point, double step = 1e-5) {
  Vector g(point.size());
  Vector v = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double x0 = v(i);
    v(i) = x0 + step;
    const double fp = fn(v);
    v(i) = x0 - step;
    const double fm = fn(v);
    v(i) = x0;
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

// max_i |a_i - b_i| / max(|b|_inf, floor)
inline double rel_err(const Vector& a, const Vector& b, double floor = 1e-8) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

struct DescentReport {
  double alpha = 0.0;
  double cosine = 0.0;
  bool j_positive = false;
  bool skipped = false;
  bool hp_positive = true;   // hhat_n . p_n > 0 for all n
  bool hh_positive = true;   // hhat_n . h_n > 0 for all n
  bool hhat_dominant = true; // hhat_n . hhat_n > hhat_n . p_n for all n
  bool assumptions_hold() const { return hp_positive && hh_positive && hhat_dominant; }
};

// One GN step on a bias-free linear net with MSE loss. Reports the cosine
// between the change in the output and -dL/dh_N.
inline DescentReport verify_descent(const NetworkParams& params, const Vector& x, const Vector& y, GnRule rule,
                                    double alpha, double gamma = 0.9) {
  require_bias_free(params, "verify_descent");
  DescentReport r;
  r.alpha = alpha;
  const auto h = feedforward(params, Activation::Linear, x);
  const std::size_t N = params.depth();
  const Vector g = loss_grad(LossKind::MSE, h[N], y);
  if (g.norm() < 1e-12) {
    r.skipped = true;
    return r;
  }
  const auto hhat = rule == GnRule::IlGn ? il_gn_targets(params, h, g, gamma) : bp_gn_targets(params, h, g);
  if (rule == GnRule::IlGn) {
    for (std::size_t n = 1; n <= N; ++n) {
      const Vector p = params.layers[n - 1] * hhat[n - 1];
      r.hp_positive = r.hp_positive && hhat[n].dot(p) > 0.0;
      r.hh_positive = r.hh_positive && hhat[n].dot(h[n]) > 0.0;
      r.hhat_dominant = r.hhat_dominant && hhat[n].dot(hhat[n]) > hhat[n].dot(p);
    }
  } else {
    r.hp_positive = r.hh_positive = r.hhat_dominant = false;  // assumptions not applicable
  }
  const NetworkParams next = apply_gn_step(hhat, h, params, rule, alpha);
  const Vector dh = feedforward(next, Activation::Linear, x)[N] - h[N];
  if (dh.norm() < 1e-12) {
    r.skipped = true;
    return r;
  }
  r.cosine = cosine_similarity(dh, -g);
  r.j_positive = r.cosine > 0.0;
  return r;
}

struct CompatReport {
  double score = 1.0;
  int compatible = 0;
  int total = 0;
};

// Counts layer updates whose effect on the output is at least as large when
// applied together with the others as when applied alone. Each comparison
// is computed from scratch, so the order of layers does not matter.
inline CompatReport compatibility_from_deltas(const NetworkParams& params, Activation act, const Vector& x,
                                              const std::vector<Matrix>& deltas,
                                              const std::vector<std::size_t>& order = {}) {
  const std::size_t N = params.depth();
  auto out_with = [&](auto include) {
    NetworkParams q = params;
    for (std::size_t k = 0; k < N; ++k)
      if (include(k)) q.layers[k] += deltas[k];
    return feedforward(q, act, x)[N];
  };
  const Vector before = feedforward(params, act, x)[N];
  const Vector all = out_with([](std::size_t) { return true; });
  CompatReport r;
  std::vector<std::size_t> idx = order;
  if (idx.empty())
    for (std::size_t n = 0; n < N; ++n) idx.push_back(n);
  for (std::size_t n : idx) {
    const Vector without = out_with([n](std::size_t k) { return k != n; });
    const Vector alone = out_with([n](std::size_t k) { return k == n; });
    ++r.total;
    if ((all - without).norm() >= (alone - before).norm()) ++r.compatible;
  }
  r.score = r.total == 0 ? 1.0 : static_cast<double>(r.compatible) / r.total;
  return r;
}

// Compatibility of one IL-SGD or BP-SGD step (any AlgorithmKind works).
inline CompatReport compatibility_score(const NetworkParams& params, const Vector& x, const Vector& y,
                                        AlgorithmKind algo, const TrainConfig& cfg) {
  const SampleUpdate u = sample_update(algo, params, cfg, x, y);
  std::vector<Matrix> deltas;
  for (std::size_t n = 0; n < u.dir.size(); ++n) deltas.push_back(u.rate[n] * u.dir[n]);
  return compatibility_from_deltas(params, cfg.act, x, deltas);
}

// IL-SGD / BP-SGD settings for the linear toy regression nets. IL runs the
// plain free energy (gamma = 1 everywhere) close to equilibrium.
inline TrainConfig toy_config(AlgorithmKind a, double lr, Activation act = Activation::Linear) {
  TrainConfig c = default_train_config(a, lr);
  c.act = act;
  c.loss = LossKind::MSE;
  if (is_il(a)) {
    c.gammas.scheme = GammaScheme::Explicit;
    c.gammas.gamma.clear();
    c.gammas.beta = 0.1;
    c.gammas.steps = 100;
  }
  return c;
}

// Trains on (xs[i], ys[i]) for `iters` steps, scoring every step before it
// is applied. Returns the mean score.
inline double mean_compatibility(NetworkParams params, AlgorithmKind algo, const TrainConfig& cfg,
                                 const std::vector<Vector>& xs, const std::vector<Vector>& ys, std::size_t iters) {
  if (xs.empty()) throw std::invalid_argument("mean_compatibility: no data");
  double total = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    const Vector& x = xs[it % xs.size()];
    const Vector& y = ys[it % ys.size()];
    total += compatibility_score(params, x, y, algo, cfg).score;
    train_step(algo, params, nullptr, cfg, x, y);
  }
  return total / static_cast<double>(iters);
}

inline double min_norm_cosine(const Vector& before, const Vector& after, const Vector& y) {
  return cosine_similarity(after - before, y - before);
}

// Sample mean and population standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean_std: empty input");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

inline std::pair<double, double> update_norm_stats(const std::vector<TrainRecord>& records) {
  if (records.empty()) throw std::invalid_argument("update_norm_stats: no records");
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.update_norm);
  return mean_std(v);
}

// Welch two-sample t statistic (unbiased variances).
inline double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t: need at least two samples per group");
  auto stats = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  const auto [ma, va] = stats(a);
  const auto [mb, vb] = stats(b);
  const double se = std::sqrt(va / a.size() + vb / b.size());
  if (se == 0.0) return ma == mb ? 0.0 : (ma > mb ? INFINITY : -INFINITY);
  return (ma - mb) / se;
}

struct InterferenceReport {
  // |h2(both) - h2(W0 only)|, |h2(W1 only) - h2|, |h2(both) - h2(W1 only)|, |h2(W0 only) - h2|
  double together_w1 = 0.0;
  double alone_w1 = 0.0;
  double together_w0 = 0.0;
  double alone_w0 = 0.0;
  double c1 = 0.0, c2 = 0.0, g1 = 0.0;
  double rho = 0.0;  // W1 e1 = rho e2
  Vector e2;
  Vector h2, h2_both;
  bool output_descends = false;  // h2(both) - h2 points along e2
};

// Single-hidden-layer bias-free linear net, one GN step at mini-batch 1.
// For IL-GN the first hidden layer has p_1 = h_1, so e_1 = dh_1 =
// gamma W_1^+ dh_2 while e_2 = (1 - gamma) dh_2, giving rho = gamma / (1 - gamma).
inline InterferenceReport interference_effect_pair(const NetworkParams& params, const Vector& x, const Vector& y,
                                                   GnRule rule, double alpha, double gamma = 0.5) {
  require_bias_free(params, "interference_effect_pair");
  if (params.depth() != 2) throw std::invalid_argument("interference_effect_pair: expects exactly two weight matrices");
  InterferenceReport r;
  const auto h = feedforward(params, Activation::Linear, x);
  const Vector g = loss_grad(LossKind::MSE, h[2], y);
  const auto hhat = rule == GnRule::IlGn ? il_gn_targets(params, h, g, gamma) : bp_gn_targets(params, h, g);
  const NetworkParams both = apply_gn_step(hhat, h, params, rule, alpha);
  NetworkParams only0 = params, only1 = params;
  only0.layers[0] = both.layers[0];
  only1.layers[1] = both.layers[1];
  const Vector h2 = h[2];
  const Vector hb = feedforward(both, Activation::Linear, x)[2];
  const Vector h0 = feedforward(only0, Activation::Linear, x)[2];
  const Vector h1 = feedforward(only1, Activation::Linear, x)[2];
  r.together_w1 = (hb - h0).norm();
  r.alone_w1 = (h1 - h2).norm();
  r.together_w0 = (hb - h1).norm();
  r.alone_w0 = (h0 - h2).norm();
  r.h2 = h2;
  r.h2_both = hb;
  r.c1 = alpha * x.dot(x);
  if (rule == GnRule::IlGn) {
    const Vector p1 = h[1];
    r.e2 = hhat[2] - params.layers[1] * hhat[1];
    r.rho = gamma < 1.0 ? gamma / (1.0 - gamma) : INFINITY;
    r.c2 = alpha * hhat[1].dot(h[1]);
    r.g1 = r.rho + alpha * (hhat[1].dot(hhat[1]) - hhat[1].dot(p1));
  } else {
    r.e2 = hhat[2] - h[2];
    r.rho = 1.0;
    r.c2 = alpha * h[1].dot(h[1]);
    r.g1 = 1.0 + alpha * (h[1].dot(hhat[1]) - h[1].dot(h[1]));
  }
  r.output_descends = (hb - h2).dot(r.e2) > 0.0;
  return r;
}

}  // namespace ilprox
