// One-iteration training steps for the BP and IL algorithm families.
#pragma once

#include "ilprox/energy.hpp"
#include "ilprox/linalg.hpp"
#include "ilprox/nn.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ilprox {

enum class AlgorithmKind { BpSgd, BpAdam, IlSgd, IlAdam, IlProx, IlProxFast, IlProxAdam, BpProx };

inline const char* algorithm_name(AlgorithmKind a) {
  switch (a) {
    case AlgorithmKind::BpSgd: return "bp-sgd";
    case AlgorithmKind::BpAdam: return "bp-adam";
    case AlgorithmKind::IlSgd: return "il-sgd";
    case AlgorithmKind::IlAdam: return "il-adam";
    case AlgorithmKind::IlProx: return "il-prox";
    case AlgorithmKind::IlProxFast: return "il-prox-fast";
    case AlgorithmKind::IlProxAdam: return "il-prox-adam";
    case AlgorithmKind::BpProx: return "bp-prox";
  }
  return "?";
}

inline std::optional<AlgorithmKind> parse_algorithm(const std::string& s) {
  for (auto a : {AlgorithmKind::BpSgd, AlgorithmKind::BpAdam, AlgorithmKind::IlSgd, AlgorithmKind::IlAdam,
                 AlgorithmKind::IlProx, AlgorithmKind::IlProxFast, AlgorithmKind::IlProxAdam, AlgorithmKind::BpProx}) {
    if (s == algorithm_name(a)) return a;
  }
  return std::nullopt;
}

inline bool is_adam(AlgorithmKind a) {
  return a == AlgorithmKind::BpAdam || a == AlgorithmKind::IlAdam || a == AlgorithmKind::IlProxAdam;
}
inline bool is_prox(AlgorithmKind a) {
  return a == AlgorithmKind::IlProx || a == AlgorithmKind::IlProxFast || a == AlgorithmKind::IlProxAdam ||
         a == AlgorithmKind::BpProx;
}
inline bool is_il(AlgorithmKind a) {
  return a == AlgorithmKind::IlSgd || a == AlgorithmKind::IlAdam || a == AlgorithmKind::IlProx ||
         a == AlgorithmKind::IlProxFast || a == AlgorithmKind::IlProxAdam;
}

struct TrainConfig {
  double lr = 0.01;        // step size, or soft-clamp alpha for the prox family
  double adam_lr = 1e-3;   // Adam step size for il-prox-adam (its lr is the clamp alpha)
  double epsilon = 0.25;   // NLMS denominator offset
  Activation act = Activation::ReLU;
  LossKind loss = LossKind::SoftmaxCE;
  PredictionMode mode = PredictionMode::PreActivation;
  GammaConfig gammas;      // inference settings; clamp is filled per algorithm
};

// Default inference settings for each IL variant.
inline TrainConfig default_train_config(AlgorithmKind a, double lr) {
  TrainConfig c;
  c.lr = lr;
  c.gammas.scheme = GammaScheme::BotTop;
  c.gammas.beta = 1.0;
  c.gammas.steps = 25;
  switch (a) {
    case AlgorithmKind::IlSgd:
    case AlgorithmKind::IlAdam:
      c.mode = PredictionMode::PostActivation;
      c.gammas.gamma_bot = 0.02;
      c.gammas.gamma_top = 0.015;
      break;
    case AlgorithmKind::IlProxFast:
      c.gammas.steps = 12;
      c.gammas.gamma_bot = 0.015;
      c.gammas.gamma_top = 0.0;
      break;
    default:
      c.gammas.gamma_bot = 0.015;
      c.gammas.gamma_top = 0.015;
      break;
  }
  return c;
}

struct AdamState {
  std::vector<Matrix> m, v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(const NetworkParams& p) {
    for (const auto& w : p.layers) {
      m.push_back(Matrix::Zero(w.rows(), w.cols()));
      v.push_back(Matrix::Zero(w.rows(), w.cols()));
    }
  }
};

struct TrainRecord {
  long iteration = 0;
  double loss = 0.0;
  bool correct = false;
  double update_norm = 0.0;
  bool diverged = false;
  std::map<std::string, double> extras;
};

// ---- weight rules --------------------------------------------------------

inline void check_outer(const Matrix& w, const Vector& e, const Vector& pre) {
  if (w.rows() != e.size() || w.cols() != pre.size()) throw LinalgError("weight update: dimension mismatch");
}

inline Matrix lms_update(const Matrix& w, const Vector& e_next, const Vector& pre, double alpha) {
  check_outer(w, e_next, pre);
  return w + alpha * e_next * pre.transpose();
}

inline Matrix nlms_update(const Matrix& w, const Vector& e_next, const Vector& pre, double epsilon) {
  check_outer(w, e_next, pre);
  const double d = pre.squaredNorm() + epsilon;
  if (!(d > 0.0)) throw std::domain_error("nlms_update: zero pre-synaptic vector with epsilon = 0");
  return w + (e_next / d) * pre.transpose();
}

// Targets hhat_n = h_n - dL/dh_n, obtained by backpropagating e = -dL/dh.
inline std::vector<Vector> bp_local_targets(const NetworkParams& params, Activation act, const std::vector<Vector>& h,
                                            LossKind loss, const Vector& y) {
  const std::size_t N = params.depth();
  std::vector<Vector> e(N + 1);
  e[N] = -loss_grad(loss, h[N], y);
  for (std::size_t n = N - 1; n >= 1; --n) {
    e[n] = activation_deriv(act, h[n]).cwiseProduct(params.weights(n).transpose() * e[n + 1]);
  }
  std::vector<Vector> hhat = h;
  for (std::size_t n = 1; n <= N; ++n) hhat[n] = h[n] + e[n];
  return hhat;
}

inline std::vector<Matrix> adam_step(AdamState& s, const std::vector<Matrix>& grads, double lr) {
  if (grads.size() != s.m.size()) throw LinalgError("adam_step: layer count mismatch");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  std::vector<Matrix> delta;
  delta.reserve(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != s.m[i].rows() || g.cols() != s.m[i].cols()) throw LinalgError("adam_step: shape mismatch");
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g.cwiseProduct(g);
    const auto mhat = s.m[i].array() / c1;
    const auto vhat = s.v[i].array() / c2;
    delta.push_back((-lr * mhat / (vhat.sqrt() + s.eps)).matrix());
  }
  return delta;
}

// ---- per-sample update directions ----------------------------------------

// Weight change for one sample before scaling: dW_n = rate_n * dir_n.
struct SampleUpdate {
  std::vector<Matrix> dir;
  std::vector<double> rate;
  double loss = 0.0;
  bool correct = false;
  std::vector<Vector> hhat;  // targets used, for diagnostics
};

inline Eigen::Index argmax(const Vector& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return i;
}

inline bool is_correct(const Vector& out, const Vector& y) {
  if (!out.allFinite()) return false;
  return argmax(out) == argmax(y);
}

// FF values with a probability-space output (softmax / sigmoid applied).
inline Vector sigma_output(LossKind loss, const Vector& logits) { return output_map(loss, logits); }

inline SampleUpdate bp_direction(const NetworkParams& params, const TrainConfig& cfg, const Vector& x,
                                 const Vector& y) {
  SampleUpdate u;
  const auto h = feedforward(params, cfg.act, x);
  const std::size_t N = params.depth();
  u.loss = loss_value(cfg.loss, h[N], y);
  u.correct = is_correct(h[N], y);
  u.hhat = bp_local_targets(params, cfg.act, h, cfg.loss, y);
  for (std::size_t n = 0; n < N; ++n) {
    u.dir.push_back((u.hhat[n + 1] - h[n + 1]) * presyn(params, cfg.act, n, h[n]).transpose());
    u.rate.push_back(cfg.lr);
  }
  return u;
}

inline SampleUpdate bp_prox_direction(const NetworkParams& params, const TrainConfig& cfg, const Vector& x,
                                      const Vector& y) {
  SampleUpdate u;
  const auto h = feedforward(params, cfg.act, x);
  const std::size_t N = params.depth();
  u.loss = loss_value(cfg.loss, h[N], y);
  u.correct = is_correct(h[N], y);
  const Vector out = sigma_output(cfg.loss, h[N]);
  const double k = presyn(params, cfg.act, N - 1, h[N - 1]).squaredNorm();
  std::vector<Vector> e(N + 1);
  e[N] = soft_clamp_output(out, y, k, cfg.lr) - out;
  for (std::size_t n = N - 1; n >= 1; --n) {
    e[n] = activation_deriv(cfg.act, h[n]).cwiseProduct(params.weights(n).transpose() * e[n + 1]);
  }
  u.hhat = h;
  for (std::size_t n = 1; n <= N; ++n) u.hhat[n] = h[n] + e[n];
  for (std::size_t n = 0; n < N; ++n) {
    const Vector a = presyn(params, cfg.act, n, h[n]);
    u.dir.push_back(e[n + 1] * a.transpose());
    u.rate.push_back(1.0 / (a.squaredNorm() + cfg.epsilon));
  }
  return u;
}

inline GammaConfig inference_config(AlgorithmKind a, const TrainConfig& cfg) {
  GammaConfig g = cfg.gammas;
  if (a == AlgorithmKind::IlSgd || a == AlgorithmKind::IlAdam) {
    g.clamp = ClampMode::Full;
  } else {
    g.clamp = ClampMode::Soft;
    g.clamp_alpha = cfg.lr;
    g.prox_alpha = cfg.lr;
  }
  return g;
}

inline SampleUpdate il_direction(AlgorithmKind a, const NetworkParams& params, const TrainConfig& cfg,
                                 const Vector& x, const Vector& y) {
  SampleUpdate u;
  const GammaConfig g = inference_config(a, cfg);
  const LayerState s = run_inference(params, cfg.act, g, cfg.loss, x, y, cfg.mode);
  const std::size_t N = params.depth();
  u.loss = loss_value(cfg.loss, s.ff_logits, y);
  u.correct = is_correct(s.ff_logits, y);
  const bool normalized = a != AlgorithmKind::IlSgd && a != AlgorithmKind::IlAdam;
  for (std::size_t n = 0; n < N; ++n) {
    const Vector pre = state_presyn(params, s, n);
    Vector e = s.e(n + 1);
    if (s.mode == PredictionMode::PostActivation && n + 1 < N) {
      e = activation_deriv(s.act, s.pz[n + 1]).cwiseProduct(e);
    }
    u.dir.push_back(e * pre.transpose());
    u.rate.push_back(normalized ? 1.0 / (pre.squaredNorm() + cfg.epsilon) : cfg.lr);
  }
  u.hhat = s.hhat;
  return u;
}

inline SampleUpdate sample_update(AlgorithmKind a, const NetworkParams& params, const TrainConfig& cfg,
                                  const Vector& x, const Vector& y) {
  switch (a) {
    case AlgorithmKind::BpSgd:
    case AlgorithmKind::BpAdam: return bp_direction(params, cfg, x, y);
    case AlgorithmKind::BpProx: return bp_prox_direction(params, cfg, x, y);
    default: return il_direction(a, params, cfg, x, y);
  }
}

// Applies one mini-batch. Directions are averaged over the batch and scaled
// by the batch-average rate; at batch size 1 this is the plain rule.
inline TrainRecord train_batch(AlgorithmKind a, NetworkParams& params, AdamState* adam, const TrainConfig& cfg,
                               const std::vector<Vector>& xs, const std::vector<Vector>& ys) {
  if (xs.empty() || xs.size() != ys.size()) throw std::invalid_argument("train_batch: empty or mismatched batch");
  if (is_adam(a) && adam == nullptr) throw std::invalid_argument("train_batch: Adam variant needs an AdamState");
  const std::size_t N = params.depth();
  std::vector<Matrix> dir(N);
  std::vector<double> rate(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) dir[n] = Matrix::Zero(params.layers[n].rows(), params.layers[n].cols());
  TrainRecord rec;
  int correct = 0;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const SampleUpdate u = sample_update(a, params, cfg, xs[b], ys[b]);
    for (std::size_t n = 0; n < N; ++n) {
      dir[n] += u.dir[n];
      rate[n] += u.rate[n];
    }
    rec.loss += u.loss;
    correct += u.correct ? 1 : 0;
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  rec.loss *= inv;
  rec.correct = correct * 2 > static_cast<int>(xs.size());
  std::vector<Matrix> delta(N);
  for (std::size_t n = 0; n < N; ++n) delta[n] = (rate[n] * inv) * (dir[n] * inv);
  if (is_adam(a)) {
    // Adam consumes gradients, i.e. the negative update direction. The
    // normalized variant passes its NLMS-scaled step.
    std::vector<Matrix> grads(N);
    for (std::size_t n = 0; n < N; ++n) {
      grads[n] = a == AlgorithmKind::IlProxAdam ? Matrix(-delta[n]) : Matrix(-(dir[n] * inv));
    }
    delta = adam_step(*adam, grads, a == AlgorithmKind::IlProxAdam ? cfg.adam_lr : cfg.lr);
  }
  double sq = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    params.layers[n] += delta[n];
    sq += delta[n].squaredNorm();
  }
  rec.update_norm = std::sqrt(sq);
  rec.diverged = !params_finite(params) || !std::isfinite(rec.update_norm);
  return rec;
}

inline TrainRecord train_step(AlgorithmKind a, NetworkParams& params, AdamState* adam, const TrainConfig& cfg,
                              const Vector& x, const Vector& y) {
  return train_batch(a, params, adam, cfg, {x}, {y});
}

inline TrainRecord bp_prox_step(NetworkParams& params, const TrainConfig& cfg, const Vector& x, const Vector& y) {
  return train_step(AlgorithmKind::BpProx, params, nullptr, cfg, x, y);
}

}  // namespace ilprox
