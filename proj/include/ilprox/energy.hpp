// Free energy, proximal loss and the activity relaxation (inference phase).
//
// Indexing follows the network: hhat[0] is the input and is never moved,
// hhat[N] is the output layer. p[n] is layer n's prediction from below and
// p[0] just mirrors the input.
#pragma once

#include "ilprox/linalg.hpp"
#include "ilprox/nn.hpp"

#include <functional>
#include <vector>

namespace ilprox {

enum class ClampMode { None, Full, Soft };
enum class PredictionMode { PreActivation, PostActivation };

// Explicit: per-layer gamma / gamma_decay vectors.
// BotTop:   one pair of weights shared by all hidden layers, decay off.
// ProxLimits: gammas recomputed from the current state before every layer
//             update so the relaxation descends the proximal loss.
enum class GammaScheme { Explicit, BotTop, ProxLimits };

struct GammaConfig {
  GammaScheme scheme = GammaScheme::Explicit;
  std::vector<double> gamma;        // indexed 1..N, entry 0 unused; empty means all 1
  std::vector<double> gamma_decay;  // indexed 1..N-1; empty means all 0
  double gamma_bot = 0.015;
  double gamma_top = 0.015;
  double beta = 0.1;
  int steps = 25;
  ClampMode clamp = ClampMode::None;
  double clamp_alpha = 0.0;
  double prox_alpha = 1.0;  // used by ProxLimits

  double g(std::size_t n) const { return n < gamma.size() ? gamma[n] : 1.0; }
  double decay(std::size_t n) const { return n < gamma_decay.size() ? gamma_decay[n] : 0.0; }
};

struct LayerState {
  std::vector<Vector> h;     // feedforward values, fixed after init
  std::vector<Vector> hhat;  // relaxed values
  std::vector<Vector> p;     // predictions from the layer below
  std::vector<Vector> pz;    // W * presyn, before any post-activation map
  Activation act = Activation::Linear;
  PredictionMode mode = PredictionMode::PreActivation;
  LossKind loss = LossKind::MSE;
  // Output layer lives in probability space (softmax/sigmoid applied) rather
  // than logit space. Used by the clamped training paths.
  bool sigma_out = false;
  Vector ff_logits;  // feedforward output before any output map

  std::size_t depth() const { return hhat.size() - 1; }
  Vector e(std::size_t n) const { return hhat[n] - p[n]; }
};

// Vector multiplied by W_n, built from hhat[n].
inline Vector state_presyn(const NetworkParams& params, const LayerState& s, std::size_t n) {
  if (s.mode == PredictionMode::PostActivation) return params.bias ? augment(s.hhat[n]) : s.hhat[n];
  return presyn(params, s.act, n, s.hhat[n]);
}

// Recomputes p[n] (n >= 1) from hhat[n-1].
inline void predict(const NetworkParams& params, LayerState& s, std::size_t n) {
  const std::size_t N = s.depth();
  s.pz[n] = matvec(params.layers[n - 1], state_presyn(params, s, n - 1));
  if (n == N) {
    s.p[n] = s.sigma_out ? output_map(s.loss, s.pz[n]) : s.pz[n];
  } else {
    s.p[n] = s.mode == PredictionMode::PostActivation ? activation_apply(s.act, s.pz[n]) : s.pz[n];
  }
}

inline void refresh_predictions(const NetworkParams& params, LayerState& s) {
  for (std::size_t n = 1; n <= s.depth(); ++n) predict(params, s, n);
}

// Feedforward initialization: hhat = p = h.
inline LayerState init_state(const NetworkParams& params, Activation act, PredictionMode mode, LossKind loss,
                             bool sigma_out, const Vector& x) {
  if (x.size() != params.in_dim()) throw LinalgError("init_state: input dimension mismatch");
  const std::size_t N = params.depth();
  LayerState s;
  s.act = act;
  s.mode = mode;
  s.loss = loss;
  s.sigma_out = sigma_out;
  s.hhat.assign(N + 1, Vector());
  s.p.assign(N + 1, Vector());
  s.pz.assign(N + 1, Vector());
  s.hhat[0] = x;
  s.p[0] = x;
  s.pz[0] = x;
  for (std::size_t n = 1; n <= N; ++n) {
    predict(params, s, n);
    s.hhat[n] = s.p[n];
  }
  s.h = s.hhat;
  s.ff_logits = s.pz[N];
  return s;
}

// J^T e where J = d p[n+1] / d hhat[n]. A softmax/sigmoid on a
// probability-space output is folded into the error, so its Jacobian is
// not applied.
inline Vector backprop_error(const NetworkParams& params, const LayerState& s, std::size_t n,
                             const Vector& e_next) {
  const std::size_t N = s.depth();
  const auto w = params.weights(n);
  if (s.mode == PredictionMode::PostActivation) {
    if (n + 1 == N) return w.transpose() * e_next;
    return w.transpose() * activation_deriv(s.act, s.pz[n + 1]).cwiseProduct(e_next);
  }
  Vector g = w.transpose() * e_next;
  if (n == 0) return g;
  return activation_deriv(s.act, s.hhat[n]).cwiseProduct(g);
}

// Loss seen by the relaxation. A probability-space output uses squared error
// against y; otherwise the configured loss on logits.
inline double output_loss(const LayerState& s, const Vector& y) {
  const Vector& out = s.hhat[s.depth()];
  if (s.sigma_out) return 0.5 * (y - out).squaredNorm();
  return loss_value(s.loss, out, y);
}

inline Vector output_loss_grad(const LayerState& s, const Vector& y) {
  const Vector& out = s.hhat[s.depth()];
  if (s.sigma_out) return out - y;
  return loss_grad(s.loss, out, y);
}

// F = L(y, hhat_N) + sum_n gamma_n/2 |e_n|^2 + sum_{n<N} gamma_decay_n/2 |hhat_n|^2
// Predictions are recomputed from hhat, so this is a pure function of hhat.
inline double free_energy(const LayerState& state, const NetworkParams& params, const GammaConfig& gam,
                          const Vector& y) {
  LayerState s = state;
  refresh_predictions(params, s);
  const std::size_t N = s.depth();
  double f = output_loss(s, y);
  for (std::size_t n = 1; n <= N; ++n) f += 0.5 * gam.g(n) * s.e(n).squaredNorm();
  for (std::size_t n = 1; n < N; ++n) f += 0.5 * gam.decay(n) * s.hhat[n].squaredNorm();
  return f;
}

inline Vector d_free_energy_output(const LayerState& s, const GammaConfig& gam, const Vector& y) {
  const std::size_t N = s.depth();
  return output_loss_grad(s, y) + gam.g(N) * s.e(N);
}

inline void check_hidden_index(const LayerState& s, std::size_t n) {
  if (n < 1 || n >= s.depth()) {
    throw std::out_of_range("hidden layer index " + std::to_string(n) + " outside 1.." +
                            std::to_string(s.depth() - 1));
  }
}

inline Vector d_free_energy_hidden(const LayerState& s, const NetworkParams& params, std::size_t n,
                                   const GammaConfig& gam) {
  check_hidden_index(s, n);
  const Vector down = backprop_error(params, s, n, s.e(n + 1));
  if (gam.scheme == GammaScheme::BotTop) return -gam.gamma_bot * down + gam.gamma_top * s.e(n);
  Vector g = -gam.g(n + 1) * down + gam.g(n) * s.e(n);
  const double d = gam.decay(n);
  if (d != 0.0) {
    if (s.mode == PredictionMode::PreActivation) {
      g += d * activation_deriv(s.act, s.hhat[n]).cwiseProduct(s.hhat[n]);
    } else {
      g += d * s.hhat[n];
    }
  }
  return g;
}

// Soft clamp: the minimizer over hhat_N of |y - hhat_N|^2/2 + |hhat_N - p_N|^2/(2 k alpha).
inline Vector soft_clamp_output(const Vector& p_n, const Vector& y, double prev_norm_sq, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("soft_clamp_output: alpha must be >= 0");
  const double ka = prev_norm_sq * alpha;
  if (std::isinf(ka)) return y;
  return (ka * y + p_n) / (1.0 + ka);
}

// ---- proximal loss -------------------------------------------------------

// Normalized learning rate of W_n: 1 / |presyn_n|^2.
inline double norm_rate(const NetworkParams& params, const LayerState& s, std::size_t n, double eps = 0.0) {
  const double d = state_presyn(params, s, n).squaredNorm() + eps;
  if (!(d > 0.0)) throw std::domain_error("normalized rate: zero pre-synaptic vector");
  return 1.0 / d;
}

inline void require_pre(const LayerState& s, const char* what) {
  if (s.mode != PredictionMode::PreActivation) {
    throw std::invalid_argument(std::string(what) + ": requires PreActivation predictions");
  }
}

// Parameters reached by one NLMS step per layer towards the targets in s.
inline NetworkParams nlms_solution(const NetworkParams& params_b, const LayerState& s, double eps = 0.0) {
  NetworkParams out = params_b;
  for (std::size_t n = 0; n < params_b.depth(); ++n) {
    const Vector a = state_presyn(params_b, s, n);
    out.layers[n] += (s.e(n + 1) / (a.squaredNorm() + eps)) * a.transpose();
  }
  return out;
}

// L(hhat_N, y) + 1/(2 alpha) sum_n |dW_n|^2 with dW_n the NLMS step.
// Pure function of hhat (predictions are recomputed).
inline double prox_loss(const NetworkParams& params_b, const LayerState& state, double alpha, const Vector& y,
                        double eps = 0.0) {
  if (alpha == 0.0) throw std::invalid_argument("prox_loss: alpha must be nonzero");
  require_pre(state, "prox_loss");
  LayerState s = state;
  refresh_predictions(params_b, s);
  double reg = 0.0;
  for (std::size_t n = 0; n < params_b.depth(); ++n) {
    const Vector a = state_presyn(params_b, s, n);
    const double d = a.squaredNorm() + eps;
    // |e a^T / d|_F^2 = |e|^2 |a|^2 / d^2
    reg += s.e(n + 1).squaredNorm() * a.squaredNorm() / (d * d);
  }
  return output_loss(s, y) + reg / (2.0 * alpha);
}

inline Vector d_prox_output(const NetworkParams& params, const LayerState& s, double alpha, const Vector& y) {
  if (alpha == 0.0) throw std::invalid_argument("d_prox_output: alpha must be nonzero");
  require_pre(s, "d_prox_output");
  const std::size_t N = s.depth();
  return output_loss_grad(s, y) + (norm_rate(params, s, N - 1) / alpha) * s.e(N);
}

// Full chain rule, including the dependence of alpha_n on hhat_n:
//   (1/alpha) [ alpha_{n-1} e_n - alpha_n J^T e_{n+1} - alpha_n^2 |e_{n+1}|^2 f'(hhat_n) f(hhat_n) ]
inline Vector d_prox_hidden(const LayerState& s, const NetworkParams& params, std::size_t n, double alpha) {
  if (alpha == 0.0) throw std::invalid_argument("d_prox_hidden: alpha must be nonzero");
  require_pre(s, "d_prox_hidden");
  check_hidden_index(s, n);
  const double a_prev = norm_rate(params, s, n - 1);
  const double a_n = norm_rate(params, s, n);
  const Vector e_next = s.e(n + 1);
  const Vector fp = activation_deriv(s.act, s.hhat[n]);
  const Vector fv = activation_apply(s.act, s.hhat[n]);
  Vector g = a_prev * s.e(n) - a_n * backprop_error(params, s, n, e_next) -
             a_n * a_n * e_next.squaredNorm() * fp.cwiseProduct(fv);
  return g / alpha;
}

// Gamma values under which dF/dhhat equals dProx/dhhat (factor 1):
//   gamma_n = alpha_{n-1}/alpha for n = 1..N,
//   gamma_decay_n = -alpha_n^2 |e_{n+1}|^2 / alpha.
// The decay coefficient is negative; it is a matching coefficient, not a
// practical regularizer. Exact for Linear and ReLU where f'(h) h = f'(h) f(h).
inline GammaConfig gamma_limits(const NetworkParams& params, const LayerState& s, double alpha) {
  require_pre(s, "gamma_limits");
  const std::size_t N = s.depth();
  GammaConfig g;
  g.scheme = GammaScheme::Explicit;
  g.gamma.assign(N + 1, 0.0);
  g.gamma_decay.assign(N, 0.0);
  std::vector<double> rate(N);
  for (std::size_t n = 0; n < N; ++n) rate[n] = norm_rate(params, s, n);
  for (std::size_t n = 1; n <= N; ++n) g.gamma[n] = rate[n - 1] / alpha;
  for (std::size_t n = 1; n < N; ++n) g.gamma_decay[n] = -rate[n] * rate[n] * s.e(n + 1).squaredNorm() / alpha;
  return g;
}

// Older closed form for the hidden proximal gradient. It mishandles the
// derivative through alpha_n and weights e_n by alpha_n^2/(alpha alpha_{n-1})
// instead of alpha_{n-1}/alpha. Kept only so tests can show where it departs
// from finite differences.
inline Vector d_prox_hidden_uncorrected(const LayerState& s, const NetworkParams& params, std::size_t n,
                                        double alpha) {
  require_pre(s, "d_prox_hidden_uncorrected");
  check_hidden_index(s, n);
  const double a_prev = norm_rate(params, s, n - 1);
  const double a_n = norm_rate(params, s, n);
  const Vector e_next = s.e(n + 1);
  const Vector fp = activation_deriv(s.act, s.hhat[n]);
  Vector inner = -(1.0 / a_n) * backprop_error(params, s, n, e_next) + (1.0 / a_prev) * s.e(n) +
                 e_next.squaredNorm() * (1.0 - 2.0 / std::pow(a_n, 6)) * fp.cwiseProduct(s.hhat[n]);
  return (a_n * a_n / alpha) * inner;
}

// Gamma values paired with the uncorrected gradient above.
inline GammaConfig gamma_limits_uncorrected(const NetworkParams& params, const LayerState& s, double alpha) {
  require_pre(s, "gamma_limits_uncorrected");
  const std::size_t N = s.depth();
  GammaConfig g;
  g.gamma.assign(N + 1, 0.0);
  g.gamma_decay.assign(N, 0.0);
  for (std::size_t n = 1; n < N; ++n) g.gamma[n] = 1.0 / norm_rate(params, s, n - 1);
  g.gamma[N] = norm_rate(params, s, N - 1) / alpha;
  for (std::size_t n = 1; n < N; ++n) {
    const double a_n = norm_rate(params, s, n);
    g.gamma_decay[n] = s.e(n + 1).squaredNorm() * (1.0 - 2.0 / std::pow(a_n, 6));
  }
  return g;
}

// ---- inference phase -----------------------------------------------------

inline double clamp_norm_sq(const NetworkParams& params, const LayerState& s) {
  return state_presyn(params, s, s.depth() - 1).squaredNorm();
}

inline void apply_clamp(const NetworkParams& params, LayerState& s, const GammaConfig& gam, const Vector& y) {
  const std::size_t N = s.depth();
  if (gam.clamp == ClampMode::Full) {
    s.hhat[N] = y;
  } else if (gam.clamp == ClampMode::Soft) {
    s.hhat[N] = soft_clamp_output(s.p[N], y, clamp_norm_sq(params, s), gam.clamp_alpha);
  }
}

inline Vector hidden_step_grad(const LayerState& s, const NetworkParams& params, std::size_t n,
                               const GammaConfig& gam) {
  if (gam.scheme == GammaScheme::ProxLimits) return d_prox_hidden(s, params, n, gam.prox_alpha);
  return d_free_energy_hidden(s, params, n, gam);
}

using SweepHook = std::function<void(int sweep, const LayerState&)>;

// Relaxes hhat for gam.steps sweeps. Each sweep updates layers 1..N-1 in
// ascending order (plus the output when unclamped), refreshing the
// prediction of the layer above right after each update. A soft clamp is
// re-applied at the end of every sweep.
inline LayerState run_inference(const NetworkParams& params, Activation act, const GammaConfig& gam, LossKind loss,
                                const Vector& x, const Vector& y, PredictionMode mode,
                                const SweepHook& hook = nullptr) {
  const bool sigma_out = gam.clamp != ClampMode::None && loss != LossKind::MSE;
  LayerState s = init_state(params, act, mode, loss, sigma_out, x);
  const std::size_t N = s.depth();
  if (y.size() != s.hhat[N].size()) throw LinalgError("run_inference: target dimension mismatch");
  apply_clamp(params, s, gam, y);
  if (hook) hook(0, s);
  for (int it = 0; it < gam.steps; ++it) {
    for (std::size_t n = 1; n < N; ++n) {
      s.hhat[n] -= gam.beta * hidden_step_grad(s, params, n, gam);
      predict(params, s, n + 1);
    }
    if (gam.clamp == ClampMode::None) {
      if (gam.scheme == GammaScheme::ProxLimits) {
        s.hhat[N] -= gam.beta * d_prox_output(params, s, gam.prox_alpha, y);
      } else {
        s.hhat[N] -= gam.beta * d_free_energy_output(s, gam, y);
      }
    } else {
      apply_clamp(params, s, gam, y);
    }
    if (hook) hook(it + 1, s);
  }
  return s;
}

}  // namespace ilprox
