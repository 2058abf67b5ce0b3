// Closed-form targets for bias-free linear networks: the ridge-form IL
// target, IL-GN and BP-GN target propagation, and the matching LMS steps.
#pragma once

#include "ilprox/linalg.hpp"
#include "ilprox/nn.hpp"

#include <vector>

namespace ilprox {

enum class GnRule { IlGn, BpGn };

inline void require_bias_free(const NetworkParams& p, const char* what) {
  if (p.bias) throw std::invalid_argument(std::string(what) + ": expects a bias-free linear network");
}

// argmin_u |hhat_next - W u|^2 + lambda |u - p_n|^2
//   = (W^T W + lambda I)^{-1} (W^T hhat_next + lambda p_n)
// solved as a stacked least-squares problem [W; sqrt(lambda) I] u = [hhat_next; sqrt(lambda) p_n].
inline Vector il_closed_form_target(const Matrix& w, const Vector& hhat_next, const Vector& p_n, double lambda) {
  if (lambda < 0.0) throw LinalgError("il_closed_form_target: lambda must be >= 0");
  if (p_n.size() != w.cols()) throw LinalgError("il_closed_form_target: p_n dimension mismatch");
  if (hhat_next.size() != w.rows()) throw LinalgError("il_closed_form_target: target dimension mismatch");
  const double r = std::sqrt(lambda);
  Matrix a(w.rows() + w.cols(), w.cols());
  a << w, r * Matrix::Identity(w.cols(), w.cols());
  Vector b(w.rows() + w.cols());
  b << hhat_next, r * p_n;
  return ridge_solve(a, 0.0, b);
}

// IL-GN: hhat_N = h_N + dh_N with dh_N = -dL/dh_N, then dh_n = gamma W_n^+ dh_{n+1}.
// Returns hhat_0..hhat_N (hhat_0 = x).
inline std::vector<Vector> il_gn_targets(const NetworkParams& params, const std::vector<Vector>& h,
                                         const Vector& loss_grad_out, double gamma) {
  require_bias_free(params, "il_gn_targets");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("il_gn_targets: gamma must lie in (0, 1]");
  const std::size_t N = params.depth();
  std::vector<Vector> hhat = h;
  Vector dh = -loss_grad_out;
  hhat[N] = h[N] + dh;
  for (std::size_t n = N - 1; n >= 1; --n) {
    dh = gamma * (pinv(params.layers[n]) * dh);
    hhat[n] = h[n] + dh;
  }
  return hhat;
}

// e_n = hhat_n - W_{n-1} hhat_{n-1}, n = 1..N (entry 0 is empty).
inline std::vector<Vector> il_gn_errors(const NetworkParams& params, const std::vector<Vector>& hhat) {
  require_bias_free(params, "il_gn_errors");
  std::vector<Vector> e(hhat.size());
  for (std::size_t n = 1; n < hhat.size(); ++n) e[n] = hhat[n] - params.layers[n - 1] * hhat[n - 1];
  return e;
}

// BP-GN: e_N = -dL/dh_N, e_n = W_n^+ e_{n+1}, hhat_n = h_n + e_n.
inline std::vector<Vector> bp_gn_targets(const NetworkParams& params, const std::vector<Vector>& h,
                                         const Vector& loss_grad_out) {
  require_bias_free(params, "bp_gn_targets");
  const std::size_t N = params.depth();
  std::vector<Vector> hhat = h;
  Vector e = -loss_grad_out;
  hhat[N] = h[N] + e;
  for (std::size_t n = N - 1; n >= 1; --n) {
    e = pinv(params.layers[n]) * e;
    hhat[n] = h[n] + e;
  }
  return hhat;
}

// LMS step from GN targets. IL-GN: W_n += alpha (hhat_{n+1} - W_n hhat_n) hhat_n^T.
// BP-GN: W_n += alpha (hhat_{n+1} - h_{n+1}) h_n^T.
inline NetworkParams apply_gn_step(const std::vector<Vector>& hhat, const std::vector<Vector>& h,
                                   const NetworkParams& params, GnRule rule, double alpha) {
  require_bias_free(params, "apply_gn_step");
  NetworkParams out = params;
  for (std::size_t n = 0; n < params.depth(); ++n) {
    if (rule == GnRule::IlGn) {
      const Vector e = hhat[n + 1] - params.layers[n] * hhat[n];
      out.layers[n] += alpha * e * hhat[n].transpose();
    } else {
      const Vector e = hhat[n + 1] - h[n + 1];
      out.layers[n] += alpha * e * h[n].transpose();
    }
  }
  return out;
}

}  // namespace ilprox
