// Synthetic verification suites shared by `ilx verify` and the acceptance
// runner. Each check returns a pass flag plus a one-line detail string.
#pragma once

#include "ilprox/analysis.hpp"
#include "ilprox/closed_form.hpp"
#include "ilprox/datasets.hpp"
#include "ilprox/energy.hpp"
#include "ilprox/learners.hpp"

#include <Eigen/QR>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <sstream>
#include <string>
#include <vector>

namespace ilprox {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
  // the literal statement cannot hold; reported but not counted as a failure
  bool unattainable = false;
};

namespace vdetail {

inline Vector gauss(Eigen::Index n, Rng& rng, double scale = 1.0) {
  boost::random::normal_distribution<double> d(0.0, scale);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = d(rng);
  return v;
}

inline Matrix gauss_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  boost::random::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

inline int uniform_int(Rng& rng, int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform(Rng& rng, double lo, double hi) {
  return boost::random::uniform_real_distribution<double>(lo, hi)(rng);
}

inline NetworkParams gauss_net(const std::vector<int>& dims, Rng& rng, bool bias, double scale = 0.5) {
  NetworkParams p;
  p.bias = bias;
  for (std::size_t n = 0; n + 1 < dims.size(); ++n)
    p.layers.push_back(gauss_mat(dims[n + 1], dims[n] + (bias ? 1 : 0), rng, scale));
  return p;
}

inline std::vector<int> random_dims(Rng& rng, int layers, int lo, int hi) {
  std::vector<int> d;
  for (int i = 0; i <= layers; ++i) d.push_back(uniform_int(rng, lo, hi));
  return d;
}

// FF state with every non-input activity perturbed.
inline LayerState perturbed_state(const NetworkParams& p, Activation act, Rng& rng) {
  LayerState s = init_state(p, act, PredictionMode::PreActivation, LossKind::MSE, false, gauss(p.in_dim(), rng));
  for (std::size_t n = 1; n <= s.depth(); ++n) s.hhat[n] += gauss(s.hhat[n].size(), rng, 0.5);
  refresh_predictions(p, s);
  return s;
}

template <class F>
std::function<double(const Vector&)> along(const LayerState& s, std::size_t n, F f) {
  return [s, n, f](const Vector& v) {
    LayerState t = s;
    t.hhat[n] = v;
    return f(t);
  };
}

inline std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

}  // namespace vdetail

// dF/dhhat and dProx/dhhat against central differences on random linear
// 3-layer nets (widths 1..6).
inline Check check_gradients(int nets = 20, double tol = 1e-5) {
  using namespace vdetail;
  double worst_f = 0.0, worst_p = 0.0;
  for (int seed = 0; seed < nets; ++seed) {
    Rng rng(9100 + seed);
    const NetworkParams p = gauss_net(random_dims(rng, 3, 1, 6), rng, true);
    const LayerState s = perturbed_state(p, Activation::Linear, rng);
    const Vector y = gauss(p.out_dim(), rng);
    GammaConfig g;
    g.scheme = GammaScheme::Explicit;
    g.gamma = {0.0, uniform(rng, 0.1, 2), uniform(rng, 0.1, 2), uniform(rng, 0.1, 2)};
    g.gamma_decay = {0.0, uniform(rng, 0, 1), uniform(rng, 0, 1)};
    const double alpha = uniform(rng, 0.2, 5);
    for (std::size_t n = 1; n <= 3; ++n) {
      const Vector fd_f = finite_diff(along(s, n, [&](const LayerState& t) { return free_energy(t, p, g, y); }), s.hhat[n]);
      const Vector an_f = n == 3 ? d_free_energy_output(s, g, y) : d_free_energy_hidden(s, p, n, g);
      worst_f = std::max(worst_f, rel_err(an_f, fd_f));
      const Vector fd_p = finite_diff(along(s, n, [&](const LayerState& t) { return prox_loss(p, t, alpha, y); }), s.hhat[n]);
      const Vector an_p = n == 3 ? d_prox_output(p, s, alpha, y) : d_prox_hidden(s, p, n, alpha);
      worst_p = std::max(worst_p, rel_err(an_p, fd_p));
    }
  }
  Check c{"gradient oracle", worst_f < tol && worst_p < tol, ""};
  c.detail = std::to_string(nets) + " nets, max rel err dF " + sci(worst_f) + ", dProx " + sci(worst_p) + " (tol " +
             sci(tol) + ")";
  return c;
}

// Literal statement: with the published gamma limits, dF_hidden scaled by
// alpha_n^2/alpha equals dProx_hidden. Compared against the finite-difference
// verified dProx this cannot hold, so the check is reported as unattainable.
inline Check check_theorem42_literal(int nets = 20, double tol = 1e-6) {
  using namespace vdetail;
  double worst_hidden = 0.0, worst_out = 0.0;
  for (int seed = 0; seed < nets; ++seed) {
    Rng rng(9200 + seed);
    const NetworkParams p = gauss_net(random_dims(rng, 3, 1, 6), rng, true);
    const LayerState s = perturbed_state(p, Activation::Linear, rng);
    const Vector y = gauss(p.out_dim(), rng);
    const double alpha = uniform(rng, 0.2, 5);
    const GammaConfig g = gamma_limits_uncorrected(p, s, alpha);
    for (std::size_t n = 1; n < 3; ++n) {
      const double a_n = norm_rate(p, s, n);
      const Vector lhs = (a_n * a_n / alpha) * d_free_energy_hidden(s, p, n, g);
      worst_hidden = std::max(worst_hidden, rel_err(lhs, d_prox_hidden(s, p, n, alpha)));
    }
    worst_out = std::max(worst_out, rel_err(d_free_energy_output(s, g, y), d_prox_output(p, s, alpha, y)));
  }
  Check c{"gamma-limit equivalence (published alpha_n^2/alpha scaling)", worst_hidden < tol && worst_out < tol, ""};
  c.unattainable = true;
  c.detail = "max rel err hidden " + sci(worst_hidden) + ", output " + sci(worst_out) +
             "; no per-layer gamma reproduces the full dProx chain rule under that scaling";
  return c;
}

// Corrected limits: gamma_n = alpha_{n-1}/alpha, gamma_decay_n =
// -alpha_n^2 |e_{n+1}|^2 / alpha give dF = dProx exactly (Linear and ReLU).
inline Check check_theorem42_corrected(int nets = 20, double tol = 1e-6) {
  using namespace vdetail;
  double worst = 0.0;
  for (auto act : {Activation::Linear, Activation::ReLU}) {
    for (int seed = 0; seed < nets; ++seed) {
      Rng rng(9300 + seed);
      const NetworkParams p = gauss_net(random_dims(rng, 3, 1, 6), rng, true);
      const LayerState s = perturbed_state(p, act, rng);
      const Vector y = gauss(p.out_dim(), rng);
      const double alpha = uniform(rng, 0.1, 10);
      const GammaConfig g = gamma_limits(p, s, alpha);
      for (std::size_t n = 1; n < 3; ++n)
        worst = std::max(worst, rel_err(d_free_energy_hidden(s, p, n, g), d_prox_hidden(s, p, n, alpha)));
      worst = std::max(worst, rel_err(d_free_energy_output(s, g, y), d_prox_output(p, s, alpha, y)));
    }
  }
  Check c{"gamma-limit equivalence (corrected limits, factor 1)", worst < tol, ""};
  c.detail = "linear+relu, " + std::to_string(2 * nets) + " nets, max rel err " + sci(worst) + " (tol " + sci(tol) + ")";
  return c;
}

inline Check check_nlms(int trials = 100) {
  using namespace vdetail;
  double worst_oracle = 0.0, worst_interp = 0.0;
  for (int seed = 0; seed < trials; ++seed) {
    Rng rng(9400 + seed);
    const int r = uniform_int(rng, 1, 8), k = uniform_int(rng, 1, 8);
    const Matrix w = gauss_mat(r, k, rng);
    const Vector a = gauss(k, rng), target = gauss(r, rng);
    const Vector e = target - w * a;
    const Matrix w2 = nlms_update(w, e, a, 0.0);
    Matrix col(k, 1);
    col.col(0) = a;
    worst_oracle = std::max(worst_oracle, (w2 - (w + e * pinv(col).row(0))).cwiseAbs().maxCoeff());
    worst_interp = std::max(worst_interp, (w2 * a - target).cwiseAbs().maxCoeff());
  }
  Check c{"NLMS minimum-norm oracle", worst_oracle < 1e-10 && worst_interp < 1e-9, ""};
  c.detail = std::to_string(trials) + " trials, |W' - pinv oracle| " + sci(worst_oracle) + " (tol 1e-10), |W'a - target| " +
             sci(worst_interp) + " (tol 1e-9)";
  return c;
}

// After IL-prox inference (2000 sweeps, beta 1e-3) and one NLMS step at
// mini-batch 1, a forward pass reproduces every target activity.
inline Check check_targets_become_ff(int nets = 10, int sweeps = 2000, double beta = 1e-3) {
  using namespace vdetail;
  double worst = 0.0;
  for (auto act : {Activation::Linear, Activation::ReLU, Activation::Tanh}) {
    for (int seed = 0; seed < nets; ++seed) {
      Rng rng(9500 + seed);
      NetworkParams p = gauss_net({6, 7, 5, 3}, rng, true);
      const Vector x = gauss(6, rng), y = gauss(3, rng);
      TrainConfig cfg = default_train_config(AlgorithmKind::IlProx, 1.0);
      cfg.act = act;
      cfg.loss = LossKind::MSE;
      cfg.epsilon = 0.0;
      cfg.gammas.steps = sweeps;
      cfg.gammas.beta = beta;
      const SampleUpdate u = sample_update(AlgorithmKind::IlProx, p, cfg, x, y);
      train_step(AlgorithmKind::IlProx, p, nullptr, cfg, x, y);
      const auto h = feedforward(p, act, x);
      for (std::size_t n = 1; n <= p.depth(); ++n) worst = std::max(worst, (h[n] - u.hhat[n]).cwiseAbs().maxCoeff());
    }
  }
  Check c{"targets become FF activities", worst < 1e-6, ""};
  c.detail = std::to_string(3 * nets) + " nets, " + std::to_string(sweeps) + " sweeps, max |h' - hhat| " + sci(worst) +
             " (tol 1e-6)";
  return c;
}

inline Check check_closed_form(int nets = 10) {
  using namespace vdetail;
  double worst_iter = 0.0, worst_limit = 0.0;
  for (int seed = 0; seed < nets; ++seed) {
    Rng rng(9600 + seed);
    const NetworkParams p = gauss_net({3, 4, 2}, rng, false);
    const Vector x = gauss(3, rng), y = gauss(2, rng);
    GammaConfig g;
    g.scheme = GammaScheme::Explicit;
    g.gamma = {0.0, uniform(rng, 0.2, 2), uniform(rng, 0.2, 2)};
    g.clamp = ClampMode::Full;
    g.beta = 0.05;
    g.steps = 20000;
    const LayerState s = run_inference(p, Activation::Linear, g, LossKind::MSE, x, y, PredictionMode::PreActivation);
    const Vector closed = il_closed_form_target(p.layers[1], y, p.layers[0] * x, g.gamma[1] / g.gamma[2]);
    worst_iter = std::max(worst_iter, (closed - s.hhat[1]).cwiseAbs().maxCoeff());
  }
  for (int seed = 0; seed < 2 * nets; ++seed) {
    Rng rng(9650 + seed);
    const Matrix w = gauss_mat(5, 3, rng);
    const Vector h = gauss(3, rng), dh = gauss(5, rng);
    const Vector closed = il_closed_form_target(w, w * h + dh, h, 1e-12);
    worst_limit = std::max(worst_limit, (closed - (h + pinv(w) * dh)).cwiseAbs().maxCoeff());
  }
  Check c{"closed-form target fidelity", worst_iter < 1e-6 && worst_limit < 1e-8, ""};
  c.detail = "vs converged inference " + sci(worst_iter) + " (tol 1e-6), lambda->0 vs IL-GN target " +
             sci(worst_limit) + " (tol 1e-8)";
  return c;
}

// IL-GN identities. The interpolation identities hold from the second hidden
// layer on (the first sees the fixed input) and need W_{n-1} of full row
// rank, so widths are non-increasing.
inline Check check_gn_lemmas(int nets = 100) {
  using namespace vdetail;
  double worst_p = 0.0, worst_e = 0.0, worst_global = 0.0;
  for (double gamma : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
    for (int seed = 0; seed < nets; ++seed) {
      Rng rng(9700 + seed);
      std::vector<int> dims{uniform_int(rng, 2, 8)};
      for (int i = 0; i < 4; ++i) dims.push_back(uniform_int(rng, 1, dims.back()));
      const NetworkParams p = gauss_net(dims, rng, false);
      const auto h = feedforward(p, Activation::Linear, gauss(p.in_dim(), rng));
      const auto t = il_gn_targets(p, h, gauss(p.out_dim(), rng), gamma);
      const auto e = il_gn_errors(p, t);
      for (std::size_t n = 2; n <= p.depth(); ++n) {
        const double scale = std::max(1.0, t[n].cwiseAbs().maxCoeff());
        const Vector pn = p.layers[n - 1] * t[n - 1];
        worst_p = std::max(worst_p, (pn - ((1 - gamma) * h[n] + gamma * t[n])).cwiseAbs().maxCoeff() / scale);
        worst_e = std::max(worst_e, (e[n] - (1 - gamma) * (t[n] - h[n])).cwiseAbs().maxCoeff() / scale);
      }
    }
  }
  for (double gamma : {0.2, 0.6, 0.9}) {
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng(9800 + seed);
      const int d = uniform_int(rng, 2, 6);
      NetworkParams p;
      p.bias = false;
      for (int n = 0; n < 4; ++n) {
        Eigen::HouseholderQR<Matrix> qr(gauss_mat(d, d, rng));
        p.layers.push_back(qr.householderQ() * Matrix::Identity(d, d));
      }
      const std::size_t N = p.depth();
      const auto h = feedforward(p, Activation::Linear, gauss(d, rng));
      const Vector g = gauss(d, rng);
      const auto e = il_gn_errors(p, il_gn_targets(p, h, g, gamma));
      for (std::size_t n = 2; n <= N; ++n) {
        Matrix chain = Matrix::Identity(d, d);
        for (std::size_t k = n; k < N; ++k) chain = p.layers[k] * chain;
        const Vector expect = std::pow(gamma, static_cast<double>(N - n)) * (1 - gamma) * (pinv(chain) * (-g));
        worst_global = std::max(worst_global, (e[n] - expect).cwiseAbs().maxCoeff());
      }
    }
  }
  Check c{"IL-GN identities", worst_p < 1e-10 && worst_e < 1e-10 && worst_global < 1e-9, ""};
  c.detail = std::to_string(nets) + " nets x 10 gammas, p_n identity " + sci(worst_p) + ", e_n identity " +
             sci(worst_e) + " (tol 1e-10), orthogonal global error " + sci(worst_global) + " (tol 1e-9)";
  return c;
}

inline const std::vector<int>& toy_dims() {
  static const std::vector<int> d{10, 5, 5, 5, 5};
  return d;
}

inline Check check_descent(int seeds = 50) {
  const Dataset data = teacher_student_dataset(7, static_cast<std::size_t>(seeds), toy_dims());
  int qualifying = 0, il_good = 0, bp_ascent = 0, il_skipped = 0;
  double worst_dev = 0.0, bp_worst = 1.0, bp_alpha = 0.0;
  for (double alpha : {0.001, 0.01, 0.1, 1.0, 5.0}) {
    for (int seed = 0; seed < seeds; ++seed) {
      Rng rng(100 + seed);
      const NetworkParams p = init_params(toy_dims(), rng, false);
      const Vector& x = data.inputs[seed];
      const Vector& y = data.targets[seed];
      const DescentReport il = verify_descent(p, x, y, GnRule::IlGn, alpha);
      if (il.skipped) ++il_skipped;
      if (!il.skipped && il.assumptions_hold()) {
        ++qualifying;
        const double dev = std::abs(il.cosine - 1.0);
        worst_dev = std::max(worst_dev, dev);
        if (il.cosine > 0.0 && dev < 1e-6) ++il_good;
      }
      const DescentReport bp = verify_descent(p, x, y, GnRule::BpGn, alpha);
      if (!bp.skipped) {
        if (bp.cosine <= 0.0) ++bp_ascent;
        if (bp.cosine < bp_worst) {
          bp_worst = bp.cosine;
          bp_alpha = alpha;
        }
      }
    }
  }
  Check c{"GN descent direction", qualifying > 0 && il_good == qualifying && bp_ascent >= 1, ""};
  c.detail = "IL-GN " + std::to_string(il_good) + "/" + std::to_string(qualifying) +
             " qualifying cases with cosine = 1 +- 1e-6 (max dev " + vdetail::sci(worst_dev) + ", skipped " +
             std::to_string(il_skipped) + "); BP-GN cosine <= 0 in " + std::to_string(bp_ascent) +
             " cases (min " + vdetail::sci(bp_worst) + " at alpha " + vdetail::sci(bp_alpha) + ")";
  return c;
}

inline Check check_prox_descent(int seeds = 20) {
  using namespace vdetail;
  double worst = -INFINITY;
  for (double alpha : {0.1, 1.0, 10.0, 100.0}) {
    for (int seed = 0; seed < seeds; ++seed) {
      Rng rng(9900 + seed);
      NetworkParams p = gauss_net({4, 5, 4, 3}, rng, true);
      const Vector x = gauss(4, rng), y = gauss(3, rng);
      TrainConfig cfg = default_train_config(AlgorithmKind::IlProx, alpha);
      cfg.act = Activation::Linear;
      cfg.loss = LossKind::MSE;
      cfg.epsilon = 0.0;
      cfg.gammas.scheme = GammaScheme::ProxLimits;
      cfg.gammas.beta = 0.01 * std::min(1.0, alpha);
      cfg.gammas.steps = 2000;
      const NetworkParams before = p;
      const double l0 = loss_value(LossKind::MSE, feedforward(p, Activation::Linear, x).back(), y);
      train_step(AlgorithmKind::IlProx, p, nullptr, cfg, x, y);
      double dist = 0.0;
      for (std::size_t n = 0; n < p.depth(); ++n) dist += (p.layers[n] - before.layers[n]).squaredNorm();
      const double l1 = loss_value(LossKind::MSE, feedforward(p, Activation::Linear, x).back(), y);
      worst = std::max(worst, l1 + dist / (2 * alpha) - l0);
    }
  }
  Check c{"proximal descent", worst <= 1e-8, ""};
  c.detail = "4 alphas x " + std::to_string(seeds) + " seeds, max [L' + |dtheta|^2/2a - L] = " + sci(worst) +
             " (tol 1e-8)";
  return c;
}

// Per-seed compatibility averaged over a short training run, IL-SGD vs
// BP-SGD on linear toy nets, Welch t over seeds.
inline Check check_compatibility(int seeds = 50, std::size_t iters = 200) {
  const Dataset data = teacher_student_dataset(11, iters, toy_dims());
  std::ostringstream detail;
  bool ok = true;
  for (double lr : {0.001, 0.005, 0.01}) {
    std::vector<double> il, bp;
    for (int seed = 0; seed < seeds; ++seed) {
      Rng rng(300 + seed);
      const NetworkParams p = init_params(toy_dims(), rng);
      for (auto a : {AlgorithmKind::IlSgd, AlgorithmKind::BpSgd}) {
        (a == AlgorithmKind::IlSgd ? il : bp)
            .push_back(mean_compatibility(p, a, toy_config(a, lr), data.inputs, data.targets, iters));
      }
    }
    const double t = welch_t(il, bp);
    const bool pass = mean_std(il).first > mean_std(bp).first && t > 2.0;
    ok = ok && pass;
    detail.precision(4);
    detail << "lr " << lr << ": IL " << mean_std(il).first << " BP " << mean_std(bp).first << " t " << t << "; ";
  }
  return Check{"compatibility IL > BP", ok, detail.str()};
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> n{"gradients", "nlms", "theorem42", "descent", "compat", "closedform", "all"};
  return n;
}

// Returns the checks of one named suite; throws on an unknown name.
inline std::vector<Check> verify_suite(const std::string& which) {
  std::vector<Check> out;
  const bool all = which == "all";
  bool known = all;
  auto want = [&](const char* s) {
    if (which == s) known = true;
    return all || which == s;
  };
  if (want("gradients")) out.push_back(check_gradients());
  if (want("theorem42")) {
    out.push_back(check_theorem42_literal());
    out.push_back(check_theorem42_corrected());
  }
  if (want("nlms")) {
    out.push_back(check_nlms());
    out.push_back(check_targets_become_ff());
  }
  if (want("closedform")) {
    out.push_back(check_closed_form());
    out.push_back(check_gn_lemmas());
  }
  if (want("descent")) {
    out.push_back(check_descent());
    out.push_back(check_prox_descent());
  }
  if (want("compat")) out.push_back(check_compatibility());
  if (!known) throw std::invalid_argument("unknown verify suite '" + which + "'");
  return out;
}

}  // namespace ilprox
