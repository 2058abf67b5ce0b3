// MLP substrate: activations, losses, parameters with bias columns,
// feedforward and parameter (de)serialization.
#pragma once

#include "ilprox/linalg.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace ilprox {

enum class Activation { Linear, ReLU, Tanh, Sigmoid };
enum class LossKind { MSE, SoftmaxCE, SigmoidBCE };

inline double act_scalar(Activation a, double v) {
  switch (a) {
    case Activation::Linear: return v;
    case Activation::ReLU: return v > 0.0 ? v : 0.0;
    case Activation::Tanh: return std::tanh(v);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
  }
  return v;
}

inline double act_deriv_scalar(Activation a, double v) {
  switch (a) {
    case Activation::Linear: return 1.0;
    case Activation::ReLU: return v > 0.0 ? 1.0 : 0.0;  // 0 at exactly 0
    case Activation::Tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

inline Vector activation_apply(Activation a, const Vector& v) {
  if (a == Activation::Linear) return v;
  return v.unaryExpr([a](double t) { return act_scalar(a, t); });
}

inline Vector activation_deriv(Activation a, const Vector& v) {
  if (a == Activation::Linear) return Vector::Ones(v.size());
  return v.unaryExpr([a](double t) { return act_deriv_scalar(a, t); });
}

inline Vector softmax(const Vector& z) {
  const Vector ex = (z.array() - z.maxCoeff()).exp().matrix();
  return ex / ex.sum();
}

inline Vector sigmoid(const Vector& z) {
  return activation_apply(Activation::Sigmoid, z);
}

// Output nonlinearity folded into each loss.
inline Vector output_map(LossKind k, const Vector& z) {
  switch (k) {
    case LossKind::MSE: return z;
    case LossKind::SoftmaxCE: return softmax(z);
    case LossKind::SigmoidBCE: return sigmoid(z);
  }
  return z;
}

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void check_target(LossKind k, const Vector& out, const Vector& y) {
  if (out.size() != y.size()) throw LossError("loss: output/target dimension mismatch");
  if (k == LossKind::SoftmaxCE) {
    int ones = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) == 1.0) {
        ++ones;
      } else if (y(i) != 0.0) {
        throw LossError("loss: softmax cross-entropy target must be one-hot");
      }
    }
    if (ones != 1) throw LossError("loss: softmax cross-entropy target must be one-hot");
  } else if (k == LossKind::SigmoidBCE) {
    if ((y.array() < 0.0).any() || (y.array() > 1.0).any()) {
      throw LossError("loss: BCE targets must lie in [0, 1]");
    }
  }
}

// log(1 + exp(z)) without overflow
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double loss_value(LossKind k, const Vector& out, const Vector& y) {
  check_target(k, out, y);
  switch (k) {
    case LossKind::MSE: return 0.5 * (y - out).squaredNorm();
    case LossKind::SoftmaxCE: {
      const double m = out.maxCoeff();
      const double lse = m + std::log((out.array() - m).exp().sum());
      return lse - y.dot(out);
    }
    case LossKind::SigmoidBCE: {
      // -[y log s + (1-y) log(1-s)] = softplus(z) - y z
      double s = 0.0;
      for (Eigen::Index i = 0; i < out.size(); ++i) s += softplus(out(i)) - y(i) * out(i);
      return s;
    }
  }
  return 0.0;
}

// Gradient with respect to the pre-activation output.
inline Vector loss_grad(LossKind k, const Vector& out, const Vector& y) {
  check_target(k, out, y);
  return output_map(k, out) - y;
}

struct NetworkParams {
  std::vector<Matrix> layers;
  bool bias = true;

  std::size_t depth() const { return layers.size(); }
  Eigen::Index in_dim() const { return layers.front().cols() - (bias ? 1 : 0); }
  Eigen::Index out_dim() const { return layers.back().rows(); }

  std::vector<Eigen::Index> dims() const {
    std::vector<Eigen::Index> d{in_dim()};
    for (const auto& w : layers) d.push_back(w.rows());
    return d;
  }

  // Weight block without the bias column.
  auto weights(std::size_t n) const {
    return layers[n].leftCols(layers[n].cols() - (bias ? 1 : 0));
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void validate(const NetworkParams& p) {
  if (p.layers.empty()) throw ShapeError("network needs at least one weight matrix");
  const Eigen::Index extra = p.bias ? 1 : 0;
  for (std::size_t n = 0; n < p.layers.size(); ++n) {
    const auto& w = p.layers[n];
    if (w.rows() < 1 || w.cols() < 1 + extra) {
      throw ShapeError("layer " + std::to_string(n) + " has an empty shape");
    }
    if (n > 0 && w.cols() != p.layers[n - 1].rows() + extra) {
      throw ShapeError("layer " + std::to_string(n) + " expects " + std::to_string(w.cols() - extra) +
                       " inputs but layer below has " + std::to_string(p.layers[n - 1].rows()));
    }
  }
}

inline void validate_arch(const std::vector<int>& dims) {
  if (dims.size() < 2) throw ShapeError("architecture needs at least input and output sizes");
  for (int d : dims) {
    if (d < 1) throw ShapeError("layer sizes must be >= 1");
  }
}

// Pre-synaptic vector fed to W_n: f is skipped at the input layer, and the
// bias 1 is appended after f.
inline Vector presyn(const NetworkParams& p, Activation act, std::size_t n, const Vector& v) {
  Vector a = n == 0 ? v : activation_apply(act, v);
  return p.bias ? augment(a) : a;
}

inline std::vector<Vector> feedforward(const NetworkParams& p, Activation act, const Vector& x) {
  if (x.size() != p.in_dim()) {
    throw LinalgError("feedforward: input has " + std::to_string(x.size()) + " entries, network expects " +
                      std::to_string(p.in_dim()));
  }
  std::vector<Vector> h{x};
  h.reserve(p.depth() + 1);
  for (std::size_t n = 0; n < p.depth(); ++n) h.push_back(matvec(p.layers[n], presyn(p, act, n, h[n])));
  return h;
}

using Rng = boost::random::mt19937_64;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero bias.
inline NetworkParams init_params(const std::vector<int>& dims, Rng& rng, bool bias = true) {
  validate_arch(dims);
  NetworkParams p;
  p.bias = bias;
  for (std::size_t n = 0; n + 1 < dims.size(); ++n) {
    const double r = 1.0 / std::sqrt(static_cast<double>(dims[n]));
    boost::random::uniform_real_distribution<double> u(-r, r);
    Matrix w = Matrix::Zero(dims[n + 1], dims[n] + (bias ? 1 : 0));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < dims[n]; ++j) w(i, j) = u(rng);
    p.layers.push_back(std::move(w));
  }
  return p;
}

inline double param_norm_sq(const std::vector<Matrix>& ms) {
  double s = 0.0;
  for (const auto& m : ms) s += m.squaredNorm();
  return s;
}

inline bool params_finite(const NetworkParams& p) {
  for (const auto& w : p.layers)
    if (!w.allFinite()) return false;
  return true;
}

// ---- serialization -------------------------------------------------------

inline constexpr std::uint32_t kParamsVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("params: truncated header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("params: truncated payload");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace detail

// The file format has no bias flag, so only biased networks round-trip.
inline void save_params(std::ostream& os, const NetworkParams& p) {
  if (!p.bias) throw FormatError("params: bias-free networks cannot be serialized");
  validate(p);
  os.write("ILNP", 4);
  detail::put_u32(os, kParamsVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(p.depth()));
  for (const auto& w : p.layers) {
    detail::put_u32(os, static_cast<std::uint32_t>(w.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(w.cols()));
  }
  for (const auto& w : p.layers)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) detail::put_f64(os, w(i, j));
}

inline NetworkParams load_params(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("params: truncated header");
  if (std::string(magic, 4) != "ILNP") throw FormatError("params: bad magic");
  if (detail::get_u32(is) != kParamsVersion) throw FormatError("params: unsupported version");
  const std::uint32_t count = detail::get_u32(is);
  if (count == 0 || count > 4096) throw FormatError("params: implausible layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint32_t r = detail::get_u32(is);
    shapes.emplace_back(r, detail::get_u32(is));
  }
  NetworkParams p;
  for (auto [r, c] : shapes) {
    Matrix w(r, c);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = detail::get_f64(is);
    p.layers.push_back(std::move(w));
  }
  try {
    validate(p);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("params: ") + e.what());
  }
  return p;
}

inline void save_params(const std::string& path, const NetworkParams& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("params: cannot open " + path);
  save_params(os, p);
}

inline NetworkParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("params: cannot open " + path);
  return load_params(is);
}

}  // namespace ilprox
