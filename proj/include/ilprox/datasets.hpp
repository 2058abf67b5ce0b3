// IDX (MNIST-style) and CIFAR-10 binary loaders, the teacher-student
// regression generator, and deterministic mini-batch iteration.
#pragma once

#include "ilprox/linalg.hpp"
#include "ilprox/nn.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstdint>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

namespace ilprox {

struct Dataset {
  std::vector<Vector> inputs;
  std::vector<Vector> targets;
  std::optional<int> n_classes;

  std::size_t size() const { return inputs.size(); }
};

class DataError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch, RecordSize };
  DataError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

namespace detail {

inline std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(DataError::Kind::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off) {
  return std::uint32_t(b[off]) << 24 | std::uint32_t(b[off + 1]) << 16 | std::uint32_t(b[off + 2]) << 8 |
         std::uint32_t(b[off + 3]);
}

inline Vector one_hot(int label, int classes) {
  Vector v = Vector::Zero(classes);
  v(label) = 1.0;
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Pixels scaled by 1/255, labels one-hot over 10 classes (or max label + 1
// if larger).
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  using K = DataError::Kind;
  const auto img = detail::read_all(images_path);
  const auto lab = detail::read_all(labels_path);
  if (img.size() < 16) throw DataError(K::Truncated, images_path + ": truncated IDX header");
  if (detail::be32(img, 0) != kIdxImagesMagic) throw DataError(K::BadMagic, images_path + ": bad IDX image magic");
  if (lab.size() < 8) throw DataError(K::Truncated, labels_path + ": truncated IDX header");
  if (detail::be32(lab, 0) != kIdxLabelsMagic) throw DataError(K::BadMagic, labels_path + ": bad IDX label magic");
  const std::size_t n = detail::be32(img, 4);
  const std::size_t rows = detail::be32(img, 8);
  const std::size_t cols = detail::be32(img, 12);
  const std::size_t nl = detail::be32(lab, 4);
  const std::size_t pix = rows * cols;
  if (img.size() < 16 + n * pix) throw DataError(K::Truncated, images_path + ": truncated image payload");
  if (lab.size() < 8 + nl) throw DataError(K::Truncated, labels_path + ": truncated label payload");
  if (n != nl) {
    throw DataError(K::CountMismatch, "image count " + std::to_string(n) + " != label count " + std::to_string(nl));
  }
  if (n == 0 || pix == 0) throw DataError(K::Truncated, images_path + ": empty IDX file");
  int classes = 10;
  for (std::size_t i = 0; i < n; ++i) classes = std::max(classes, int(lab[8 + i]) + 1);
  Dataset d;
  d.n_classes = classes;
  d.inputs.reserve(n);
  d.targets.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector v(pix);
    for (std::size_t j = 0; j < pix; ++j) v(j) = img[16 + i * pix + j] / 255.0;
    d.inputs.push_back(std::move(v));
    d.targets.push_back(detail::one_hot(lab[8 + i], classes));
  }
  return d;
}

inline constexpr std::size_t kCifarRecord = 3073;

inline Dataset load_cifar10_binary(const std::vector<std::string>& paths) {
  using K = DataError::Kind;
  Dataset d;
  d.n_classes = 10;
  for (const auto& path : paths) {
    const auto b = detail::read_all(path);
    if (b.empty()) throw DataError(K::Truncated, path + ": empty CIFAR-10 file");
    if (b.size() % kCifarRecord != 0) {
      throw DataError(K::RecordSize, path + ": size is not a multiple of " + std::to_string(kCifarRecord));
    }
    for (std::size_t off = 0; off < b.size(); off += kCifarRecord) {
      const int label = b[off];
      if (label > 9) throw DataError(K::BadMagic, path + ": label byte out of range");
      Vector v(3072);
      for (std::size_t j = 0; j < 3072; ++j) v(j) = b[off + 1 + j] / 255.0;
      d.inputs.push_back(std::move(v));
      d.targets.push_back(detail::one_hot(label, 10));
    }
  }
  if (d.inputs.empty()) throw DataError(K::Truncated, "no CIFAR-10 records loaded");
  return d;
}

// Standard Gaussian inputs, targets from a bias-free teacher with Tanh
// hidden units and a linear output, both drawn from `seed`.
inline Dataset teacher_student_dataset(std::uint64_t seed, std::size_t n_samples,
                                       const std::vector<int>& dims = {10, 5, 5, 5, 5}) {
  if (n_samples < 1) throw std::invalid_argument("teacher_student_dataset: need at least one sample");
  Rng rng(seed);
  const NetworkParams teacher = init_params(dims, rng, false);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  for (std::size_t i = 0; i < n_samples; ++i) {
    Vector x(dims.front());
    for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = normal(rng);
    d.targets.push_back(feedforward(teacher, Activation::Tanh, x).back());
    d.inputs.push_back(std::move(x));
  }
  return d;
}

// Deterministic mini-batch stream. The order for epoch k is a Fisher-Yates
// shuffle seeded by (seed, k); shuffle = false keeps file order.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::uint64_t seed, bool shuffle, std::size_t epoch = 0)
      : n_(n), bs_(batch_size), seed_(seed), shuffle_(shuffle), epoch_(epoch) {
    if (batch_size < 1) throw std::invalid_argument("BatchStream: batch_size must be >= 1");
    if (n < 1) throw std::invalid_argument("BatchStream: empty dataset");
    reorder();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> b;
    while (b.size() < bs_) {
      if (pos_ == n_) {
        ++epoch_;
        reorder();
        if (!b.empty()) break;  // batches never straddle epochs
      }
      b.push_back(order_[pos_++]);
    }
    return b;
  }

  std::size_t epoch() const { return epoch_; }

 private:
  void reorder() {
    pos_ = 0;
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order_[i] = i;
    if (!shuffle_) return;
    Rng rng(seed_ * 0x9E3779B97F4A7C15ULL + epoch_ + 1);
    for (std::size_t i = n_ - 1; i > 0; --i) {
      boost::random::uniform_int_distribution<std::size_t> u(0, i);
      std::swap(order_[i], order_[u(rng)]);
    }
  }

  std::size_t n_, bs_;
  std::uint64_t seed_;
  bool shuffle_;
  std::size_t epoch_;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

// All batches of one epoch.
inline std::vector<std::vector<std::size_t>> iterate(const Dataset& d, std::size_t batch_size, std::uint64_t seed,
                                                     bool shuffle, std::size_t epoch = 0) {
  BatchStream s(d.size(), batch_size, seed, shuffle, epoch);
  std::vector<std::vector<std::size_t>> out;
  const std::size_t batches = (d.size() + batch_size - 1) / batch_size;
  for (std::size_t i = 0; i < batches; ++i) out.push_back(s.next());
  return out;
}

}  // namespace ilprox
