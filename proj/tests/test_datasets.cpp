#include "ilprox/datasets.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace ilprox;
namespace fs = std::filesystem;

namespace {

using Bytes = std::vector<unsigned char>;

void put_be32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>((v >> s) & 0xFF));
}

Bytes idx_images(std::uint32_t magic, std::uint32_t count, std::uint32_t rows, std::uint32_t cols, const Bytes& px) {
  Bytes b;
  put_be32(b, magic);
  put_be32(b, count);
  put_be32(b, rows);
  put_be32(b, cols);
  b.insert(b.end(), px.begin(), px.end());
  return b;
}

Bytes idx_labels(std::uint32_t magic, const Bytes& labels) {
  Bytes b;
  put_be32(b, magic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

class Fixture : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ilprox_ds_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const Bytes& b) {
    const fs::path p = dir_ / name;
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    return p.string();
  }

  fs::path dir_;
};

DataError::Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.kind;
  }
  ADD_FAILURE() << "no DataError thrown";
  return DataError::Kind::Io;
}

}  // namespace

using IdxTest = Fixture;
using CifarTest = Fixture;

TEST_F(IdxTest, TwoImageFixture) {
  const auto img = write("img", idx_images(0x803, 2, 2, 2, {0, 255, 255, 0, 255, 255, 0, 0}));
  const auto lab = write("lab", idx_labels(0x801, {3, 0}));
  const Dataset d = load_idx(img, lab);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.inputs[0].size(), 4);
  EXPECT_EQ(d.inputs[0](0), 0.0);
  EXPECT_EQ(d.inputs[0](1), 1.0);
  EXPECT_EQ(d.inputs[1](3), 0.0);
  EXPECT_EQ(d.n_classes, 10);
  EXPECT_EQ(d.targets[0](3), 1.0);
  EXPECT_EQ(d.targets[0].sum(), 1.0);
  EXPECT_EQ(d.targets[1](0), 1.0);
}

TEST_F(IdxTest, Deterministic) {
  const auto img = write("img", idx_images(0x803, 1, 1, 3, {10, 128, 200}));
  const auto lab = write("lab", idx_labels(0x801, {7}));
  const Dataset a = load_idx(img, lab), b = load_idx(img, lab);
  EXPECT_EQ(a.inputs[0], b.inputs[0]);
  EXPECT_DOUBLE_EQ(a.inputs[0](1), 128.0 / 255.0);
}

TEST_F(IdxTest, Errors) {
  const auto good_img = write("img", idx_images(0x803, 2, 1, 1, {1, 2}));
  const auto good_lab = write("lab", idx_labels(0x801, {1, 2}));
  const auto empty = write("empty", {});
  EXPECT_EQ(kind_of([&] { load_idx(empty, good_lab); }), DataError::Kind::Truncated);
  EXPECT_EQ(kind_of([&] { load_idx(good_img, write("badlab", idx_labels(0x803, {1, 2}))); }),
            DataError::Kind::BadMagic);
  EXPECT_EQ(kind_of([&] { load_idx(write("badimg", idx_images(0x801, 2, 1, 1, {1, 2})), good_lab); }),
            DataError::Kind::BadMagic);
  EXPECT_EQ(kind_of([&] { load_idx(write("short", idx_images(0x803, 2, 1, 1, {1})), good_lab); }),
            DataError::Kind::Truncated);
  EXPECT_EQ(kind_of([&] { load_idx(good_img, write("onelab", idx_labels(0x801, {1}))); }),
            DataError::Kind::CountMismatch);
  EXPECT_EQ(kind_of([&] { load_idx((dir_ / "missing").string(), good_lab); }), DataError::Kind::Io);
}

TEST_F(CifarTest, SingleRecord) {
  Bytes rec(kCifarRecord, 255);
  rec[0] = 3;
  const Dataset d = load_cifar10_binary({write("b1", rec)});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.inputs[0].size(), 3072);
  EXPECT_EQ(d.inputs[0].minCoeff(), 1.0);
  EXPECT_EQ(d.targets[0](3), 1.0);
  EXPECT_EQ(d.targets[0].sum(), 1.0);
}

TEST_F(CifarTest, OrderPreservedAcrossRecordsAndFiles) {
  Bytes two(2 * kCifarRecord, 0);
  two[0] = 1;
  two[kCifarRecord] = 2;
  Bytes three(kCifarRecord, 0);
  three[0] = 9;
  const Dataset d = load_cifar10_binary({write("a", two), write("b", three)});
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.targets[0](1), 1.0);
  EXPECT_EQ(d.targets[1](2), 1.0);
  EXPECT_EQ(d.targets[2](9), 1.0);
}

TEST_F(CifarTest, Errors) {
  EXPECT_THROW(load_cifar10_binary({write("empty", {})}), DataError);
  EXPECT_EQ(kind_of([&] { load_cifar10_binary({write("odd", Bytes(kCifarRecord + 5, 0))}); }),
            DataError::Kind::RecordSize);
  Bytes bad(kCifarRecord, 0);
  bad[0] = 12;
  EXPECT_THROW(load_cifar10_binary({write("lab", bad)}), DataError);
}

TEST(TeacherStudent, DeterministicAndShaped) {
  const Dataset a = teacher_student_dataset(5, 20), b = teacher_student_dataset(5, 20);
  const Dataset c = teacher_student_dataset(6, 20);
  ASSERT_EQ(a.size(), 20u);
  EXPECT_EQ(a.inputs[0].size(), 10);
  EXPECT_EQ(a.targets[0].size(), 5);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(a.inputs[i], b.inputs[i]);
    EXPECT_EQ(a.targets[i], b.targets[i]);
  }
  EXPECT_NE(a.inputs[0], c.inputs[0]);
  EXPECT_THROW(teacher_student_dataset(1, 0), std::invalid_argument);
}

TEST(TeacherStudent, TargetsBoundedByLastLayer) {
  // tanh units lie in [-1, 1], so |y_i| <= sum_j |W_ij| for the bias-free teacher
  Rng rng(5);
  const NetworkParams teacher = init_params({10, 5, 5, 5, 5}, rng, false);
  const Vector bound = teacher.layers.back().cwiseAbs().rowwise().sum();
  const Dataset d = teacher_student_dataset(5, 200);
  for (const auto& y : d.targets) EXPECT_TRUE((y.cwiseAbs().array() <= bound.array()).all());
  EXPECT_EQ(feedforward(teacher, Activation::Tanh, Vector::Zero(10)).back(), Vector::Zero(5));
}

TEST(Iterate, OrdersAndBatches) {
  Dataset d;
  for (int i = 0; i < 7; ++i) {
    d.inputs.push_back(Vector::Constant(1, i));
    d.targets.push_back(Vector::Zero(1));
  }
  const auto whole = iterate(d, 7, 1, true);
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole[0].size(), 7u);
  const auto plain = iterate(d, 1, 1, false);
  ASSERT_EQ(plain.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(plain[i][0], i);
  EXPECT_EQ(iterate(d, 3, 4, true), iterate(d, 3, 4, true));
  const auto batches = iterate(d, 3, 4, true);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[2].size(), 1u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_NE(iterate(d, 7, 4, true, 0), iterate(d, 7, 4, true, 1));
  EXPECT_THROW(iterate(d, 0, 1, true), std::invalid_argument);
}

TEST(Iterate, StreamMatchesEpochListing) {
  BatchStream s(5, 2, 9, true);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<std::size_t> flat_stream, flat_list;
    for (int i = 0; i < 3; ++i) {
      const auto b = s.next();
      flat_stream.insert(flat_stream.end(), b.begin(), b.end());
    }
    Dataset d;
    d.inputs.assign(5, Vector::Zero(1));
    d.targets.assign(5, Vector::Zero(1));
    for (const auto& b : iterate(d, 2, 9, true, epoch)) flat_list.insert(flat_list.end(), b.begin(), b.end());
    EXPECT_EQ(flat_stream, flat_list);
  }
}
