#include "stylebook/knn.hpp"
#include "stylebook/layers.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace stylebook;
using namespace stylebook::oracles;
using stylebook::testing::max_abs_diff;

TEST_CASE("knn_match equals the full-sort reference") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index T = 1 + rng.below(30), D = 1 + rng.below(6);
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    TargetBank bank{rng.normal_matrix(T, D)};
    const Matrix src = rng.normal_matrix(1 + rng.below(10), D);
    CHECK(max_abs_diff(knn_match(bank, src, k), full_sort_reference(bank.frames, src, k)) <= 1e-12);
  }
  TargetBank bank{rng.normal_matrix(20, 4)};
  const Matrix src = rng.normal_matrix(8, 4);
  CHECK(max_abs_diff(knn_match(bank, src, 3), full_sort_reference(bank.frames, src, 3)) <= 1e-12);
}

TEST_CASE("knn_match: exact hit with k=1 and bank mean with k=T") {
  Rng rng(2);
  TargetBank bank{rng.normal_matrix(15, 5)};
  const Matrix hit = knn_match(bank, bank.frames.row(6), 1);
  CHECK(hit.row(0) == bank.frames.row(6));
  const RowVector mean = [&] {
    RowVector acc = RowVector::Zero(5);
    for (Eigen::Index i = 0; i < 15; ++i) acc += bank.frames.row(i);
    return RowVector(acc / 15.0);
  }();
  const Matrix all = knn_match(bank, rng.normal_matrix(7, 5), 15);
  for (Eigen::Index r = 0; r < 7; ++r) CHECK(all.row(r) == mean);
}

TEST_CASE("knn_match ties resolve to the lowest bank index") {
  Matrix frames(4, 2);
  frames << 2, 0, 1, 0, 0, 1, 3, 0;  // rows 0, 1, 3 share the direction of (1, 0)
  TargetBank bank{frames};
  Matrix src(1, 2);
  src << 5, 0;
  CHECK(knn_match(bank, src, 1).row(0) == frames.row(0));
  const Matrix two = knn_match(bank, src, 2);
  CHECK(two(0, 0) == doctest::Approx(1.5));
}

TEST_CASE("knn_match outputs lie in the bank's convex hull and errors are raised") {
  Rng rng(3);
  TargetBank bank{rng.normal_matrix(12, 3)};
  const Matrix out = knn_match(bank, rng.normal_matrix(20, 3), 4);
  for (Eigen::Index c = 0; c < 3; ++c) {
    CHECK(out.col(c).maxCoeff() <= bank.frames.col(c).maxCoeff() + 1e-12);
    CHECK(out.col(c).minCoeff() >= bank.frames.col(c).minCoeff() - 1e-12);
  }
  CHECK_THROWS_AS(knn_match(bank, rng.normal_matrix(2, 3), 13), std::invalid_argument);
  CHECK_THROWS_AS(knn_match(bank, rng.normal_matrix(2, 3), 0), std::invalid_argument);
  CHECK_THROWS_AS(knn_match(TargetBank{Matrix(0, 3)}, rng.normal_matrix(2, 3), 1), std::invalid_argument);
  CHECK_THROWS_AS(knn_match(bank, rng.normal_matrix(2, 4), 1), std::invalid_argument);
}

TEST_CASE("bank memory is linear in target length") {
  TargetBank ten{Matrix::Zero(10 * 50, 1024)};
  CHECK(bank_memory_bytes(ten) == 2048000);
  CHECK(bank_memory_bytes(ten) / 1024 == 2000);
  TargetBank five_min{Matrix::Zero(300 * 50, 1024)};
  CHECK(bank_memory_bytes(five_min) / 1024 == 60000);
  CHECK(bank_memory_bytes(TargetBank{Matrix(0, 1024)}) == 0);
}
