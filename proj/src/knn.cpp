#include "stylebook/knn.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace stylebook {

double cosine_distance(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - a.dot(b) / (na * nb);
}

Matrix knn_match(const TargetBank& bank, const Matrix& source, int k) {
  const Eigen::Index n = bank.frames.rows();
  if (n == 0) throw std::invalid_argument("knn_match: empty bank");
  if (k < 1 || k > n) throw std::invalid_argument("knn_match: k must be in [1, bank size]");
  if (source.cols() != bank.frames.cols()) throw std::invalid_argument("knn_match: dimension mismatch");

  const Eigen::VectorXd bank_norms = bank.frames.rowwise().norm();
  Matrix out(source.rows(), source.cols());
  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < source.rows(); ++s) {
    const double ns = source.row(s).norm();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double denom = ns * bank_norms(i);
      dist[static_cast<std::size_t>(i)] = denom == 0.0 ? 1.0 : 1.0 - source.row(s).dot(bank.frames.row(i)) / denom;
    }
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    auto closer = [&dist](Eigen::Index a, Eigen::Index b) {
      const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
    // Sum in bank order so k == T reproduces the bank mean bit for bit.
    std::sort(order.begin(), order.begin() + k);
    RowVector acc = RowVector::Zero(source.cols());
    for (int j = 0; j < k; ++j) acc += bank.frames.row(order[static_cast<std::size_t>(j)]);
    out.row(s) = acc / static_cast<double>(k);
  }
  return out;
}

std::size_t bank_memory_bytes(const TargetBank& bank) {
  return static_cast<std::size_t>(bank.frames.rows()) * static_cast<std::size_t>(bank.frames.cols()) * sizeof(float);
}

}  // namespace stylebook
