#pragma once

// Brute-force and closed-form references shared by the unit tests and the
// acceptance runner. None of these reuse the library code paths they check.

#include "stylebook/diffusion.hpp"
#include "stylebook/knn.hpp"
#include "stylebook/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace stylebook::oracles {

inline void randomize(MultiHeadAttention& mha, Rng& rng) {
  for (Parameter* p : mha.parameters()) p->value = rng.normal_matrix(p->value.rows(), p->value.cols(), 0.5);
}

// Per-row, per-head loops with no shared code path with ops::attention.
inline Matrix naive_mha(const MultiHeadAttention& mha, const Matrix& Q, const Matrix& K, const Matrix& V, Matrix* weights) {
  const Eigen::Index R = Q.rows(), T = K.rows(), D = mha.model_dim;
  const int H = mha.num_heads;
  const Eigen::Index dh = D / H;
  auto project = [](const Matrix& x, const Parameter& w, const Parameter& b) {
    Matrix out(x.rows(), w.value.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.value.cols(); ++c) {
        double acc = b.value(0, c);
        for (Eigen::Index i = 0; i < x.cols(); ++i) acc += x(r, i) * w.value(i, c);
        out(r, c) = acc;
      }
    }
    return out;
  };
  const Matrix q = project(Q, mha.wq, mha.bq);
  const Matrix k = project(K, mha.wk, mha.bk);
  const Matrix v = project(V, mha.wv, mha.bv);
  Matrix concat = Matrix::Zero(R, D);
  if (weights) *weights = Matrix::Zero(R, T);
  for (int h = 0; h < H; ++h) {
    for (Eigen::Index r = 0; r < R; ++r) {
      std::vector<double> logits(static_cast<std::size_t>(T));
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index t = 0; t < T; ++t) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < dh; ++c) dot += q(r, h * dh + c) * k(t, h * dh + c);
        logits[static_cast<std::size_t>(t)] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[static_cast<std::size_t>(t)]);
      }
      double z = 0.0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (Eigen::Index t = 0; t < T; ++t) {
        const double w = logits[static_cast<std::size_t>(t)] / z;
        if (weights) (*weights)(r, t) += w / H;
        for (Eigen::Index c = 0; c < dh; ++c) concat(r, h * dh + c) += w * v(t, h * dh + c);
      }
    }
  }
  return project(concat, mha.wo, mha.bo);
}

/// Returns fixed values for the conditional and unconditional branches;
/// a style row equal to `uncond` selects the unconditional value.
class ScriptedScore : public ScoreModel {
 public:
  ScriptedScore(double cond, double uncond, double marker) : cond_(cond), uncond_(uncond), marker_(marker) {}
  Matrix score(const Matrix& x_t, const Matrix&, const Matrix&, const Matrix& style, double) const override {
    const bool unconditional = style.rows() > 0 && style(0, 0) == marker_;
    return Matrix::Constant(x_t.rows(), x_t.cols(), unconditional ? uncond_ : cond_);
  }

 private:
  double cond_, uncond_, marker_;
};

/// Exact score of the forward marginal when x0 ~ N(m, S) per row.
class GaussianScore : public ScoreModel {
 public:
  GaussianScore(RowVector m, Matrix S, DiffusionSchedule sch) : m_(std::move(m)), S_(std::move(S)), sch_(sch) {}
  Matrix score(const Matrix& x_t, const Matrix& mu, const Matrix&, const Matrix&, double t) const override {
    const double a = sch_.decay(t);
    const Matrix cov = a * a * S_ + (1.0 - a * a) * Matrix::Identity(S_.rows(), S_.cols());
    const Matrix prec = cov.inverse();
    Matrix mean = mu * (1.0 - a);
    mean.rowwise() += a * m_;
    return -(x_t - mean) * prec;
  }

 private:
  RowVector m_;
  Matrix S_;
  DiffusionSchedule sch_;
};

struct Moments {
  RowVector mean;
  Matrix cov;
};

inline Moments moments(const Matrix& x) {
  Moments m;
  m.mean = x.colwise().mean();
  const Matrix c = x.rowwise() - m.mean;
  m.cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  return m;
}

// Full sort of (distance, index) pairs, then the plain mean of the first k.
inline Matrix full_sort_reference(const Matrix& bank, const Matrix& source, int k) {
  Matrix out(source.rows(), source.cols());
  for (Eigen::Index s = 0; s < source.rows(); ++s) {
    std::vector<std::pair<double, Eigen::Index>> d;
    for (Eigen::Index i = 0; i < bank.rows(); ++i) d.emplace_back(cosine_distance(source.row(s), bank.row(i)), i);
    std::sort(d.begin(), d.end());
    std::vector<Eigen::Index> chosen;
    for (int j = 0; j < k; ++j) chosen.push_back(d[static_cast<std::size_t>(j)].second);
    std::sort(chosen.begin(), chosen.end());
    RowVector acc = RowVector::Zero(source.cols());
    for (Eigen::Index i : chosen) acc += bank.row(i);
    out.row(s) = acc / k;
  }
  return out;
}

// Zero-initialized biases can leave a ReLU pre-activation at exactly 0.0
// (a row whose hidden units are all inactive), where central differences
// see a kink. Small random biases move the check point off it.
inline void jitter_biases(const ParameterList& params, Rng& rng, double scale = 0.1) {
  for (Parameter* p : params) {
    const std::string& n = p->name;
    const std::string tail = n.substr(n.rfind('.') + 1);
    if (tail == "bias" || tail == "bq" || tail == "bk" || tail == "bv" || tail == "bo") {
      p->value = rng.normal_matrix(p->value.rows(), p->value.cols(), scale);
    }
  }
}

inline std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  }
  return perm;
}

}  // namespace stylebook::oracles
