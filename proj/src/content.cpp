#include "stylebook/content.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace stylebook {

namespace {

int nearest(const Matrix& centroids, const Eigen::Ref<const RowVector>& x, double* dist_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist_out != nullptr) *dist_out = best_d;
  return best;
}

Eigen::Index count_distinct_rows(const Matrix& m, Eigen::Index enough) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) idx[static_cast<std::size_t>(i)] = i;
  auto less = [&m](Eigen::Index a, Eigen::Index b) {
    return std::lexicographical_compare(m.row(a).data(), m.row(a).data() + m.cols(), m.row(b).data(),
                                        m.row(b).data() + m.cols());
  };
  std::sort(idx.begin(), idx.end(), less);
  Eigen::Index distinct = m.rows() > 0 ? 1 : 0;
  for (std::size_t i = 1; i < idx.size() && distinct < enough; ++i) {
    if (m.row(idx[i]) != m.row(idx[i - 1])) ++distinct;
  }
  return distinct;
}

}  // namespace

KMeansResult fit_codebook(const Matrix& features, int k, int iterations, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("fit_codebook: K must be >= 2");
  if (iterations < 0) throw std::invalid_argument("fit_codebook: iterations must be >= 0");
  if (count_distinct_rows(features, k) < k) {
    throw std::invalid_argument("fit_codebook: fewer than K distinct frames");
  }
  const Eigen::Index n = features.rows();
  Rng rng(seed);

  // k-means++ seeding
  Matrix centroids(k, features.cols());
  centroids.row(0) = features.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (features.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    const double target = rng.uniform() * total;
    Eigen::Index pick = -1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2(i) <= 0.0) continue;
      acc += d2(i);
      pick = i;
      if (acc > target) break;
    }
    centroids.row(c) = features.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (features.row(i) - centroids.row(c)).squaredNorm());
  }

  KMeansResult result;
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = nearest(centroids, features.row(i));
      changed = changed || a != assign[static_cast<std::size_t>(i)];
      assign[static_cast<std::size_t>(i)] = a;
    }
    Matrix sums = Matrix::Zero(k, features.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += features.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    // Empty clusters keep their previous centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    double distortion = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      distortion += (features.row(i) - centroids.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    }
    result.distortion.push_back(distortion);
    if (!changed) break;
  }
  result.codebook.centroids = std::move(centroids);
  return result;
}

UnitSequence quantize(const Codebook& codebook, const Matrix& features) {
  if (features.cols() != codebook.dim()) throw std::invalid_argument("quantize: feature dim does not match codebook");
  UnitSequence units(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    units[static_cast<std::size_t>(i)] = nearest(codebook.centroids, features.row(i));
  }
  return units;
}

ContentEncoder::ContentEncoder(const ContentEncoderConfig& config, Rng& rng)
    : config_(config),
      embedding_("content.embedding", rng.normal_matrix(config.num_units, config.model_dim)),
      final_norm_("content.final_norm", config.model_dim) {
  if (config.num_units < 1 || config.model_dim < 1 || config.num_layers < 0) {
    throw std::invalid_argument("ContentEncoder: invalid config");
  }
  for (int i = 0; i < config.num_layers; ++i) {
    layers_.emplace_back("content.layer" + std::to_string(i), config.model_dim, config.num_heads, config.ff_dim, rng);
  }
}

Var ContentEncoder::forward(Tape& tape, const std::vector<int>& units, Eigen::Index seq_len) const {
  const auto total = static_cast<Eigen::Index>(units.size());
  if (seq_len < 1 || total % seq_len != 0) throw std::invalid_argument("ContentEncoder: bad sequence length");
  for (int u : units) {
    if (u < 0 || u >= config_.num_units) throw std::out_of_range("ContentEncoder: unit id out of range");
  }
  const Var table = tape.param(embedding_);
  Var x = ops::gather_rows(table, units);
  const Matrix pe_one = sinusoidal_positions(seq_len, config_.model_dim);
  Matrix pe(total, config_.model_dim);
  for (Eigen::Index b = 0; b < total / seq_len; ++b) pe.middleRows(b * seq_len, seq_len) = pe_one;
  x = ops::add(x, tape.constant(std::move(pe)));
  for (const auto& layer : layers_) x = layer.forward(tape, x, seq_len);
  return final_norm_.forward(tape, x);
}

void ContentEncoder::collect(ParameterList& out) {
  out.push_back(&embedding_);
  for (auto& l : layers_) l.collect(out);
  final_norm_.collect(out);
}

Matrix encode_content(const ContentEncoder& encoder, const UnitSequence& units) {
  if (units.empty()) throw std::invalid_argument("encode_content: empty unit sequence");
  Tape tape;
  return encoder.forward(tape, units, static_cast<Eigen::Index>(units.size())).value();
}

}  // namespace stylebook
