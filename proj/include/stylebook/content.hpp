#pragma once

// Content discretization (k-means units) and the shared content encoder.

#include "stylebook/layers.hpp"

#include <cstdint>
#include <vector>

namespace stylebook {

struct Codebook {
  Matrix centroids;  // K x content_dim

  Eigen::Index size() const { return centroids.rows(); }
  Eigen::Index dim() const { return centroids.cols(); }
};

using UnitSequence = std::vector<int>;

struct KMeansResult {
  Codebook codebook;
  /// Total within-cluster squared distance after each Lloyd iteration.
  std::vector<double> distortion;
};

/// k-means++ seeding followed by Lloyd iterations. Stops early once
/// assignments stop changing. Requires at least K distinct rows.
KMeansResult fit_codebook(const Matrix& features, int k, int iterations, std::uint64_t seed);

/// Nearest centroid per frame (squared Euclidean; ties go to the lowest index).
UnitSequence quantize(const Codebook& codebook, const Matrix& features);

struct ContentEncoderConfig {
  int num_units = 100;
  int model_dim = 256;
  int num_layers = 4;
  int num_heads = 4;
  int ff_dim = 1024;
};

/// Unit embedding + sinusoidal positions + pre-norm Transformer stack.
/// The same instance encodes source and target speech.
class ContentEncoder : public Module {
 public:
  ContentEncoder() = default;
  ContentEncoder(const ContentEncoderConfig& config, Rng& rng);

  /// `units` holds B sequences of seq_len ids back to back; returns
  /// (B*seq_len) x model_dim.
  Var forward(Tape& tape, const std::vector<int>& units, Eigen::Index seq_len) const;
  void collect(ParameterList& out) override;

  const ContentEncoderConfig& config() const { return config_; }

 private:
  ContentEncoderConfig config_;
  mutable Parameter embedding_;
  std::vector<TransformerLayer> layers_;
  LayerNorm final_norm_;
};

/// Single-sequence convenience wrapper returning T x model_dim.
Matrix encode_content(const ContentEncoder& encoder, const UnitSequence& units);

}  // namespace stylebook
