#pragma once

#include "stylebook/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace stylebook {

/// Deterministic generator shared by initialization, corpus synthesis and
/// sampling. std::mt19937_64 streams are stable across platforms; the
/// normal transform below is our own so results do not depend on the
/// standard library's distribution implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Appends pointers to every trainable matrix of a module.
class Module {
 public:
  virtual ~Module() = default;
  virtual void collect(ParameterList& out) = 0;
  ParameterList parameters() {
    ParameterList out;
    collect(out);
    return out;
  }
};

class Linear : public Module {
 public:
  Linear() = default;
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);

  Var forward(Tape& tape, const Var& x) const;
  void collect(ParameterList& out) override;
  Eigen::Index in_dim() const { return weight.value.rows(); }
  Eigen::Index out_dim() const { return weight.value.cols(); }

  mutable Parameter weight;
  mutable Parameter bias;
};

class LayerNorm : public Module {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim);
  Var forward(Tape& tape, const Var& x) const;
  void collect(ParameterList& out) override;

  mutable Parameter gamma;
  mutable Parameter beta;
};

/// Stack of Linear layers with ReLU between them (none after the last).
class Mlp : public Module {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<Eigen::Index>& dims, Rng& rng);
  Var forward(Tape& tape, const Var& x) const;
  void collect(ParameterList& out) override;

  std::vector<Linear> layers;
};

class Conv1d : public Module {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, Eigen::Index in, Eigen::Index out, int kernel, Rng& rng);
  Var forward(Tape& tape, const Var& x, Eigen::Index seq_len) const;
  void collect(ParameterList& out) override;

  int kernel = 3;
  mutable Parameter weight;
  mutable Parameter bias;
};

/// Multi-head attention with separate input widths for queries, keys and
/// values and an output projection that may change the width.
class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int num_heads, Eigen::Index model_dim, Eigen::Index query_dim,
                     Eigen::Index key_dim, Eigen::Index value_dim, Eigen::Index out_dim, Rng& rng);

  /// Queries are grouped in blocks of q_len rows, keys/values in blocks of
  /// kv_len rows (or a single shared block). Returns (rows of q) x out_dim.
  Var forward(Tape& tape, const Var& queries, const Var& keys, const Var& values, Eigen::Index q_len,
              Eigen::Index kv_len, Matrix* weights_out = nullptr) const;
  void collect(ParameterList& out) override;

  int num_heads = 1;
  Eigen::Index model_dim = 0;
  Eigen::Index out_dim = 0;
  mutable Parameter wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Single-group attention on plain matrices: R x query_dim, T x key_dim,
/// T x value_dim -> R x out_dim.
Matrix mha_forward(const MultiHeadAttention& mha, const Matrix& queries, const Matrix& keys, const Matrix& values,
                   Matrix* weights_out = nullptr);

/// Pre-norm Transformer encoder layer.
class TransformerLayer : public Module {
 public:
  TransformerLayer() = default;
  TransformerLayer(const std::string& name, Eigen::Index dim, int heads, Eigen::Index ff_dim, Rng& rng);
  Var forward(Tape& tape, const Var& x, Eigen::Index seq_len) const;
  void collect(ParameterList& out) override;

  LayerNorm norm1, norm2;
  MultiHeadAttention attn;
  Linear ff1, ff2;
};

/// Sinusoidal encoding of positions 0..length-1 (length x dim).
Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim);
/// Sinusoidal embedding of scalar times, one row per entry.
Matrix sinusoidal_times(const std::vector<double>& times, Eigen::Index dim, double scale = 1000.0);

}  // namespace stylebook
