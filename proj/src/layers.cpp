#include "stylebook/layers.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stylebook {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal();
  return m;
}

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
    : weight(name + ".weight", rng.normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)))),
      bias(name + ".bias", Matrix::Zero(1, out)) {}

Var Linear::forward(Tape& tape, const Var& x) const {
  return ops::linear(x, tape.param(weight), tape.param(bias));
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, Eigen::Index dim)
    : gamma(name + ".gamma", Matrix::Ones(1, dim)), beta(name + ".beta", Matrix::Zero(1, dim)) {}

Var LayerNorm::forward(Tape& tape, const Var& x) const {
  return ops::layer_norm(x, tape.param(gamma), tape.param(beta));
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

Mlp::Mlp(const std::string& name, const std::vector<Eigen::Index>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    layers.emplace_back(name + "." + std::to_string(i), dims[i], dims[i + 1], rng);
  }
}

Var Mlp::forward(Tape& tape, const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, h);
    if (i + 1 < layers.size()) h = ops::relu(h);
  }
  return h;
}

void Mlp::collect(ParameterList& out) {
  for (auto& l : layers) l.collect(out);
}

Conv1d::Conv1d(const std::string& name, Eigen::Index in, Eigen::Index out, int kernel_size, Rng& rng)
    : kernel(kernel_size),
      weight(name + ".weight",
             rng.normal_matrix(kernel_size * in, out, 1.0 / std::sqrt(static_cast<double>(kernel_size * in)))),
      bias(name + ".bias", Matrix::Zero(1, out)) {}

Var Conv1d::forward(Tape& tape, const Var& x, Eigen::Index seq_len) const {
  return ops::conv1d(x, tape.param(weight), tape.param(bias), seq_len, kernel);
}

void Conv1d::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, int heads, Eigen::Index model, Eigen::Index query_dim,
                                       Eigen::Index key_dim, Eigen::Index value_dim, Eigen::Index out, Rng& rng)
    : num_heads(heads), model_dim(model), out_dim(out) {
  if (heads < 1 || model % heads != 0) throw std::invalid_argument("MultiHeadAttention: model_dim % heads != 0");
  auto init = [&rng](Eigen::Index fan_in, Eigen::Index cols) {
    return rng.normal_matrix(fan_in, cols, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  };
  wq = Parameter(name + ".wq", init(query_dim, model));
  bq = Parameter(name + ".bq", Matrix::Zero(1, model));
  wk = Parameter(name + ".wk", init(key_dim, model));
  bk = Parameter(name + ".bk", Matrix::Zero(1, model));
  wv = Parameter(name + ".wv", init(value_dim, model));
  bv = Parameter(name + ".bv", Matrix::Zero(1, model));
  wo = Parameter(name + ".wo", init(model, out));
  bo = Parameter(name + ".bo", Matrix::Zero(1, out));
}

Var MultiHeadAttention::forward(Tape& tape, const Var& queries, const Var& keys, const Var& values, Eigen::Index q_len,
                                Eigen::Index kv_len, Matrix* weights_out) const {
  if (keys.rows() != values.rows()) throw std::invalid_argument("mha: key and value row counts differ");
  if (queries.cols() != wq.value.rows() || keys.cols() != wk.value.rows() || values.cols() != wv.value.rows()) {
    throw std::invalid_argument("mha: input width does not match projection");
  }
  const Var q = ops::linear(queries, tape.param(wq), tape.param(bq));
  const Var k = ops::linear(keys, tape.param(wk), tape.param(bk));
  const Var v = ops::linear(values, tape.param(wv), tape.param(bv));
  const Var heads = ops::attention(q, k, v, num_heads, q_len, kv_len, weights_out);
  return ops::linear(heads, tape.param(wo), tape.param(bo));
}

void MultiHeadAttention::collect(ParameterList& out) {
  for (Parameter* p : {&wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo}) out.push_back(p);
}

Matrix mha_forward(const MultiHeadAttention& mha, const Matrix& queries, const Matrix& keys, const Matrix& values,
                   Matrix* weights_out) {
  if (keys.rows() < 1) throw std::invalid_argument("mha_forward: empty key set");
  Tape tape;
  const Var out = mha.forward(tape, tape.constant(queries), tape.constant(keys), tape.constant(values),
                              queries.rows(), keys.rows(), weights_out);
  return out.value();
}

TransformerLayer::TransformerLayer(const std::string& name, Eigen::Index dim, int heads, Eigen::Index ff_dim, Rng& rng)
    : norm1(name + ".norm1", dim),
      norm2(name + ".norm2", dim),
      attn(name + ".attn", heads, dim, dim, dim, dim, dim, rng),
      ff1(name + ".ff1", dim, ff_dim, rng),
      ff2(name + ".ff2", ff_dim, dim, rng) {}

Var TransformerLayer::forward(Tape& tape, const Var& x, Eigen::Index seq_len) const {
  const Var h = norm1.forward(tape, x);
  const Var a = attn.forward(tape, h, h, h, seq_len, seq_len);
  const Var x1 = ops::add(x, a);
  const Var f = ff2.forward(tape, ops::relu(ff1.forward(tape, norm2.forward(tape, x1))));
  return ops::add(x1, f);
}

void TransformerLayer::collect(ParameterList& out) {
  norm1.collect(out);
  attn.collect(out);
  norm2.collect(out);
  ff1.collect(out);
  ff2.collect(out);
}

Matrix sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Matrix pe(length, dim);
  for (Eigen::Index p = 0; p < length; ++p) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(p, i) = (i % 2 == 0) ? std::sin(static_cast<double>(p) * freq) : std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

Matrix sinusoidal_times(const std::vector<double>& times, Eigen::Index dim, double scale) {
  const Eigen::Index half = dim / 2;
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(times.size()), dim);
  for (std::size_t r = 0; r < times.size(); ++r) {
    for (Eigen::Index i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(half - 1, 1)));
      const double arg = scale * times[r] * freq;
      out(static_cast<Eigen::Index>(r), i) = std::sin(arg);
      out(static_cast<Eigen::Index>(r), half + i) = std::cos(arg);
    }
  }
  return out;
}

}  // namespace stylebook
