#include "stylebook/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace stylebook {

Var Tape::constant(Matrix value) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  auto n = std::make_unique<Node>();
  n->value = p.value;
  n->needs_grad = true;
  n->param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, bool needs_grad, std::function<void(const Matrix&)> backward) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->needs_grad = needs_grad;
  if (needs_grad) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = *nodes_[v.id()];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Matrix& Tape::grad_ref(const Var& v) {
  Node& n = *nodes_[v.id()];
  ensure_grad(n);
  return n.grad;
}

const Matrix& Tape::grad(int id) const {
  const Node& n = *nodes_[id];
  return n.grad.size() == 0 ? empty_ : n.grad;
}

void Tape::backward(const Var& scalar_out) {
  Node& out = *nodes_[scalar_out.id()];
  if (out.value.size() != 1) throw std::invalid_argument("backward: output must be 1x1");
  if (!out.needs_grad) return;
  out.grad = Matrix::Ones(1, 1);
  for (int i = scalar_out.id(); i >= 0; --i) {
    Node& n = *nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

namespace ops {
namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

bool any_grad(std::initializer_list<Var> vars) {
  for (const auto& v : vars) {
    if (v.tape()->needs_grad(v)) return true;
  }
  return false;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), any_grad({a, b}), [&t, a, b](const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate_expr(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate_expr(b, a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value() * b.value().transpose();
  return t.record(std::move(out), any_grad({a, b}), [&t, a, b](const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate_expr(a, g * b.value());
    if (t.needs_grad(b)) t.accumulate_expr(b, g.transpose() * a.value());
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  Tape& t = *x.tape();
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), any_grad({x, w, b}), [&t, x, w, b](const Matrix& g) {
    if (t.needs_grad(x)) t.accumulate_expr(x, g * w.value().transpose());
    if (t.needs_grad(w)) t.accumulate_expr(w, x.value().transpose() * g);
    if (t.needs_grad(b)) t.accumulate_expr(b, g.colwise().sum());
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  return t.record(a.value() + b.value(), any_grad({a, b}), [&t, a, b](const Matrix& g) {
    t.accumulate_expr(a, g);
    t.accumulate_expr(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  return t.record(a.value() - b.value(), any_grad({a, b}), [&t, a, b](const Matrix& g) {
    t.accumulate_expr(a, g);
    t.accumulate_expr(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), any_grad({a, b}), [&t, a, b](const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate_expr(a, g.cwiseProduct(b.value()));
    if (t.needs_grad(b)) t.accumulate_expr(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  return t.record(a.value() * s, any_grad({a}), [&t, a, s](const Matrix& g) { t.accumulate_expr(a, g * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  Tape& t = *a.tape();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), any_grad({a, row}), [&t, a, row](const Matrix& g) {
    t.accumulate_expr(a, g);
    if (t.needs_grad(row)) t.accumulate_expr(row, g.colwise().sum());
  });
}

Var scale_rows(const Var& a, const RowVector& factors) {
  if (factors.size() != a.rows()) throw std::invalid_argument("scale_rows: factor count mismatch");
  Tape& t = *a.tape();
  Matrix out = factors.transpose().asDiagonal() * a.value();
  return t.record(std::move(out), any_grad({a}), [&t, a, factors](const Matrix& g) {
    t.accumulate_expr(a, factors.transpose().asDiagonal() * g);
  });
}

Var relu(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), any_grad({a}), [&t, a](const Matrix& g) {
    t.accumulate_expr(a, g.cwiseProduct((a.value().array() > 0.0).cast<double>().matrix()));
  });
}

Var silu(const Var& a) {
  Tape& t = *a.tape();
  Matrix sig = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Matrix out = a.value().cwiseProduct(sig);
  return t.record(std::move(out), any_grad({a}), [&t, a, sig](const Matrix& g) {
    // d/dx x*s(x) = s + x*s*(1-s)
    Matrix d = (sig.array() * (1.0 + a.value().array() * (1.0 - sig.array()))).matrix();
    t.accumulate_expr(a, g.cwiseProduct(d));
  });
}

Var tanh(const Var& a) {
  Tape& t = *a.tape();
  Matrix out = a.value().array().tanh().matrix();
  return t.record(out, any_grad({a}), [&t, a, out](const Matrix& g) {
    t.accumulate_expr(a, g.cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& t = *parts[0].tape();
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    ng = ng || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), ng, [&t, inputs](const Matrix& g) {
    Eigen::Index c0 = 0;
    for (const auto& p : inputs) {
      t.accumulate_expr(p, g.middleCols(c0, p.cols()));
      c0 += p.cols();
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Tape& t = *a.tape();
  Matrix out = a.value().middleCols(start, count);
  return t.record(std::move(out), any_grad({a}), [&t, a, start, count](const Matrix& g) {
    t.grad_ref(a).middleCols(start, count) += g;
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = *parts[0].tape();
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    ng = ng || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), ng, [&t, inputs](const Matrix& g) {
    Eigen::Index r0 = 0;
    for (const auto& p : inputs) {
      t.accumulate_expr(p, g.middleRows(r0, p.rows()));
      r0 += p.rows();
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::invalid_argument("slice_rows: out of range");
  Tape& t = *a.tape();
  Matrix out = a.value().middleRows(start, count);
  return t.record(std::move(out), any_grad({a}), [&t, a, start, count](const Matrix& g) {
    t.grad_ref(a).middleRows(start, count) += g;
  });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  Tape& t = *a.tape();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const int src = index[i];
    if (src < -1 || src >= a.rows()) throw std::out_of_range("gather_rows: index out of range");
    if (src >= 0) out.row(static_cast<Eigen::Index>(i)) = a.value().row(src);
  }
  std::vector<int> idx(index.begin(), index.end());
  return t.record(std::move(out), any_grad({a}), [&t, a, idx = std::move(idx)](const Matrix& g) {
    Matrix& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= 0) ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

namespace {

Matrix softmax_rows_value(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace

Var softmax_rows(const Var& logits) {
  if (!logits.value().allFinite()) throw std::domain_error("softmax_rows: non-finite input");
  Tape& t = *logits.tape();
  Matrix p = softmax_rows_value(logits.value());
  return t.record(p, any_grad({logits}), [&t, logits, p](const Matrix& g) {
    const Eigen::VectorXd dots = g.cwiseProduct(p).rowwise().sum();
    Matrix d = p.cwiseProduct(g.colwise() - dots);
    t.accumulate_expr(logits, d);
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  Tape& t = *logits.tape();
  Matrix p = softmax_rows_value(logits.value());
  const auto n = static_cast<double>(labels.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= logits.cols()) throw std::out_of_range("softmax_cross_entropy: label");
    loss -= std::log(p(static_cast<Eigen::Index>(i), labels[i]));
  }
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record(std::move(out), any_grad({logits}), [&t, logits, p, lab = std::move(lab), n](const Matrix& g) {
    Matrix d = p;
    for (std::size_t i = 0; i < lab.size(); ++i) d(static_cast<Eigen::Index>(i), lab[i]) -= 1.0;
    t.accumulate_expr(logits, d * (g(0, 0) / n));
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw std::invalid_argument("layer_norm: shape mismatch");
  }
  Tape& t = *x.tape();
  const Eigen::VectorXd mean = x.value().rowwise().mean();
  Matrix xhat = x.value().colwise() - mean;
  const Eigen::VectorXd inv_std =
      ((xhat.array().square().rowwise().sum() / static_cast<double>(n)) + eps).rsqrt().matrix();
  xhat = inv_std.asDiagonal() * xhat;
  Matrix out = xhat * gamma.value().row(0).asDiagonal();
  out.rowwise() += beta.value().row(0);
  return t.record(std::move(out), any_grad({x, gamma, beta}), [&t, x, gamma, beta, xhat, inv_std, n](const Matrix& g) {
    if (t.needs_grad(gamma)) t.accumulate_expr(gamma, g.cwiseProduct(xhat).colwise().sum());
    if (t.needs_grad(beta)) t.accumulate_expr(beta, g.colwise().sum());
    if (t.needs_grad(x)) {
      Matrix dxhat = g * gamma.value().row(0).asDiagonal();
      const Eigen::VectorXd m1 = dxhat.rowwise().mean();
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = dxhat.colwise() - m1;
      dx -= m2.asDiagonal() * xhat;
      t.accumulate_expr(x, inv_std.asDiagonal() * dx);
    }
  });
}

Var conv1d(const Var& x, const Var& w, const Var& b, Eigen::Index seq_len, int kernel) {
  const Eigen::Index in = x.cols();
  const Eigen::Index rows = x.rows();
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("conv1d: kernel must be odd");
  if (seq_len < 1 || rows % seq_len != 0) throw std::invalid_argument("conv1d: rows not a multiple of seq_len");
  if (w.rows() != kernel * in || b.rows() != 1 || b.cols() != w.cols()) {
    throw std::invalid_argument("conv1d: weight shape mismatch");
  }
  Tape& t = *x.tape();
  const int half = kernel / 2;
  Matrix cols = Matrix::Zero(rows, kernel * in);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index pos = r % seq_len;
    for (int k = 0; k < kernel; ++k) {
      const Eigen::Index src = pos + k - half;
      if (src < 0 || src >= seq_len) continue;
      cols.block(r, k * in, 1, in) = x.value().row(r + k - half);
    }
  }
  Matrix out = cols * w.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), any_grad({x, w, b}),
                  [&t, x, w, b, cols, seq_len, kernel, half, in, rows](const Matrix& g) {
                    if (t.needs_grad(w)) t.accumulate_expr(w, cols.transpose() * g);
                    if (t.needs_grad(b)) t.accumulate_expr(b, g.colwise().sum());
                    if (t.needs_grad(x)) {
                      const Matrix dcols = g * w.value().transpose();
                      Matrix& gx = t.grad_ref(x);
                      for (Eigen::Index r = 0; r < rows; ++r) {
                        const Eigen::Index pos = r % seq_len;
                        for (int k = 0; k < kernel; ++k) {
                          const Eigen::Index src = pos + k - half;
                          if (src < 0 || src >= seq_len) continue;
                          gx.row(r + k - half) += dcols.block(r, k * in, 1, in);
                        }
                      }
                    }
                  });
}

Var avg_pool2(const Var& x, Eigen::Index seq_len) {
  if (seq_len % 2 != 0 || x.rows() % seq_len != 0) throw std::invalid_argument("avg_pool2: bad sequence length");
  Tape& t = *x.tape();
  const Eigen::Index out_rows = x.rows() / 2;
  Matrix out(out_rows, x.cols());
  for (Eigen::Index r = 0; r < out_rows; ++r) out.row(r) = 0.5 * (x.value().row(2 * r) + x.value().row(2 * r + 1));
  return t.record(std::move(out), any_grad({x}), [&t, x, out_rows](const Matrix& g) {
    Matrix& gx = t.grad_ref(x);
    for (Eigen::Index r = 0; r < out_rows; ++r) {
      gx.row(2 * r) += 0.5 * g.row(r);
      gx.row(2 * r + 1) += 0.5 * g.row(r);
    }
  });
}

Var upsample2(const Var& x) {
  Tape& t = *x.tape();
  Matrix out(x.rows() * 2, x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    out.row(2 * r) = x.value().row(r);
    out.row(2 * r + 1) = x.value().row(r);
  }
  return t.record(std::move(out), any_grad({x}), [&t, x](const Matrix& g) {
    Matrix& gx = t.grad_ref(x);
    for (Eigen::Index r = 0; r < x.rows(); ++r) gx.row(r) += g.row(2 * r) + g.row(2 * r + 1);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, Eigen::Index q_len, Eigen::Index kv_len,
              Matrix* weights_out) {
  if (heads < 1 || q.cols() % heads != 0 || v.cols() % heads != 0) {
    throw std::invalid_argument("attention: columns not divisible by head count");
  }
  if (q.cols() != k.cols()) throw std::invalid_argument("attention: query/key width mismatch");
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: key/value row mismatch");
  if (q_len < 1 || kv_len < 1 || q.rows() % q_len != 0) throw std::invalid_argument("attention: bad group length");
  const Eigen::Index groups = q.rows() / q_len;
  const bool shared_kv = k.rows() == kv_len;
  if (!shared_kv && k.rows() != groups * kv_len) throw std::invalid_argument("attention: key rows mismatch");

  Tape& t = *q.tape();
  const Eigen::Index dk = q.cols() / heads;
  const Eigen::Index dv = v.cols() / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dk));
  const bool ng = any_grad({q, k, v});

  auto probs = std::make_shared<std::vector<Matrix>>();
  if (ng) probs->reserve(static_cast<std::size_t>(groups * heads));
  if (weights_out != nullptr) *weights_out = Matrix::Zero(q.rows(), kv_len);

  Matrix out(q.rows(), v.cols());
  for (Eigen::Index g = 0; g < groups; ++g) {
    const Eigen::Index kr = shared_kv ? 0 : g * kv_len;
    for (int h = 0; h < heads; ++h) {
      const auto qh = q.value().block(g * q_len, h * dk, q_len, dk);
      const auto kh = k.value().block(kr, h * dk, kv_len, dk);
      const auto vh = v.value().block(kr, h * dv, kv_len, dv);
      Matrix p = softmax_rows_value((qh * kh.transpose()) * sc);
      out.block(g * q_len, h * dv, q_len, dv).noalias() = p * vh;
      if (weights_out != nullptr) weights_out->middleRows(g * q_len, q_len) += p / static_cast<double>(heads);
      if (ng) probs->push_back(std::move(p));
    }
  }

  return t.record(std::move(out), ng, [&t, q, k, v, heads, q_len, kv_len, groups, shared_kv, dk, dv, sc, probs](
                                          const Matrix& g) {
    const bool gq = t.needs_grad(q), gk = t.needs_grad(k), gv = t.needs_grad(v);
    Matrix* dq = gq ? &t.grad_ref(q) : nullptr;
    Matrix* dkm = gk ? &t.grad_ref(k) : nullptr;
    Matrix* dvm = gv ? &t.grad_ref(v) : nullptr;
    for (Eigen::Index gi = 0; gi < groups; ++gi) {
      const Eigen::Index kr = shared_kv ? 0 : gi * kv_len;
      for (int h = 0; h < heads; ++h) {
        const Matrix& p = (*probs)[static_cast<std::size_t>(gi * heads + h)];
        const auto go = g.block(gi * q_len, h * dv, q_len, dv);
        const auto qh = q.value().block(gi * q_len, h * dk, q_len, dk);
        const auto kh = k.value().block(kr, h * dk, kv_len, dk);
        const auto vh = v.value().block(kr, h * dv, kv_len, dv);
        if (gv) dvm->block(kr, h * dv, kv_len, dv).noalias() += p.transpose() * go;
        if (!gq && !gk) continue;
        const Matrix dp = go * vh.transpose();
        const Eigen::VectorXd dots = dp.cwiseProduct(p).rowwise().sum();
        const Matrix ds = p.cwiseProduct(dp.colwise() - dots) * sc;
        if (gq) dq->block(gi * q_len, h * dk, q_len, dk).noalias() += ds * kh;
        if (gk) dkm->block(kr, h * dk, kv_len, dk).noalias() += ds.transpose() * qh;
      }
    }
  });
}

Var sum_all(const Var& a) {
  Tape& t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), any_grad({a}), [&t, a](const Matrix& g) {
    t.accumulate_expr(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean_all(const Var& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  Tape& t = *a.tape();
  const Matrix diff = a.value() - b.value();
  const double n = static_cast<double>(diff.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return t.record(std::move(out), any_grad({a, b}), [&t, a, b, diff, n](const Matrix& g) {
    const double s = 2.0 * g(0, 0) / n;
    t.accumulate_expr(a, diff * s);
    t.accumulate_expr(b, diff * (-s));
  });
}

}  // namespace ops
}  // namespace stylebook
