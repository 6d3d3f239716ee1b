#include "stylebook/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace stylebook {

void DiffusionSchedule::validate() const {
  if (!(beta_0 > 0.0 && beta_0 < beta_1)) throw std::invalid_argument("schedule: need 0 < beta_0 < beta_1");
  if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
  if (!(uncond_drop_prob >= 0.0 && uncond_drop_prob <= 1.0)) {
    throw std::invalid_argument("schedule: uncond_drop_prob must be in [0, 1]");
  }
}

double DiffusionSchedule::decay(double t) const { return std::exp(-0.5 * beta_integral(t)); }

double DiffusionSchedule::variance(double t) const { return -std::expm1(-beta_integral(t)); }

Matrix forward_perturb(const Matrix& x0, const Matrix& mu, double t, const Matrix& noise,
                       const DiffusionSchedule& schedule) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("forward_perturb: t must be in (0, 1]");
  if (x0.rows() != mu.rows() || x0.cols() != mu.cols() || noise.rows() != x0.rows() || noise.cols() != x0.cols()) {
    throw std::invalid_argument("forward_perturb: shape mismatch");
  }
  return mu + (x0 - mu) * schedule.decay(t) + noise * std::sqrt(schedule.variance(t));
}

FilmResBlock::FilmResBlock(const std::string& name, Eigen::Index in, Eigen::Index out, Eigen::Index cond_dim, Rng& rng)
    : conv1(name + ".conv1", in, out, 3, rng),
      conv2(name + ".conv2", out, out, 3, rng),
      film(name + ".film", cond_dim, 2 * out, rng),
      has_skip(in != out) {
  if (has_skip) skip = Linear(name + ".skip", in, out, rng);
  // Start FiLM near the identity modulation.
  film.weight.value *= 0.1;
}

Var FilmResBlock::forward(Tape& tape, const Var& x, const Var& cond, Eigen::Index seq_len) const {
  const Eigen::Index width = conv1.weight.value.cols();
  Var h = conv1.forward(tape, ops::silu(x), seq_len);
  const Var mod = film.forward(tape, cond);
  const Var gamma = ops::slice_cols(mod, 0, width);
  const Var beta = ops::slice_cols(mod, width, width);
  h = ops::add(ops::add(h, ops::mul(h, gamma)), beta);
  h = conv2.forward(tape, ops::silu(h), seq_len);
  const Var base = has_skip ? skip.forward(tape, x) : x;
  return ops::add(base, h);
}

void FilmResBlock::collect(ParameterList& out) {
  conv1.collect(out);
  conv2.collect(out);
  film.collect(out);
  if (has_skip) skip.collect(out);
}

ScoreNetwork::ScoreNetwork(const ScoreNetworkConfig& c, Rng& rng)
    : config_(c),
      time_mlp_("score.time_mlp", {c.time_dim, c.base_dim, c.base_dim}, rng),
      cond_in_("score.cond_in", c.content_dim + c.style_dim + c.base_dim, c.base_dim, rng),
      cond_out_("score.cond_out", c.base_dim, c.base_dim, rng),
      input_conv_("score.input", 2 * c.mel_dim, c.base_dim, 3, rng),
      down1_("score.down1", c.base_dim, c.base_dim, c.base_dim, rng),
      down2_("score.down2", c.base_dim, c.base_dim, c.base_dim, rng),
      mid_("score.mid", c.base_dim, c.base_dim, c.base_dim, rng),
      up2_("score.up2", 2 * c.base_dim, c.base_dim, c.base_dim, rng),
      up1_("score.up1", 2 * c.base_dim, c.base_dim, c.base_dim, rng),
      output_("score.output", c.base_dim, c.mel_dim, rng) {
  output_.weight.value *= 0.1;
}

Var ScoreNetwork::forward(Tape& tape, const Var& x_t, const Var& mu, const Var& content, const Var& style,
                          const std::vector<double>& times, Eigen::Index seq_len) const {
  const Eigen::Index rows = x_t.rows();
  if (seq_len < 1 || rows % seq_len != 0) throw std::invalid_argument("score network: bad sequence length");
  const Eigen::Index batch = rows / seq_len;
  if (static_cast<Eigen::Index>(times.size()) != batch) throw std::invalid_argument("score network: one time per sequence");
  if (mu.rows() != rows || content.rows() != rows || style.rows() != rows) {
    throw std::invalid_argument("score network: inputs are not aligned");
  }

  // Pad every sequence to a multiple of 4 so two 2x poolings line up.
  const Eigen::Index padded = (seq_len + 3) / 4 * 4;
  std::vector<int> pad_index, crop_index;
  const bool pad = padded != seq_len;
  if (pad) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index p = 0; p < padded; ++p) pad_index.push_back(p < seq_len ? static_cast<int>(b * seq_len + p) : -1);
      for (Eigen::Index p = 0; p < seq_len; ++p) crop_index.push_back(static_cast<int>(b * padded + p));
    }
  }
  auto padv = [&](const Var& v) { return pad ? ops::gather_rows(v, pad_index) : v; };

  // Per-frame conditioning.
  const Matrix temb_seq = sinusoidal_times(times, config_.time_dim);
  std::vector<int> frame_to_seq;
  frame_to_seq.reserve(static_cast<std::size_t>(batch * padded));
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index p = 0; p < padded; ++p) frame_to_seq.push_back(static_cast<int>(b));
  }
  const Var temb = ops::gather_rows(time_mlp_.forward(tape, tape.constant(temb_seq)), frame_to_seq);
  const Var cond_parts[] = {padv(content), padv(style), temb};
  const Var cond0 = cond_out_.forward(tape, ops::silu(cond_in_.forward(tape, ops::concat_cols(cond_parts))));
  const Var cond1 = ops::avg_pool2(cond0, padded);
  const Var cond2 = ops::avg_pool2(cond1, padded / 2);

  const Var in_parts[] = {padv(x_t), padv(mu)};
  const Var h0 = input_conv_.forward(tape, ops::concat_cols(in_parts), padded);
  const Var r1 = down1_.forward(tape, h0, cond0, padded);
  const Var r2 = down2_.forward(tape, ops::avg_pool2(r1, padded), cond1, padded / 2);
  const Var m = mid_.forward(tape, ops::avg_pool2(r2, padded / 2), cond2, padded / 4);
  const Var u2_parts[] = {ops::upsample2(m), r2};
  const Var u2 = up2_.forward(tape, ops::concat_cols(u2_parts), cond1, padded / 2);
  const Var u1_parts[] = {ops::upsample2(u2), r1};
  const Var u1 = up1_.forward(tape, ops::concat_cols(u1_parts), cond0, padded);
  const Var out = output_.forward(tape, ops::silu(u1));
  return pad ? ops::gather_rows(out, crop_index) : out;
}

void ScoreNetwork::collect(ParameterList& out) {
  time_mlp_.collect(out);
  cond_in_.collect(out);
  cond_out_.collect(out);
  input_conv_.collect(out);
  down1_.collect(out);
  down2_.collect(out);
  mid_.collect(out);
  up2_.collect(out);
  up1_.collect(out);
  output_.collect(out);
}

Var predict_noise(Tape& tape, const ScoreNetwork& net, const DiffusionSchedule& schedule, const Var& x_t, const Var& mu,
                  const Var& content, const Var& style, const std::vector<double>& times, Eigen::Index seq_len) {
  const Var residual = net.forward(tape, x_t, mu, content, style, times, seq_len);
  const double d2 = net.config().data_std * net.config().data_std;
  if (d2 == 0.0) return residual;
  RowVector factors(x_t.rows());
  for (std::size_t b = 0; b < times.size(); ++b) {
    const double a = schedule.decay(times[b]);
    const double var = schedule.variance(times[b]);
    factors.segment(static_cast<Eigen::Index>(b) * seq_len, seq_len)
        .setConstant(std::sqrt(var) / (var + a * a * d2));
  }
  return ops::add(ops::scale_rows(ops::sub(x_t, mu), factors), residual);
}

Matrix NetworkScore::score(const Matrix& x_t, const Matrix& mu, const Matrix& content, const Matrix& style,
                           double t) const {
  Tape tape;
  const Var eps = predict_noise(tape, net_, schedule_, tape.constant(x_t), tape.constant(mu), tape.constant(content),
                                tape.constant(style), {t}, x_t.rows());
  return eps.value() * (-1.0 / std::sqrt(schedule_.variance(t)));
}

Matrix cfg_score(const ScoreModel& model, const Matrix& x_t, double t, const Matrix& mu, const Matrix& content,
                 const Matrix& style, const RowVector& uncond_style, const DiffusionSchedule& schedule) {
  if (x_t.rows() != mu.rows() || x_t.cols() != mu.cols() || content.rows() != x_t.rows() ||
      style.rows() != x_t.rows()) {
    throw std::invalid_argument("cfg_score: shape mismatch");
  }
  if (uncond_style.size() != style.cols()) throw std::invalid_argument("cfg_score: unconditional style width");
  const Matrix conditional = model.score(x_t, mu, content, style, t) * schedule.guidance_scale_content;
  const double gamma = schedule.guidance_scale_style;
  if (gamma == 0.0) return conditional;
  Matrix uncond_rows = uncond_style.replicate(style.rows(), 1);
  const Matrix unconditional = model.score(x_t, mu, content, uncond_rows, t) * schedule.guidance_scale_content;
  return conditional + gamma * (conditional - unconditional);
}

Matrix sample(const ScoreModel& model, const Matrix& mu, const Matrix& content, const Matrix& style,
              const RowVector& uncond_style, const DiffusionSchedule& schedule, std::uint64_t seed) {
  schedule.validate();
  if (content.rows() != mu.rows() || style.rows() != mu.rows()) {
    throw std::invalid_argument("sample: content and style are not aligned with the prior");
  }
  Rng rng(seed);
  const double h = 1.0 / static_cast<double>(schedule.steps);
  Matrix x = mu + rng.normal_matrix(mu.rows(), mu.cols());
  for (int i = 0; i < schedule.steps; ++i) {
    const double t = 1.0 - static_cast<double>(i) * h;
    const double b = schedule.beta(t);
    const Matrix s = cfg_score(model, x, t, mu, content, style, uncond_style, schedule);
    // Reverse SDE: dx = [0.5 b (mu - x) - b s] dt + sqrt(b) dW, integrated backwards.
    x += h * (0.5 * b * (x - mu) + b * s);
    if (i + 1 < schedule.steps) x += std::sqrt(b * h) * rng.normal_matrix(mu.rows(), mu.cols());
  }
  return x;
}

}  // namespace stylebook
