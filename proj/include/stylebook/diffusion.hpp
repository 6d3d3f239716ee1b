#pragma once

// Score-based mel decoder.
//
// Forward process (mean-reverting, variance preserving, linear beta):
//   x_t = mu + (x0 - mu) * exp(-B(t)/2) + sqrt(1 - exp(-B(t))) * eps,
//   B(t) = beta_0 t + (beta_1 - beta_0) t^2 / 2.
// The network predicts eps; the score is -eps_hat / sqrt(1 - exp(-B(t))).

#include "stylebook/layers.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace stylebook {

struct DiffusionSchedule {
  double beta_0 = 0.05;
  double beta_1 = 20.0;
  int steps = 30;
  double guidance_scale_content = 1.0;
  double guidance_scale_style = 0.5;
  double uncond_drop_prob = 0.1;

  void validate() const;
  double beta(double t) const { return beta_0 + (beta_1 - beta_0) * t; }
  double beta_integral(double t) const { return beta_0 * t + 0.5 * (beta_1 - beta_0) * t * t; }
  /// Mean decay factor exp(-B(t)/2).
  double decay(double t) const;
  /// Marginal noise variance 1 - exp(-B(t)).
  double variance(double t) const;
};

Matrix forward_perturb(const Matrix& x0, const Matrix& mu, double t, const Matrix& noise,
                       const DiffusionSchedule& schedule);

struct ScoreNetworkConfig {
  int mel_dim = 64;
  int content_dim = 256;
  int style_dim = 64;
  int base_dim = 128;
  int time_dim = 64;
  /// Assumed per-dimension spread of (x0 - mu) for the linear skip term of
  /// predict_noise(); 0 disables the skip.
  double data_std = 0.2;
};

/// Residual block: conv -> FiLM(cond) -> conv, with a 1x1 skip when widths differ.
class FilmResBlock : public Module {
 public:
  FilmResBlock() = default;
  FilmResBlock(const std::string& name, Eigen::Index in, Eigen::Index out, Eigen::Index cond_dim, Rng& rng);
  Var forward(Tape& tape, const Var& x, const Var& cond, Eigen::Index seq_len) const;
  void collect(ParameterList& out) override;

  Conv1d conv1, conv2;
  Linear film;
  Linear skip;
  bool has_skip = false;
};

/// 1-D U-Net over time with three resolution levels. Every frame is
/// conditioned on (content embedding, style embedding, diffusion time)
/// through FiLM; x_t and mu enter as input channels.
class ScoreNetwork : public Module {
 public:
  ScoreNetwork() = default;
  ScoreNetwork(const ScoreNetworkConfig& config, Rng& rng);

  /// All frame inputs hold B blocks of seq_len rows; `times` has B entries.
  /// Returns the noise prediction, same shape as x_t.
  Var forward(Tape& tape, const Var& x_t, const Var& mu, const Var& content, const Var& style,
              const std::vector<double>& times, Eigen::Index seq_len) const;
  void collect(ParameterList& out) override;

  const ScoreNetworkConfig& config() const { return config_; }

 private:
  ScoreNetworkConfig config_;
  Mlp time_mlp_;
  Linear cond_in_, cond_out_;
  Conv1d input_conv_;
  FilmResBlock down1_, down2_, mid_, up2_, up1_;
  Linear output_;
};

/// Noise prediction: c(t) (x_t - mu) + net(...), where
/// c(t) = sigma / (sigma^2 + a^2 data_std^2) is the optimal linear estimate
/// of the noise when x0 - mu ~ N(0, data_std^2 I). The network only has to
/// learn the residual.
Var predict_noise(Tape& tape, const ScoreNetwork& net, const DiffusionSchedule& schedule, const Var& x_t, const Var& mu,
                  const Var& content, const Var& style, const std::vector<double>& times, Eigen::Index seq_len);

/// Anything that returns a score estimate for one sequence.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Matrix score(const Matrix& x_t, const Matrix& mu, const Matrix& content, const Matrix& style,
                       double t) const = 0;
};

/// Adapts a ScoreNetwork (noise prediction) to a score.
class NetworkScore : public ScoreModel {
 public:
  NetworkScore(const ScoreNetwork& net, const DiffusionSchedule& schedule) : net_(net), schedule_(schedule) {}
  Matrix score(const Matrix& x_t, const Matrix& mu, const Matrix& content, const Matrix& style,
               double t) const override;

 private:
  const ScoreNetwork& net_;
  DiffusionSchedule schedule_;
};

/// s_c + gamma_style * (s_c - s_u), where s_u replaces every style row with
/// `uncond_style` (1 x d_s). The content scale multiplies nothing: there is no
/// content-free branch, so a content scale of 1.0 is the identity.
Matrix cfg_score(const ScoreModel& model, const Matrix& x_t, double t, const Matrix& mu, const Matrix& content,
                 const Matrix& style, const RowVector& uncond_style, const DiffusionSchedule& schedule);

/// Reverse-time Euler-Maruyama from t = 1 to 0 in `schedule.steps` uniform
/// steps, starting at mu + N(0, I). The drift is evaluated at the start of
/// each step and the final step adds no noise.
Matrix sample(const ScoreModel& model, const Matrix& mu, const Matrix& content, const Matrix& style,
              const RowVector& uncond_style, const DiffusionSchedule& schedule, std::uint64_t seed);

}  // namespace stylebook
