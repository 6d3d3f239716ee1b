#include "stylebook/diffusion.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace stylebook;
using namespace stylebook::oracles;
using stylebook::testing::max_abs_diff;

TEST_CASE("schedule closed forms") {
  DiffusionSchedule s;
  CHECK(s.decay(1e-9) == doctest::Approx(1.0));
  CHECK(s.variance(1e-9) < 1e-9);
  s.beta_0 = s.beta_1 = 3.0;
  for (double t : {0.1, 0.4, 1.0}) CHECK(s.decay(t) == doctest::Approx(std::exp(-3.0 * t / 2.0)).epsilon(1e-14));
  DiffusionSchedule bad;
  bad.beta_0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = DiffusionSchedule{};
  bad.beta_1 = bad.beta_0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = DiffusionSchedule{};
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = DiffusionSchedule{};
  bad.uncond_drop_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("forward_perturb: limits, errors, Monte Carlo marginals") {
  const DiffusionSchedule s;
  Rng rng(21);
  const Matrix x0 = rng.normal_matrix(3, 4), mu = rng.normal_matrix(3, 4), noise = rng.normal_matrix(3, 4);
  CHECK(max_abs_diff(forward_perturb(x0, mu, 1e-10, noise, s), x0) < 1e-4);
  CHECK_THROWS_AS(forward_perturb(x0, mu, 0.0, noise, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_perturb(x0, mu, 1.1, noise, s), std::invalid_argument);
  CHECK_THROWS_AS(forward_perturb(x0, mu.leftCols(3), 0.5, noise, s), std::invalid_argument);

  const Eigen::Index n = 10000;
  for (double t : {0.1, 0.5, 0.9}) {
    // x0 = mu: the mean stays at mu and the variance is 1 - exp(-B(t)).
    const Matrix m0 = Matrix::Constant(n, 1, 0.7);
    const Matrix xt = forward_perturb(m0, m0, t, rng.normal_matrix(n, 1), s);
    const Moments mm = moments(xt);
    CHECK(std::abs(mm.mean(0) - 0.7) / 0.7 < 0.03);
    CHECK(std::abs(mm.cov(0, 0) - s.variance(t)) / s.variance(t) < 0.03);
    // Random x0 ~ N(2, 0.25): mean mu + (2 - mu) a, variance a^2 0.25 + var.
    // The mean can pass through zero, so its error is measured in marginal
    // standard deviations.
    Matrix data = (rng.normal_matrix(n, 1) * 0.5).array() + 2.0;
    const Matrix prior = Matrix::Constant(n, 1, -1.0);
    const Moments md = moments(forward_perturb(data, prior, t, rng.normal_matrix(n, 1), s));
    const double a = s.decay(t);
    const double mean = -1.0 + 3.0 * a, var = a * a * 0.25 + s.variance(t);
    CHECK(std::abs(md.mean(0) - mean) / std::sqrt(var) < 0.03);
    CHECK(std::abs(md.cov(0, 0) - var) / var < 0.03);
  }
}

TEST_CASE("cfg_score identities") {
  DiffusionSchedule s;
  Rng rng(2);
  const Matrix x = rng.normal_matrix(5, 3), mu = rng.normal_matrix(5, 3), content = rng.normal_matrix(5, 4);
  Matrix style = rng.normal_matrix(5, 2);
  const RowVector uncond = RowVector::Constant(2, -9.0);

  const ScriptedScore scripted(3.0, 1.0, -9.0);
  s.guidance_scale_style = 0.5;
  CHECK(max_abs_diff(cfg_score(scripted, x, 0.5, mu, content, style, uncond, s), Matrix::Constant(5, 3, 4.0)) == 0.0);
  s.guidance_scale_style = 0.0;
  CHECK(max_abs_diff(cfg_score(scripted, x, 0.5, mu, content, style, uncond, s), Matrix::Constant(5, 3, 3.0)) == 0.0);

  // Equal conditions: the guidance term vanishes for any scale.
  const Matrix same = uncond.replicate(5, 1);
  for (double g : {0.5, 2.0, 7.0}) {
    s.guidance_scale_style = g;
    CHECK(max_abs_diff(cfg_score(scripted, x, 0.5, mu, content, same, uncond, s), Matrix::Constant(5, 3, 1.0)) == 0.0);
  }

  Rng net_rng(3);
  ScoreNetwork net({3, 4, 2, 8, 8}, net_rng);
  const NetworkScore ns(net, s);
  s.guidance_scale_style = 0.0;
  CHECK(testing::bit_equal(cfg_score(ns, x, 0.3, mu, content, style, uncond, s), ns.score(x, mu, content, style, 0.3)));
  s.guidance_scale_style = 1.7;
  CHECK(testing::bit_equal(cfg_score(ns, x, 0.3, mu, content, same, uncond, s), ns.score(x, mu, content, same, 0.3)));
  CHECK_THROWS_AS(cfg_score(ns, x, 0.3, mu, content, style.topRows(4), uncond, s), std::invalid_argument);
}

TEST_CASE("sample recovers a Gaussian with the analytic score") {
  DiffusionSchedule s;
  s.guidance_scale_style = 0.0;
  RowVector m(2);
  m << 1.0, -0.5;
  Matrix S(2, 2);
  S << 0.8, 0.3, 0.3, 0.6;
  RowVector prior(2);
  prior << 0.8, -0.3;
  const GaussianScore score(m, S, s);
  const Eigen::Index runs = 10000;
  const Matrix mu = prior.replicate(runs, 1);
  const Matrix none = Matrix::Zero(runs, 1);

  s.steps = 30;
  const Moments m30 = moments(sample(score, mu, none, none, RowVector::Zero(1), s, 17));
  const double mean_err = (m30.mean - m).norm() / m.norm();
  const double cov_err = (m30.cov - S).norm() / S.norm();
  INFO("mean rel err " << mean_err << " cov rel err " << cov_err);
  CHECK(mean_err < 0.05);
  CHECK(cov_err < 0.05);

  s.steps = 300;
  const Moments m300 = moments(sample(score, mu, none, none, RowVector::Zero(1), s, 17));
  CHECK((m300.mean - m30.mean).norm() / m30.mean.norm() < 0.02);
  CHECK((m300.cov - S).norm() / S.norm() < 0.05);
}

TEST_CASE("sample: determinism, shapes, errors") {
  DiffusionSchedule s;
  s.steps = 4;
  Rng rng(4);
  ScoreNetwork net({3, 4, 2, 8, 8}, rng);
  const NetworkScore ns(net, s);
  const RowVector uncond = rng.normal_matrix(1, 2).row(0);
  for (Eigen::Index T : {1, 40, 300}) {
    const Matrix mu = rng.normal_matrix(T, 3), c = rng.normal_matrix(T, 4), st = rng.normal_matrix(T, 2);
    const Matrix a = sample(ns, mu, c, st, uncond, s, 9);
    CHECK(a.rows() == T);
    CHECK(a.cols() == 3);
    CHECK(a.allFinite());
    CHECK(testing::bit_equal(a, sample(ns, mu, c, st, uncond, s, 9)));
    CHECK_FALSE(testing::bit_equal(a, sample(ns, mu, c, st, uncond, s, 10)));
  }
  s.steps = 0;
  CHECK_THROWS_AS(sample(ns, Matrix::Zero(2, 3), Matrix::Zero(2, 4), Matrix::Zero(2, 2), uncond, s, 1),
                  std::invalid_argument);
}

TEST_CASE("score network output matches the noisy input shape for any length") {
  Rng rng(5);
  ScoreNetwork net({3, 4, 2, 8, 8}, rng);
  for (Eigen::Index L : {1, 2, 5, 8, 13}) {
    Tape tape;
    const Var out = net.forward(tape, tape.constant(rng.normal_matrix(2 * L, 3)), tape.constant(rng.normal_matrix(2 * L, 3)),
                                tape.constant(rng.normal_matrix(2 * L, 4)), tape.constant(rng.normal_matrix(2 * L, 2)),
                                {0.2, 0.9}, L);
    CHECK(out.rows() == 2 * L);
    CHECK(out.cols() == 3);
  }
}
