#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "crossdiff/diffusion.hpp"
#include "crossdiff/errors.hpp"
#include "crossdiff/sampler.hpp"
#include "test_util.hpp"

using namespace crossdiff;
using crossdiff::testing::random_vec;

namespace {

// Independent left fold of the alpha products.
std::vector<long double> folded_alpha_bar(size_t T, long double lo, long double hi) {
  std::vector<long double> out;
  long double acc = 1.0L;
  for (size_t t = 1; t <= T; ++t) {
    const long double b = T == 1 ? lo : lo + (hi - lo) * static_cast<long double>(t - 1) / (T - 1);
    acc *= 1.0L - b;
    out.push_back(acc);
  }
  return out;
}

DenoiserParams random_params(uint64_t seed, size_t dim = 4) {
  DenoiserConfig cfg;
  cfg.feature_dim = dim;
  cfg.temb_dim = 8;
  cfg.temb_out = 6;
  cfg.down_dim = 3;
  cfg.mid_dim = 3;
  CounterRng rng(seed);
  return DenoiserParams::random(cfg, rng);
}

}  // namespace

TEST(Schedule, TwoStepsByHand) {
  const auto s = build_schedule(2, 1e-4, 0.02);
  EXPECT_EQ(s.betas(), (std::vector<double>{1e-4, 0.02}));
  EXPECT_DOUBLE_EQ(s.alpha(1), 0.9999);
  EXPECT_DOUBLE_EQ(s.alpha(2), 0.98);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9999);
  EXPECT_NEAR(s.alpha_bar(2), 0.979902, 1e-15);
}

TEST(Schedule, SingleStep) {
  const auto s = build_schedule(1);
  ASSERT_EQ(s.steps(), 1u);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9999);
  EXPECT_DOUBLE_EQ(s.sigma(1), 0.0);
}

TEST(Schedule, MatchesIndependentFold) {
  for (size_t T : {5, 10, 20, 50}) {
    const auto s = build_schedule(T);
    const auto want = folded_alpha_bar(T, 1e-4L, 0.02L);
    for (size_t t = 1; t <= T; ++t) EXPECT_NEAR(s.alpha_bar(t), static_cast<double>(want[t - 1]), 1e-12);
  }
}

TEST(Schedule, Monotone) {
  const auto s = build_schedule(50);
  for (size_t t = 1; t <= 50; ++t) {
    EXPECT_GT(s.beta(t), 0.0);
    EXPECT_LT(s.beta(t), 1.0);
    EXPECT_DOUBLE_EQ(s.alpha(t), 1.0 - s.beta(t));
    if (t > 1) {
      EXPECT_GE(s.beta(t), s.beta(t - 1));
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      EXPECT_DOUBLE_EQ(s.sigma(t), std::sqrt(s.beta(t)));
    }
  }
}

TEST(Schedule, InvalidBounds) {
  EXPECT_THROW(build_schedule(0), ValidationError);
  EXPECT_THROW(build_schedule(10, 0.0, 0.02), ValidationError);
  EXPECT_THROW(build_schedule(10, 0.03, 0.02), ValidationError);
  EXPECT_THROW(build_schedule(10, 1e-4, 1.0), ValidationError);
}

TEST(QSample, ZeroNoise) {
  const auto s = build_schedule(10);
  const Vec x0 = {1.0, -2.0, 0.5};
  const Vec xt = q_sample(x0, 4, Vec(3, 0.0), s);
  for (size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(xt[i], std::sqrt(s.alpha_bar(4)) * x0[i]);
}

TEST(QSample, ExactFormula) {
  const auto s = build_schedule(10);
  CounterRng rng(2);
  const Vec x0 = random_vec(6, rng), eps = random_vec(6, rng);
  const Vec xt = q_sample(x0, 7, eps, s);
  for (size_t i = 0; i < 6; ++i)
    EXPECT_DOUBLE_EQ(xt[i], std::sqrt(s.alpha_bar(7)) * x0[i] + std::sqrt(1 - s.alpha_bar(7)) * eps[i]);
}

TEST(QSample, FirstStepIsNearlyClean) {
  const auto s = build_schedule(10);
  const Vec x0 = {3.0, -1.0}, eps = {1.0, -2.0};
  const Vec xt = q_sample(x0, 1, eps, s);
  for (size_t i = 0; i < 2; ++i)
    EXPECT_LE(std::abs(xt[i] - x0[i]), std::sqrt(1 - s.alpha_bar(1)) * std::abs(eps[i]) + 1e-4 * std::abs(x0[i]));
}

TEST(QSample, StepOutOfRange) {
  const auto s = build_schedule(10);
  EXPECT_THROW(q_sample(Vec{1}, 0, Vec{0}, s), ValidationError);
  EXPECT_THROW(q_sample(Vec{1}, 11, Vec{0}, s), ValidationError);
  EXPECT_THROW(q_sample(Vec{1, 2}, 3, Vec{0}, s), ValidationError);
}

TEST(QSample, IteratedOneStepMatchesMarginal) {
  // x_t = sqrt(alpha_t) x_{t-1} + sqrt(beta_t) eps, iterated, has the closed-form marginal.
  const auto s = build_schedule(10);
  const double x0 = 1.5;
  const size_t n = 40000;
  CounterRng rng = CounterRng(21).stream("chain");
  for (size_t T : {1, 4, 10}) {
    double sum = 0, sumsq = 0;
    for (size_t k = 0; k < n; ++k) {
      double x = x0;
      for (size_t t = 1; t <= T; ++t) x = std::sqrt(s.alpha(t)) * x + std::sqrt(s.beta(t)) * rng.normal();
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / n, var = sumsq / n - mean * mean;
    const double want_var = 1 - s.alpha_bar(T);
    EXPECT_NEAR(mean, std::sqrt(s.alpha_bar(T)) * x0, 3 * std::sqrt(want_var / n));
    EXPECT_NEAR(var, want_var, 3 * want_var * std::sqrt(2.0 / n));
  }
}

TEST(TimestepEmbedding, ZeroStep) {
  EXPECT_EQ(timestep_embedding(0, 4), (Vec{0, 0, 1, 1}));
}

TEST(TimestepEmbedding, StepOneWidthFour) {
  const Vec e = timestep_embedding(1, 4);
  EXPECT_NEAR(e[0], std::sin(1.0), 1e-15);
  EXPECT_NEAR(e[1], std::sin(1e-4), 1e-15);
  EXPECT_NEAR(e[2], std::cos(1.0), 1e-15);
  EXPECT_NEAR(e[3], std::cos(1e-4), 1e-15);
  EXPECT_NEAR(e[0], 0.84147, 1e-5);
  EXPECT_NEAR(e[2], 0.54030, 1e-5);
}

TEST(TimestepEmbedding, WidthTwoUsesUnitFrequency) {
  const Vec e = timestep_embedding(3, 2);
  EXPECT_DOUBLE_EQ(e[0], std::sin(3.0));
  EXPECT_DOUBLE_EQ(e[1], std::cos(3.0));
}

TEST(TimestepEmbedding, FrequenciesGeometric) {
  const size_t d = 32, h = d / 2;
  const double t = 7;
  const Vec e = timestep_embedding(t, d);
  for (size_t i = 0; i < h; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) / (h - 1));
    EXPECT_NEAR(e[i], std::sin(t * w), 1e-12);
    EXPECT_NEAR(e[h + i], std::cos(t * w), 1e-12);
  }
}

TEST(TimestepEmbedding, Range) {
  CounterRng rng(4);
  for (int k = 0; k < 1000; ++k) {
    const size_t d = 2 * (1 + rng.below(32));
    for (double v : timestep_embedding(rng.uniform(0, 1000), d)) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(TimestepEmbedding, OddWidth) {
  EXPECT_THROW(timestep_embedding(1, 5), ValidationError);
  EXPECT_THROW(timestep_embedding(1, 0), ValidationError);
}

TEST(PosteriorMean, CoefficientIdentity) {
  // With x_t = sqrt(abar_t) x0 and x0_hat = x0 the posterior mean is sqrt(abar_{t-1}) x0.
  CounterRng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t T = 2 + rng.below(60);
    const double lo = rng.uniform(1e-5, 1e-2);
    const auto s = build_schedule(T, lo, rng.uniform(lo, 0.5));
    for (size_t t = 2; t <= T; ++t) {
      const double c0 = posterior_mean(Vec{0.0}, Vec{1.0}, t, s)[0];
      const double c1 = posterior_mean(Vec{1.0}, Vec{0.0}, t, s)[0];
      EXPECT_NEAR((c0 + c1 * std::sqrt(s.alpha_bar(t))) / std::sqrt(s.alpha_bar(t - 1)), 1.0, 1e-12);
    }
  }
}

TEST(PosteriorMean, TwoStepHandArithmetic) {
  const auto s = build_schedule(2);
  const Vec xt = {1.0, -2.0}, x0 = {0.5, 3.0};
  const double c0 = std::sqrt(0.9999) * 0.02 / (1 - 0.979902);
  const double c1 = std::sqrt(0.98) * (1 - 0.9999) / (1 - 0.979902);
  const Vec mu = posterior_mean(xt, x0, 2, s);
  EXPECT_NEAR(mu[0], c0 * 0.5 + c1 * 1.0, 1e-12);
  EXPECT_NEAR(mu[1], c0 * 3.0 + c1 * -2.0, 1e-12);
}

// Constant beta -> 0: the coefficients tend to 1/t on x0 and (t-1)/t on x_t.
TEST(PosteriorMean, SmallConstantBetaLimit) {
  const auto s = build_schedule(5, 1e-6, 1e-6);
  const Vec xt = {0.7, -0.3};
  const Vec mu = posterior_mean(xt, Vec{5.0, 5.0}, 3, s);
  EXPECT_NEAR(mu[0], 5.0 / 3 + 0.7 * 2 / 3, 1e-5);
  EXPECT_NEAR(mu[1], 5.0 / 3 - 0.3 * 2 / 3, 1e-5);
}

TEST(PosteriorMean, StepOneRejected) {
  EXPECT_THROW(posterior_mean(Vec{0}, Vec{0}, 1, build_schedule(5)), ValidationError);
}

TEST(PSample, FinalStepReturnsNetworkOutput) {
  const auto p = random_params(1);
  const auto s = build_schedule(10);
  const Vec xt = {0.1, 0.2, -0.3, 0.4}, cond = {1, 0, 0, -1};
  const Vec got = p_sample_step(p, xt, 1, cond, Vec{5, 5, 5, 5}, s);
  EXPECT_EQ(got, denoise_forward(p, xt, 1, cond));
}

TEST(PSample, ZeroNoiseIsDeterministicPosteriorMean) {
  const auto p = random_params(2);
  const auto s = build_schedule(10);
  const Vec xt = {0.1, 0.2, -0.3, 0.4};
  const Vec a = p_sample_step(p, xt, 6, {}, Vec(4, 0.0), s);
  EXPECT_EQ(a, p_sample_step(p, xt, 6, {}, Vec(4, 0.0), s));
  EXPECT_EQ(a, posterior_mean(xt, denoise_forward(p, xt, 6, {}), 6, s));
}

TEST(PSample, Eq6MeanBehindFlag) {
  const auto p = random_params(3);
  const auto s = build_schedule(10);
  const Vec xt = {0.1, 0.2, -0.3, 0.4}, noise = {1, -1, 0.5, 0};
  const Vec got = p_sample_step(p, xt, 6, {}, noise, s, MeanParam::kEq6Eps);
  const Vec mean = eps_form_mean(xt, denoise_forward(p, xt, 6, {}), 6, s);
  for (size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(got[i], mean[i] + s.sigma(6) * noise[i]);
  EXPECT_EQ(parse_mean_param("eq6_eps"), MeanParam::kEq6Eps);
  EXPECT_THROW(parse_mean_param("eps"), ConfigError);
}

TEST(PSample, EpsFormMeanByHand) {
  const auto s = build_schedule(2);
  const Vec m = eps_form_mean(Vec{1.0}, Vec{0.5}, 2, s);
  EXPECT_NEAR(m[0], (1.0 - 0.02 / std::sqrt(1 - 0.979902) * 0.5) / std::sqrt(0.98), 1e-12);
}

TEST(PSample, SingleStepVarianceIsBeta) {
  const auto p = random_params(4);
  const auto s = build_schedule(10);
  const Vec xt = {0.3, -0.1, 0.2, 0.0};
  const Vec mean = posterior_mean(xt, denoise_forward(p, xt, 7, {}), 7, s);
  CounterRng rng(77);
  const size_t n = 50000;
  double sum = 0, sumsq = 0;
  Vec noise(4);
  for (size_t k = 0; k < n; ++k) {
    rng.fill_normal(noise);
    const double v = p_sample_step(p, xt, 7, {}, noise, s)[0] - mean[0];
    sum += v;
    sumsq += v * v;
  }
  const double m = sum / n, var = sumsq / n - m * m;
  EXPECT_NEAR(var, s.beta(7), 3 * s.beta(7) * std::sqrt(2.0 / (n - 1)));
}

TEST(PSample, ShapeErrors) {
  const auto p = random_params(5);
  const auto s = build_schedule(10);
  EXPECT_THROW(p_sample_step(p, Vec(4, 0.0), 3, {}, Vec(3, 0.0), s), ValidationError);
  EXPECT_THROW(p_sample_step(p, Vec(3, 0.0), 3, {}, Vec(3, 0.0), s), ValidationError);
  EXPECT_THROW(p_sample_step(p, Vec(4, 0.0), 11, {}, Vec(4, 0.0), s), ValidationError);
}

TEST(Sample, SeededDeterminism) {
  const auto p = random_params(6);
  const auto s = build_schedule(10);
  CounterRng a(5), b(5), c(6);
  const Vec cond = {0.5, 0.5, -0.5, 0};
  const Vec va = sample(p, cond, s, a);
  EXPECT_EQ(va, sample(p, cond, s, b));
  EXPECT_NE(va, sample(p, cond, s, c));
}

TEST(Sample, ZeroParamsGiveZero) {
  DenoiserConfig cfg;
  const auto p = DenoiserParams::zeros(cfg);
  CounterRng rng(1);
  EXPECT_EQ(sample(p, {}, build_schedule(10), rng), Vec(32, 0.0));
}

TEST(Rng, StreamsAreIndependentOfCallOrder) {
  CounterRng root(42);
  CounterRng a = root.stream("noise", 3);
  const double first = a.normal();
  CounterRng b = root.stream("noise", 2);
  b.normal();
  EXPECT_EQ(root.stream("noise", 3).normal(), first);
  EXPECT_NE(root.stream("noise", 2).uniform(), root.stream("split", 2).uniform());
}

TEST(Rng, NormalMoments) {
  CounterRng rng(8);
  const size_t n = 200000;
  double s = 0, ss = 0;
  for (size_t i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 3 / std::sqrt(n));
  EXPECT_NEAR(ss / n, 1.0, 3 * std::sqrt(2.0 / n));
}

TEST(Rng, BelowIsInRangeAndUniform) {
  CounterRng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}
