#include "crossdiff/sampler.hpp"

#include "crossdiff/errors.hpp"

namespace crossdiff {

std::string_view mean_param_name(MeanParam m) {
  return m == MeanParam::kX0Posterior ? "x0_posterior" : "eq6_eps";
}

MeanParam parse_mean_param(std::string_view s) {
  if (s == "x0_posterior") return MeanParam::kX0Posterior;
  if (s == "eq6_eps") return MeanParam::kEq6Eps;
  throw ConfigError("mean_param must be x0_posterior or eq6_eps, got '" + std::string(s) + "'");
}

Vec p_sample_step(const DenoiserParams& params, std::span<const double> x_t, size_t t,
                  std::span<const double> cond, std::span<const double> noise,
                  const NoiseSchedule& sched, MeanParam mean_param) {
  if (t < 1 || t > sched.steps()) {
    throw ValidationError("reverse step " + std::to_string(t) + " outside [1, " +
                          std::to_string(sched.steps()) + "]");
  }
  Vec net = denoise_forward(params, x_t, t, cond);
  if (t == 1) return net;
  if (noise.size() != x_t.size()) throw ValidationError("noise draw has wrong dimension");
  Vec mu = mean_param == MeanParam::kX0Posterior ? posterior_mean(x_t, net, t, sched)
                                                 : eps_form_mean(x_t, net, t, sched);
  const double sigma = sched.sigma(t);
  for (size_t i = 0; i < mu.size(); ++i) mu[i] += sigma * noise[i];
  return mu;
}

Vec sample(const DenoiserParams& params, std::span<const double> cond,
           const NoiseSchedule& sched, CounterRng& rng, MeanParam mean_param) {
  const size_t dim = params.config.feature_dim;
  Vec x(dim);
  rng.fill_normal(x);
  Vec noise(dim, 0.0);
  for (size_t t = sched.steps(); t >= 1; --t) {
    if (t > 1) rng.fill_normal(noise);
    x = p_sample_step(params, x, t, cond, noise, sched, mean_param);
  }
  return x;
}

}  // namespace crossdiff
