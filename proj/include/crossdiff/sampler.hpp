#pragma once

#include <span>
#include <string_view>

#include "crossdiff/denoiser.hpp"
#include "crossdiff/diffusion.hpp"
#include "crossdiff/rng.hpp"

namespace crossdiff {

/// How the reverse mean is formed from the network output.
///  kX0Posterior: the network output is x0_hat; mean is the q-posterior mean.
///  kEq6Eps:      the network output is plugged into the epsilon-form mean.
enum class MeanParam { kX0Posterior, kEq6Eps };

std::string_view mean_param_name(MeanParam m);
MeanParam parse_mean_param(std::string_view s);

/// One reverse step. For t > 1 returns mean + sigma(t) * noise; at t = 1
/// returns the network output with no noise.
Vec p_sample_step(const DenoiserParams& params, std::span<const double> x_t, size_t t,
                  std::span<const double> cond, std::span<const double> noise,
                  const NoiseSchedule& sched, MeanParam mean_param = MeanParam::kX0Posterior);

/// Draws x_T ~ N(0, I) from rng and runs all T reverse steps.
Vec sample(const DenoiserParams& params, std::span<const double> cond,
           const NoiseSchedule& sched, CounterRng& rng,
           MeanParam mean_param = MeanParam::kX0Posterior);

}  // namespace crossdiff
