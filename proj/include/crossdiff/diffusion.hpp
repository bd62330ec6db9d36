#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "crossdiff/linalg.hpp"
#include "crossdiff/rng.hpp"

namespace crossdiff {

/// Linear-beta noise schedule. Tables are indexed by step t in [1, T] via the
/// accessors; storage is 0-based.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  size_t steps() const { return beta_.size(); }
  double beta(size_t t) const { return beta_.at(t - 1); }
  double alpha(size_t t) const { return alpha_.at(t - 1); }
  /// Cumulative product of alpha up to and including t. alpha_bar(0) == 1.
  double alpha_bar(size_t t) const { return t == 0 ? 1.0 : alpha_bar_.at(t - 1); }
  /// Reverse-step standard deviation: sqrt(beta_t) for t > 1, 0 at t = 1.
  double sigma(size_t t) const;

  const std::vector<double>& betas() const { return beta_; }
  const std::vector<double>& alphas() const { return alpha_; }
  const std::vector<double>& alpha_bars() const { return alpha_bar_; }

  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  friend NoiseSchedule build_schedule(size_t steps, double beta_start, double beta_end);

 private:
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
};

inline constexpr double kBetaStart = 1e-4;
inline constexpr double kBetaEnd = 0.02;

NoiseSchedule build_schedule(size_t steps, double beta_start = kBetaStart,
                             double beta_end = kBetaEnd);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Vec q_sample(std::span<const double> x0, size_t t, std::span<const double> eps,
             const NoiseSchedule& sched);

/// Sinusoidal embedding, sin block followed by cos block, with
/// omega_i = exp(-ln(10000) / (d/2 - 1) * i), i = 0..d/2-1 (omega_0 = 1 when d = 2).
Vec timestep_embedding(double t, size_t width);
void timestep_embedding(double t, std::span<double> out);

/// Mean of q(x_{t-1} | x_t, x0) with x0 replaced by the prediction. 2 <= t <= T.
Vec posterior_mean(std::span<const double> x_t, std::span<const double> x0_hat, size_t t,
                   const NoiseSchedule& sched);

/// The epsilon-form mean (x_t - beta_t / sqrt(1 - alpha_bar_t) * f) / sqrt(alpha_t),
/// feeding the network output in as f.
Vec eps_form_mean(std::span<const double> x_t, std::span<const double> net_out, size_t t,
                  const NoiseSchedule& sched);

}  // namespace crossdiff
