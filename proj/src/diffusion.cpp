#include "crossdiff/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "crossdiff/errors.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

namespace {
void check_step(size_t t, const NoiseSchedule& sched, size_t lowest = 1) {
  if (t < lowest || t > sched.steps()) {
    throw ValidationError("diffusion step " + std::to_string(t) + " outside [" +
                          std::to_string(lowest) + ", " + std::to_string(sched.steps()) + "]");
  }
}

void check_same(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ValidationError(std::string(what) + ": dimension mismatch " +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}
}  // namespace

double NoiseSchedule::sigma(size_t t) const {
  return t <= 1 ? 0.0 : std::sqrt(beta(t));
}

NoiseSchedule build_schedule(size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw ValidationError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ValidationError("schedule bounds must satisfy 0 < start <= end < 1, got " +
                          format_double(beta_start) + ", " + format_double(beta_end));
  }
  NoiseSchedule s;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.beta_.resize(steps);
  s.alpha_.resize(steps);
  s.alpha_bar_.resize(steps);
  // Folded in extended precision, rounded once per entry.
  long double running = 1.0L;
  for (size_t i = 0; i < steps; ++i) {
    const long double frac =
        steps == 1 ? 0.0L : static_cast<long double>(i) / static_cast<long double>(steps - 1);
    const long double beta = beta_start + frac * (static_cast<long double>(beta_end) - beta_start);
    running *= 1.0L - beta;
    s.beta_[i] = static_cast<double>(beta);
    s.alpha_[i] = static_cast<double>(1.0L - beta);
    s.alpha_bar_[i] = static_cast<double>(running);
  }
  return s;
}

Vec q_sample(std::span<const double> x0, size_t t, std::span<const double> eps,
             const NoiseSchedule& sched) {
  check_step(t, sched);
  check_same(x0, eps, "q_sample");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  Vec out(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

void timestep_embedding(double t, std::span<double> out) {
  const size_t width = out.size();
  if (width < 2 || width % 2 != 0) {
    throw ValidationError("timestep embedding width must be even and >= 2, got " +
                          std::to_string(width));
  }
  const size_t half = width / 2;
  const double rate = half > 1 ? std::log(10000.0) / static_cast<double>(half - 1) : 0.0;
  for (size_t i = 0; i < half; ++i) {
    const double omega = std::exp(-rate * static_cast<double>(i));
    out[i] = std::sin(t * omega);
    out[half + i] = std::cos(t * omega);
  }
}

Vec timestep_embedding(double t, size_t width) {
  if (width < 2 || width % 2 != 0) {
    throw ValidationError("timestep embedding width must be even and >= 2, got " +
                          std::to_string(width));
  }
  Vec out(width);
  timestep_embedding(t, out);
  return out;
}

Vec posterior_mean(std::span<const double> x_t, std::span<const double> x0_hat, size_t t,
                   const NoiseSchedule& sched) {
  check_step(t, sched, 2);
  check_same(x_t, x0_hat, "posterior_mean");
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double c0 = std::sqrt(ab_prev) * sched.beta(t) / (1.0 - ab);
  const double ct = std::sqrt(sched.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
  Vec mu(x_t.size());
  for (size_t i = 0; i < x_t.size(); ++i) mu[i] = c0 * x0_hat[i] + ct * x_t[i];
  return mu;
}

Vec eps_form_mean(std::span<const double> x_t, std::span<const double> net_out, size_t t,
                  const NoiseSchedule& sched) {
  check_step(t, sched);
  check_same(x_t, net_out, "eps_form_mean");
  const double k = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv = 1.0 / std::sqrt(sched.alpha(t));
  Vec mu(x_t.size());
  for (size_t i = 0; i < x_t.size(); ++i) mu[i] = inv * (x_t[i] - k * net_out[i]);
  return mu;
}

}  // namespace crossdiff
