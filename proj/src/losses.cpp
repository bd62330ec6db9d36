#include "crossdiff/losses.hpp"

#include "crossdiff/errors.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

double loss_dm(std::span<const double> x0, std::span<const double> x0_hat) {
  if (x0.size() != x0_hat.size() || x0.empty()) {
    throw ValidationError("loss_dm: dimension mismatch " + std::to_string(x0.size()) + " vs " +
                          std::to_string(x0_hat.size()));
  }
  double acc = 0.0;
  for (size_t i = 0; i < x0.size(); ++i) {
    const double d = x0[i] - x0_hat[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x0.size());
}

Vec loss_dm_grad(std::span<const double> x0, std::span<const double> x0_hat) {
  if (x0.size() != x0_hat.size() || x0.empty()) {
    throw ValidationError("loss_dm_grad: dimension mismatch");
  }
  Vec g(x0.size());
  const double scale = 2.0 / static_cast<double>(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) g[i] = scale * (x0_hat[i] - x0[i]);
  return g;
}

double loss_rating(std::span<const double> preds, std::span<const double> truths) {
  if (preds.empty()) throw ValidationError("loss_rating: no ratings");
  if (preds.size() != truths.size()) throw ValidationError("loss_rating: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const double d = preds[i] - truths[i];
    acc += d * d;
  }
  return acc / static_cast<double>(preds.size());
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("lambda must lie in [0,1], got " + format_double(lambda));
  }
}

double loss_joint(double dm, double rating, double lambda) {
  check_lambda(lambda);
  return lambda * dm + (1.0 - lambda) * rating;
}

}  // namespace crossdiff
