#pragma once

#include <span>

#include "crossdiff/linalg.hpp"

namespace crossdiff {

/// Mean squared elementwise difference.
double loss_dm(std::span<const double> x0, std::span<const double> x0_hat);
/// d loss_dm / d x0_hat.
Vec loss_dm_grad(std::span<const double> x0, std::span<const double> x0_hat);

/// (1/N) sum (pred - truth)^2; N >= 1.
double loss_rating(std::span<const double> preds, std::span<const double> truths);

/// lambda * dm + (1 - lambda) * rating, lambda in [0, 1].
double loss_joint(double dm, double rating, double lambda);

void check_lambda(double lambda);

}  // namespace crossdiff
