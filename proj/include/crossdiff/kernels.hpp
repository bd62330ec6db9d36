#pragma once

#include <span>
#include <vector>

#include "crossdiff/denoiser.hpp"
#include "crossdiff/diffusion.hpp"
#include "crossdiff/features.hpp"
#include "crossdiff/sampler.hpp"

namespace crossdiff {

/// Observed rating of one item, used by the rating term of the joint loss.
struct RatingTerm {
  std::span<const double> item_feature;
  double rating = 0.0;
};

/// One training example: x_t = q_sample(x0, t, eps); the network predicts x0
/// from (x_t, t, cond). An empty cond makes the pass unconditional.
struct DiffusionExample {
  std::span<const double> x0;
  std::span<const double> cond;
  size_t t = 1;
  std::span<const double> eps;
  std::span<const RatingTerm> ratings;
};

/// Loss and gradient of one batch:
///   L = lambda * mean_b loss_dm(x0_b, x0_hat_b)
///     + (1 - lambda) * (1/N) sum over all rating terms (x0_hat_b . f_v - r)^2
/// The rating term is skipped when the batch carries no ratings.
struct BatchResult {
  double loss_dm = 0.0;
  double loss_rating = 0.0;
  double loss_total = 0.0;
  size_t n_ratings = 0;
  DenoiserParams grads;
  /// dL/d(item_feature) per example and rating term, when requested.
  std::vector<std::vector<Vec>> item_grads;
};

/// Scratch buffers reused across batches.
class GradientWorkspace {
 public:
  std::vector<double>& rows(size_t n_rows, size_t width);
  size_t width() const { return width_; }

 private:
  std::vector<double> buffer_;
  size_t width_ = 0;
};

/// Copies every tensor of params into dst in tensors() order.
void flatten(const DenoiserParams& params, std::span<double> dst);
void unflatten(std::span<const double> src, DenoiserParams& params);

/// In-place pairwise tree reduction of n_rows rows of `width` values; the
/// result ends up in row 0. Step s adds row k + s into row k for k = 0, 2s, 4s...
void tree_reduce_rows(std::span<double> rows, size_t n_rows, size_t width, bool parallel);

namespace reference {

void batch_gradient(const DenoiserParams& params, std::span<const DiffusionExample> batch,
                    const NoiseSchedule& sched, double lambda, bool want_item_grads,
                    GradientWorkspace& ws, BatchResult& out);

/// Sample i uses base.stream("sample", i); empty conds[i] means unconditional.
std::vector<Vec> batch_sample(const DenoiserParams& params, std::span<const Vec> conds,
                              const NoiseSchedule& sched, const CounterRng& base,
                              MeanParam mean_param);

EntityTable project_table(const EntityTable& raw, const FeatureProjector& proj);

}  // namespace reference

namespace parallel {

/// Same contract and bit-identical results as reference::batch_gradient.
void batch_gradient(const DenoiserParams& params, std::span<const DiffusionExample> batch,
                    const NoiseSchedule& sched, double lambda, bool want_item_grads,
                    GradientWorkspace& ws, BatchResult& out);

std::vector<Vec> batch_sample(const DenoiserParams& params, std::span<const Vec> conds,
                              const NoiseSchedule& sched, const CounterRng& base,
                              MeanParam mean_param);

EntityTable project_table(const EntityTable& raw, const FeatureProjector& proj);

}  // namespace parallel

namespace detail {

/// Per-example loss pieces; gradient of the batch loss w.r.t. the params is
/// accumulated into `grads` (which must start zeroed).
struct ExampleOutcome {
  double dm = 0.0;
  double rating_sq = 0.0;
  std::vector<Vec> item_grads;
};

ExampleOutcome example_gradient(const DenoiserParams& params, const DiffusionExample& ex,
                                const NoiseSchedule& sched, double dm_weight,
                                double rating_weight, bool want_item_grads,
                                DenoiserParams& grads);

void finish_batch(std::span<const ExampleOutcome> outcomes, double lambda, size_t n_ratings,
                  BatchResult& out);

size_t count_ratings(std::span<const DiffusionExample> batch);

}  // namespace detail

}  // namespace crossdiff
