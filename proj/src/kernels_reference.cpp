// Serial reference kernels. The parallel versions in kernels_omp.cpp must
// produce bit-identical results; tests compare the two.

#include "crossdiff/errors.hpp"
#include "crossdiff/kernels.hpp"

namespace crossdiff::reference {

void batch_gradient(const DenoiserParams& params, std::span<const DiffusionExample> batch,
                    const NoiseSchedule& sched, double lambda, bool want_item_grads,
                    GradientWorkspace& ws, BatchResult& out) {
  if (batch.empty()) throw ValidationError("empty training batch");
  const size_t n = batch.size();
  const size_t n_ratings = detail::count_ratings(batch);
  const double dm_weight = lambda / static_cast<double>(n);
  const double rating_weight = n_ratings ? (1.0 - lambda) * 2.0 / static_cast<double>(n_ratings) : 0.0;
  const size_t width = params.parameter_count();
  auto& rows = ws.rows(n, width);

  std::vector<detail::ExampleOutcome> outcomes(n);
  DenoiserParams scratch(params.config);
  for (size_t b = 0; b < n; ++b) {
    scratch.set_zero();
    outcomes[b] = detail::example_gradient(params, batch[b], sched, dm_weight, rating_weight,
                                           want_item_grads, scratch);
    flatten(scratch, std::span<double>(rows).subspan(b * width, width));
  }
  tree_reduce_rows(rows, n, width, false);
  if (!(out.grads.config == params.config) || out.grads.parameter_count() != width) {
    out.grads = DenoiserParams(params.config);
  }
  unflatten(std::span<const double>(rows).first(width), out.grads);
  detail::finish_batch(outcomes, lambda, n_ratings, out);
}

std::vector<Vec> batch_sample(const DenoiserParams& params, std::span<const Vec> conds,
                              const NoiseSchedule& sched, const CounterRng& base,
                              MeanParam mean_param) {
  std::vector<Vec> out(conds.size());
  for (size_t i = 0; i < conds.size(); ++i) {
    CounterRng rng = base.stream("sample", i);
    out[i] = sample(params, conds[i], sched, rng, mean_param);
  }
  return out;
}

EntityTable project_table(const EntityTable& raw, const FeatureProjector& proj) {
  return crossdiff::project_table(raw, proj);
}

}  // namespace crossdiff::reference
