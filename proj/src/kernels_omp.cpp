#include <exception>

#include "crossdiff/errors.hpp"
#include "crossdiff/kernels.hpp"

namespace crossdiff::parallel {

namespace {
/// Runs body(i) for i in [0, n) across threads and rethrows the first
/// exception (by lowest index) on the calling thread.
template <typename Body>
void parallel_for(size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      body(static_cast<size_t>(i));
    } catch (...) {
      errors[static_cast<size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}
}  // namespace

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
  parallel_for(n, [&](size_t b) {
    DenoiserParams scratch(params.config);
    outcomes[b] = detail::example_gradient(params, batch[b], sched, dm_weight, rating_weight,
                                           want_item_grads, scratch);
    flatten(scratch, std::span<double>(rows).subspan(b * width, width));
  });
  tree_reduce_rows(rows, n, width, true);
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
  parallel_for(conds.size(), [&](size_t i) {
    CounterRng rng = base.stream("sample", i);
    out[i] = sample(params, conds[i], sched, rng, mean_param);
  });
  return out;
}

EntityTable project_table(const EntityTable& raw, const FeatureProjector& proj) {
  const auto ids = raw.ids();
  std::vector<Vec> rows(ids.size());
  parallel_for(ids.size(), [&](size_t i) { rows[i] = project(raw.at(ids[i]), proj); });
  EntityTable out(proj.out_dim());
  for (size_t i = 0; i < ids.size(); ++i) out.set(ids[i], std::move(rows[i]));
  return out;
}

}  // namespace crossdiff::parallel
