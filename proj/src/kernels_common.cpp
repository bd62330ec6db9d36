#include <algorithm>

#include "crossdiff/errors.hpp"
#include "crossdiff/kernels.hpp"

namespace crossdiff {

std::vector<double>& GradientWorkspace::rows(size_t n_rows, size_t width) {
  width_ = width;
  if (buffer_.size() < n_rows * width) buffer_.resize(n_rows * width);
  return buffer_;
}

void flatten(const DenoiserParams& params, std::span<double> dst) {
  size_t off = 0;
  for (const auto& t : params.tensors()) {
    std::copy(t.data.begin(), t.data.end(), dst.begin() + static_cast<long>(off));
    off += t.data.size();
  }
}

void unflatten(std::span<const double> src, DenoiserParams& params) {
  size_t off = 0;
  for (auto& t : params.tensors()) {
    std::copy(src.begin() + static_cast<long>(off),
              src.begin() + static_cast<long>(off + t.data.size()), t.data.begin());
    off += t.data.size();
  }
}

void tree_reduce_rows(std::span<double> rows, size_t n_rows, size_t width, bool parallel) {
  for (size_t stride = 1; stride < n_rows; stride *= 2) {
    const long n_pairs = static_cast<long>((n_rows + 2 * stride - 1) / (2 * stride));
#pragma omp parallel for schedule(static) if (parallel)
    for (long p = 0; p < n_pairs; ++p) {
      const size_t k = static_cast<size_t>(p) * 2 * stride;
      if (k + stride >= n_rows) continue;
      double* dst = rows.data() + k * width;
      const double* src = rows.data() + (k + stride) * width;
      for (size_t i = 0; i < width; ++i) dst[i] += src[i];
    }
  }
}

namespace detail {

size_t count_ratings(std::span<const DiffusionExample> batch) {
  size_t n = 0;
  for (const auto& ex : batch) n += ex.ratings.size();
  return n;
}

ExampleOutcome example_gradient(const DenoiserParams& params, const DiffusionExample& ex,
                                const NoiseSchedule& sched, double dm_weight,
                                double rating_weight, bool want_item_grads,
                                DenoiserParams& grads) {
  ExampleOutcome out;
  const Vec x_t = q_sample(ex.x0, ex.t, ex.eps, sched);
  DenoiserRecord rec;
  const Vec x0_hat = denoise_forward(params, x_t, ex.t, ex.cond, &rec);
  const size_t dim = x0_hat.size();
  if (ex.x0.size() != dim) throw ValidationError("training target has wrong dimension");

  Vec g(dim);
  double dm = 0.0;
  for (size_t i = 0; i < dim; ++i) {
    const double d = x0_hat[i] - ex.x0[i];
    dm += d * d;
    g[i] = dm_weight * 2.0 * d / static_cast<double>(dim);
  }
  out.dm = dm / static_cast<double>(dim);

  if (want_item_grads) out.item_grads.resize(ex.ratings.size());
  for (size_t k = 0; k < ex.ratings.size(); ++k) {
    const auto& term = ex.ratings[k];
    if (term.item_feature.size() != dim) throw ValidationError("item feature has wrong dimension");
    const double resid = dot(x0_hat, term.item_feature) - term.rating;
    out.rating_sq += resid * resid;
    const double w = rating_weight * resid;
    for (size_t i = 0; i < dim; ++i) g[i] += w * term.item_feature[i];
    if (want_item_grads) {
      Vec& gi = out.item_grads[k];
      gi.resize(dim);
      for (size_t i = 0; i < dim; ++i) gi[i] = w * x0_hat[i];
    }
  }
  denoiser_backward(params, rec, g, grads);
  return out;
}

void finish_batch(std::span<const ExampleOutcome> outcomes, double lambda, size_t n_ratings,
                  BatchResult& out) {
  double dm = 0.0, rating = 0.0;
  for (const auto& o : outcomes) {
    dm += o.dm;
    rating += o.rating_sq;
  }
  out.loss_dm = outcomes.empty() ? 0.0 : dm / static_cast<double>(outcomes.size());
  out.n_ratings = n_ratings;
  out.loss_rating = n_ratings ? rating / static_cast<double>(n_ratings) : 0.0;
  out.loss_total = lambda * out.loss_dm + (n_ratings ? (1.0 - lambda) * out.loss_rating : 0.0);
  out.item_grads.clear();
  for (const auto& o : outcomes) out.item_grads.push_back(o.item_grads);
}

}  // namespace detail
}  // namespace crossdiff
