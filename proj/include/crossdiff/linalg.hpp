#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crossdiff/errors.hpp"
#include "crossdiff/rng.hpp"

namespace crossdiff {

using Vec = std::vector<double>;

/// A named view over one trainable tensor. Shapes are row-major.
struct TensorRef {
  std::string name;
  std::vector<size_t> shape;
  std::span<double> data;
};

struct ConstTensorRef {
  std::string name;
  std::vector<size_t> shape;
  std::span<const double> data;
};

/// y = W x (+ b). W is out x in, row-major.
struct Linear {
  size_t in = 0;
  size_t out = 0;
  bool has_bias = true;
  Vec w;
  Vec b;

  Linear() = default;
  Linear(size_t in_dim, size_t out_dim, bool bias = true)
      : in(in_dim), out(out_dim), has_bias(bias), w(in_dim * out_dim, 0.0),
        b(bias ? out_dim : 0, 0.0) {}

  /// Uniform in [-1/sqrt(in), 1/sqrt(in)] for weights and biases.
  void init_uniform(CounterRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = rng.uniform(-bound, bound);
    for (double& v : b) v = rng.uniform(-bound, bound);
  }

  void zero() {
    std::fill(w.begin(), w.end(), 0.0);
    std::fill(b.begin(), b.end(), 0.0);
  }

  /// out_vec = W x + b, or out_vec += W x when accumulate is set (bias is
  /// still added once).
  void forward(std::span<const double> x, std::span<double> y,
               bool accumulate = false) const {
    for (size_t o = 0; o < out; ++o) {
      const double* row = w.data() + o * in;
      double acc = has_bias ? b[o] : 0.0;
      for (size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      y[o] = accumulate ? y[o] + acc : acc;
    }
  }

  /// Accumulates dL/dW, dL/db into grad and adds W^T gy into gx (if non-empty).
  void backward(std::span<const double> x, std::span<const double> gy,
                Linear& grad, std::span<double> gx) const {
    for (size_t o = 0; o < out; ++o) {
      const double g = gy[o];
      if (has_bias) grad.b[o] += g;
      if (g == 0.0) continue;
      double* grow = grad.w.data() + o * in;
      for (size_t i = 0; i < in; ++i) grow[i] += g * x[i];
    }
    if (!gx.empty()) {
      for (size_t o = 0; o < out; ++o) {
        const double g = gy[o];
        if (g == 0.0) continue;
        const double* row = w.data() + o * in;
        for (size_t i = 0; i < in; ++i) gx[i] += row[i] * g;
      }
    }
  }

  void append_tensors(const std::string& prefix, std::vector<TensorRef>& out_refs) {
    out_refs.push_back({prefix + ".weight", {out, in}, std::span<double>(w)});
    if (has_bias) out_refs.push_back({prefix + ".bias", {out}, std::span<double>(b)});
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("dot: dimension mismatch " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// Rounds every entry to the nearest float32; the values stay doubles.
inline void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace crossdiff
