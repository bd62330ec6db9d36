#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossdiff/diffusion.hpp"
#include "crossdiff/linalg.hpp"

namespace crossdiff {

enum class CondInject { kInputOnly, kPerBlock };
enum class BlockActivation { kTanh, kSilu };

std::string_view cond_inject_name(CondInject c);
CondInject parse_cond_inject(std::string_view s);
std::string_view block_activation_name(BlockActivation a);
BlockActivation parse_block_activation(std::string_view s);

struct DenoiserConfig {
  size_t feature_dim = 32;
  size_t temb_dim = 32;   // sinusoid width; also the projection hidden width
  size_t temb_out = 32;   // projected timestep-embedding width
  size_t down_dim = 16;
  size_t mid_dim = 16;
  CondInject cond_inject = CondInject::kInputOnly;
  BlockActivation activation = BlockActivation::kTanh;

  bool operator==(const DenoiserConfig&) const = default;
};

/// Vectorized U-Net over feature vectors:
///
///   e   = W_t2 tanh(W_t1 sinusoid(t) + b_t1) + b_t2
///   h0  = x_t (+ cond)
///   d   = act(W_d h0 + b_d + T_d e [+ C_d cond])          feature -> down
///   m   = act(W_m d + b_m + T_m e [+ C_m cond])           down -> mid
///   u   = act(W_u [m; h0] + b_u + T_u e [+ C_u cond])     mid + skip -> feature
///   out = W_o u + b_o                                    predicted x0
///
/// The bracketed C_* terms are live only with CondInject::kPerBlock.
struct DenoiserParams {
  DenoiserConfig config;
  Linear temb1, temb2;
  Linear down, down_t, down_c;
  Linear mid, mid_t, mid_c;
  Linear up, up_t, up_c;
  Linear out;

  DenoiserParams() = default;
  explicit DenoiserParams(const DenoiserConfig& cfg);

  static DenoiserParams zeros(const DenoiserConfig& cfg) { return DenoiserParams(cfg); }
  static DenoiserParams random(const DenoiserConfig& cfg, CounterRng& rng);

  std::vector<TensorRef> tensors();
  std::vector<ConstTensorRef> tensors() const;
  size_t parameter_count() const;
  void set_zero();
};

/// Intermediates of one forward pass, consumed by denoiser_backward.
struct DenoiserRecord {
  bool valid = false;
  bool has_cond = false;
  size_t step = 0;
  Vec sinusoid, temb_hidden, temb;
  Vec cond;
  Vec h0, cat, output;
  Vec down_pre, mid_pre, up_pre;  // preactivations
  Vec down_act, mid_act, up_act;
};

/// Predicts x0. cond may be empty (unconditional pass).
Vec denoise_forward(const DenoiserParams& params, std::span<const double> x_t, size_t t,
                    std::span<const double> cond, DenoiserRecord* record = nullptr);

struct InputGrads {
  Vec x_t;
  Vec cond;
};

/// Accumulates dL/dparams into grads given dL/d(output). Throws StateError if
/// the record does not hold a forward pass.
InputGrads denoiser_backward(const DenoiserParams& params, const DenoiserRecord& record,
                             std::span<const double> grad_output, DenoiserParams& grads);

}  // namespace crossdiff
