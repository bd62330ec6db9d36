#include "crossdiff/denoiser.hpp"

#include <cmath>

#include "crossdiff/errors.hpp"

namespace crossdiff {

std::string_view cond_inject_name(CondInject c) {
  return c == CondInject::kInputOnly ? "input_only" : "per_block";
}

CondInject parse_cond_inject(std::string_view s) {
  if (s == "input_only") return CondInject::kInputOnly;
  if (s == "per_block") return CondInject::kPerBlock;
  throw ConfigError("cond_inject must be input_only or per_block, got '" + std::string(s) + "'");
}

std::string_view block_activation_name(BlockActivation a) {
  return a == BlockActivation::kTanh ? "tanh" : "silu";
}

BlockActivation parse_block_activation(std::string_view s) {
  if (s == "tanh") return BlockActivation::kTanh;
  if (s == "silu") return BlockActivation::kSilu;
  throw ConfigError("denoiser activation must be tanh or silu, got '" + std::string(s) + "'");
}

DenoiserParams::DenoiserParams(const DenoiserConfig& cfg)
    : config(cfg),
      temb1(cfg.temb_dim, cfg.temb_dim),
      temb2(cfg.temb_dim, cfg.temb_out),
      down(cfg.feature_dim, cfg.down_dim),
      down_t(cfg.temb_out, cfg.down_dim, false),
      down_c(cfg.feature_dim, cfg.down_dim, false),
      mid(cfg.down_dim, cfg.mid_dim),
      mid_t(cfg.temb_out, cfg.mid_dim, false),
      mid_c(cfg.feature_dim, cfg.mid_dim, false),
      up(cfg.mid_dim + cfg.feature_dim, cfg.feature_dim),
      up_t(cfg.temb_out, cfg.feature_dim, false),
      up_c(cfg.feature_dim, cfg.feature_dim, false),
      out(cfg.feature_dim, cfg.feature_dim) {
  if (cfg.feature_dim == 0 || cfg.down_dim == 0 || cfg.mid_dim == 0 || cfg.temb_out == 0) {
    throw ValidationError("denoiser widths must be positive");
  }
  if (cfg.temb_dim < 2 || cfg.temb_dim % 2 != 0) {
    throw ValidationError("timestep embedding width must be even and >= 2");
  }
}

DenoiserParams DenoiserParams::random(const DenoiserConfig& cfg, CounterRng& rng) {
  DenoiserParams p(cfg);
  for (Linear* l : {&p.temb1, &p.temb2, &p.down, &p.down_t, &p.down_c, &p.mid, &p.mid_t,
                    &p.mid_c, &p.up, &p.up_t, &p.up_c, &p.out}) {
    l->init_uniform(rng);
  }
  return p;
}

std::vector<TensorRef> DenoiserParams::tensors() {
  std::vector<TensorRef> refs;
  temb1.append_tensors("temb.0", refs);
  temb2.append_tensors("temb.1", refs);
  down.append_tensors("down", refs);
  down_t.append_tensors("down.temb", refs);
  down_c.append_tensors("down.cond", refs);
  mid.append_tensors("mid", refs);
  mid_t.append_tensors("mid.temb", refs);
  mid_c.append_tensors("mid.cond", refs);
  up.append_tensors("up", refs);
  up_t.append_tensors("up.temb", refs);
  up_c.append_tensors("up.cond", refs);
  out.append_tensors("out", refs);
  return refs;
}

std::vector<ConstTensorRef> DenoiserParams::tensors() const {
  auto refs = const_cast<DenoiserParams*>(this)->tensors();
  std::vector<ConstTensorRef> out_refs;
  out_refs.reserve(refs.size());
  for (auto& r : refs) out_refs.push_back({r.name, r.shape, r.data});
  return out_refs;
}

size_t DenoiserParams::parameter_count() const {
  size_t n = 0;
  for (const auto& t : tensors()) n += t.data.size();
  return n;
}

void DenoiserParams::set_zero() {
  for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
}

namespace {

void activate(BlockActivation a, std::span<double> z) {
  if (a == BlockActivation::kTanh) {
    for (double& v : z) v = std::tanh(v);
  } else {
    for (double& v : z) v = v / (1.0 + std::exp(-v));
  }
}

/// Multiplies g by act'(pre), where y = act(pre).
void activation_grad(BlockActivation a, std::span<const double> y, std::span<const double> pre,
                     std::span<double> g) {
  if (a == BlockActivation::kTanh) {
    for (size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
  } else {
    for (size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-pre[i]));
      g[i] *= s * (1.0 + pre[i] * (1.0 - s));
    }
  }
}

}  // namespace

Vec denoise_forward(const DenoiserParams& p, std::span<const double> x_t, size_t t,
                    std::span<const double> cond, DenoiserRecord* record) {
  const DenoiserConfig& c = p.config;
  if (x_t.size() != c.feature_dim) {
    throw ValidationError("denoiser input has dim " + std::to_string(x_t.size()) +
                          ", expected " + std::to_string(c.feature_dim));
  }
  const bool has_cond = !cond.empty();
  if (has_cond && cond.size() != c.feature_dim) {
    throw ValidationError("condition has dim " + std::to_string(cond.size()) +
                          ", expected " + std::to_string(c.feature_dim));
  }
  const bool per_block = has_cond && c.cond_inject == CondInject::kPerBlock;

  DenoiserRecord local;
  DenoiserRecord& r = record ? *record : local;
  r.valid = false;
  r.has_cond = has_cond;
  r.step = t;

  r.sinusoid.assign(c.temb_dim, 0.0);
  timestep_embedding(static_cast<double>(t), r.sinusoid);
  r.temb_hidden.assign(c.temb_dim, 0.0);
  p.temb1.forward(r.sinusoid, r.temb_hidden);
  for (double& v : r.temb_hidden) v = std::tanh(v);
  r.temb.assign(c.temb_out, 0.0);
  p.temb2.forward(r.temb_hidden, r.temb);

  r.cond.assign(cond.begin(), cond.end());
  r.h0.assign(x_t.begin(), x_t.end());
  if (has_cond)
    for (size_t i = 0; i < r.h0.size(); ++i) r.h0[i] += cond[i];

  r.down_pre.assign(c.down_dim, 0.0);
  p.down.forward(r.h0, r.down_pre);
  p.down_t.forward(r.temb, r.down_pre, true);
  if (per_block) p.down_c.forward(cond, r.down_pre, true);
  r.down_act = r.down_pre;
  activate(c.activation, r.down_act);

  r.mid_pre.assign(c.mid_dim, 0.0);
  p.mid.forward(r.down_act, r.mid_pre);
  p.mid_t.forward(r.temb, r.mid_pre, true);
  if (per_block) p.mid_c.forward(cond, r.mid_pre, true);
  r.mid_act = r.mid_pre;
  activate(c.activation, r.mid_act);

  r.cat.resize(c.mid_dim + c.feature_dim);
  std::copy(r.mid_act.begin(), r.mid_act.end(), r.cat.begin());
  std::copy(r.h0.begin(), r.h0.end(), r.cat.begin() + static_cast<long>(c.mid_dim));
  r.up_pre.assign(c.feature_dim, 0.0);
  p.up.forward(r.cat, r.up_pre);
  p.up_t.forward(r.temb, r.up_pre, true);
  if (per_block) p.up_c.forward(cond, r.up_pre, true);
  r.up_act = r.up_pre;
  activate(c.activation, r.up_act);

  r.output.assign(c.feature_dim, 0.0);
  p.out.forward(r.up_act, r.output);

  r.valid = true;
  return r.output;
}

InputGrads denoiser_backward(const DenoiserParams& p, const DenoiserRecord& r,
                             std::span<const double> grad_output, DenoiserParams& g) {
  if (!r.valid) throw StateError("denoiser_backward called without a recorded forward pass");
  const DenoiserConfig& c = p.config;
  if (grad_output.size() != c.feature_dim || !(g.config == c)) {
    throw ValidationError("denoiser_backward: gradient shape mismatch");
  }
  const bool per_block = r.has_cond && c.cond_inject == CondInject::kPerBlock;
  InputGrads in;
  in.x_t.assign(c.feature_dim, 0.0);
  in.cond.assign(r.has_cond ? c.feature_dim : 0, 0.0);
  Vec g_temb(c.temb_out, 0.0);

  Vec g_up(c.feature_dim, 0.0);
  p.out.backward(r.up_act, grad_output, g.out, g_up);
  activation_grad(c.activation, r.up_act, r.up_pre, g_up);

  Vec g_cat(c.mid_dim + c.feature_dim, 0.0);
  p.up.backward(r.cat, g_up, g.up, g_cat);
  p.up_t.backward(r.temb, g_up, g.up_t, g_temb);
  if (per_block) p.up_c.backward(r.cond, g_up, g.up_c, in.cond);

  Vec g_mid(g_cat.begin(), g_cat.begin() + static_cast<long>(c.mid_dim));
  Vec g_h0(g_cat.begin() + static_cast<long>(c.mid_dim), g_cat.end());
  activation_grad(c.activation, r.mid_act, r.mid_pre, g_mid);

  Vec g_down(c.down_dim, 0.0);
  p.mid.backward(r.down_act, g_mid, g.mid, g_down);
  p.mid_t.backward(r.temb, g_mid, g.mid_t, g_temb);
  if (per_block) p.mid_c.backward(r.cond, g_mid, g.mid_c, in.cond);
  activation_grad(c.activation, r.down_act, r.down_pre, g_down);

  p.down.backward(r.h0, g_down, g.down, g_h0);
  p.down_t.backward(r.temb, g_down, g.down_t, g_temb);
  if (per_block) p.down_c.backward(r.cond, g_down, g.down_c, in.cond);

  for (size_t i = 0; i < c.feature_dim; ++i) {
    in.x_t[i] = g_h0[i];
    if (r.has_cond) in.cond[i] += g_h0[i];
  }

  Vec g_th(c.temb_dim, 0.0);
  p.temb2.backward(r.temb_hidden, g_temb, g.temb2, g_th);
  for (size_t i = 0; i < c.temb_dim; ++i) g_th[i] *= 1.0 - r.temb_hidden[i] * r.temb_hidden[i];
  p.temb1.backward(r.sinusoid, g_th, g.temb1, {});
  return in;
}

}  // namespace crossdiff
