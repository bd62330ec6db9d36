#include "crossdiff/config.hpp"

#include <functional>

#include "crossdiff/errors.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  if (!parse_double(v, out)) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

uint64_t to_u64(std::string_view key, std::string_view v) {
  uint64_t out = 0;
  if (!parse_u64(v, out)) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

template <typename T, typename Parse>
std::vector<T> to_list(std::string_view v, Parse parse) {
  std::vector<T> out;
  for (auto item : split(v, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(parse(t));
  }
  return out;
}

template <typename T, typename Format>
std::string join(const std::vector<T>& values, Format fmt) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt(values[i]);
  }
  return out;
}

std::string b(bool v) { return v ? "true" : "false"; }

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
};

#define CD_DOUBLE(NAME, FIELD)                                                    \
  Key{NAME, [](const RunConfig& c) { return format_double(c.FIELD); },            \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.FIELD = to_double(k, v); }}
#define CD_SIZE(NAME, FIELD)                                                      \
  Key{NAME, [](const RunConfig& c) { return std::to_string(c.FIELD); },           \
      [](RunConfig& c, std::string_view k, std::string_view v) {                  \
        c.FIELD = static_cast<decltype(c.FIELD)>(to_u64(k, v));                   \
      }}
#define CD_BOOL(NAME, FIELD)                                                      \
  Key{NAME, [](const RunConfig& c) { return b(c.FIELD); },                        \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.FIELD = to_bool(k, v); }}
#define CD_PATH(NAME, FIELD)                                                      \
  Key{NAME, [](const RunConfig& c) { return c.FIELD.string(); },                  \
      [](RunConfig& c, std::string_view, std::string_view v) { c.FIELD = std::string(v); }}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      CD_SIZE("seed", seed),
      CD_PATH("out", out),
      CD_PATH("ratings_aux", ratings_aux),
      CD_PATH("ratings_target", ratings_target),
      CD_PATH("embeddings", embeddings),
      CD_PATH("hidden_states", hidden_states),
      CD_SIZE("min_interactions", min_interactions),

      CD_SIZE("synth.n_users", synth.n_users),
      CD_SIZE("synth.n_items", synth.n_items),
      CD_DOUBLE("synth.overlap_fraction", synth.overlap_fraction),
      CD_SIZE("synth.embed_dim", synth.embed_dim),
      CD_DOUBLE("synth.noise", synth.noise),
      CD_SIZE("synth.ratings_per_user", synth.ratings_per_user),
      CD_SIZE("synth.n_components", synth.n_components),
      CD_DOUBLE("synth.component_spread", synth.component_spread),
      CD_DOUBLE("synth.component_std", synth.component_std),
      CD_DOUBLE("synth.popularity_exponent", synth.popularity_exponent),
      CD_BOOL("synth.identity_map", synth.identity_map),

      CD_SIZE("feature_dim", pretrain.feature_dim),
      CD_SIZE("pretrain.hidden_dim", pretrain.hidden_dim),
      Key{"pretrain.activation",
          [](const RunConfig& c) { return std::string(projector_activation_name(c.pretrain.activation)); },
          [](RunConfig& c, std::string_view, std::string_view v) {
            c.pretrain.activation = parse_projector_activation(v);
          }},
      CD_DOUBLE("pretrain.dropout", pretrain.dropout),
      CD_DOUBLE("pretrain.lr", pretrain.lr),
      CD_SIZE("pretrain.epochs", pretrain.epochs),
      CD_SIZE("pretrain.batch_size", pretrain.batch_size),

      CD_DOUBLE("lr", train.lr),
      CD_SIZE("epochs_stage1", train.epochs_stage1),
      CD_SIZE("epochs_stage2", train.epochs_stage2),
      CD_SIZE("batch_size", train.batch_size),
      CD_DOUBLE("lambda", train.lambda),
      CD_SIZE("steps", train.steps),
      CD_DOUBLE("beta_start", train.beta_start),
      CD_DOUBLE("beta_end", train.beta_end),
      CD_SIZE("draws_per_user", train.draws_per_user),
      Key{"mean_param",
          [](const RunConfig& c) { return std::string(mean_param_name(c.train.mean_param)); },
          [](RunConfig& c, std::string_view, std::string_view v) {
            c.train.mean_param = parse_mean_param(v);
          }},
      Key{"cond_inject",
          [](const RunConfig& c) { return std::string(cond_inject_name(c.train.denoiser.cond_inject)); },
          [](RunConfig& c, std::string_view, std::string_view v) {
            c.train.denoiser.cond_inject = parse_cond_inject(v);
          }},
      Key{"denoiser.activation",
          [](const RunConfig& c) {
            return std::string(block_activation_name(c.train.denoiser.activation));
          },
          [](RunConfig& c, std::string_view, std::string_view v) {
            c.train.denoiser.activation = parse_block_activation(v);
          }},
      CD_SIZE("denoiser.temb_dim", train.denoiser.temb_dim),
      CD_SIZE("denoiser.temb_out", train.denoiser.temb_out),
      CD_SIZE("denoiser.down_dim", train.denoiser.down_dim),
      CD_SIZE("denoiser.mid_dim", train.denoiser.mid_dim),
      CD_BOOL("cotrain_items", train.cotrain_items),
      CD_BOOL("parallel", train.parallel),

      CD_DOUBLE("beta", beta),
      Key{"betas", [](const RunConfig& c) { return join(c.betas, format_double); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.betas = to_list<double>(v, [&](const std::string& s) { return to_double(k, s); });
          }},
      Key{"scenarios",
          [](const RunConfig& c) {
            return join(c.scenarios, [](Scenario s) { return std::string(scenario_name(s)); });
          },
          [](RunConfig& c, std::string_view, std::string_view v) {
            c.scenarios = to_list<Scenario>(v, [](const std::string& s) { return parse_scenario(s); });
          }},
      Key{"ablations",
          [](const RunConfig& c) {
            return join(c.ablations, [](Ablation a) { return std::string(ablation_name(a)); });
          },
          [](RunConfig& c, std::string_view, std::string_view v) {
            c.ablations = to_list<Ablation>(v, [](const std::string& s) { return parse_ablation(s); });
          }},
      Key{"sweep_steps",
          [](const RunConfig& c) { return join(c.sweep_steps, [](size_t t) { return std::to_string(t); }); },
          [](RunConfig& c, std::string_view k, std::string_view v) {
            c.sweep_steps = to_list<size_t>(v, [&](const std::string& s) { return to_u64(k, s); });
          }},
      Key{"sweep_activations",
          [](const RunConfig& c) {
            return join(c.sweep_activations, [](ProjectorActivation a) {
              return std::string(projector_activation_name(a));
            });
          },
          [](RunConfig& c, std::string_view, std::string_view v) {
            c.sweep_activations = to_list<ProjectorActivation>(
                v, [](const std::string& s) { return parse_projector_activation(s); });
          }},
      CD_BOOL("clip", eval.clip),
  };
  return k;
}

#undef CD_DOUBLE
#undef CD_SIZE
#undef CD_BOOL
#undef CD_PATH

}  // namespace

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(cfg, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source_name) {
  size_t line_no = 0;
  for_each_line(text, [&](std::string_view raw) {
    ++line_no;
    std::string_view line = raw.substr(0, raw.find('#'));
    const std::string t = trim(line);
    if (t.empty()) return;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source_name, line_no, "expected `key = value`");
    try {
      set_config_value(cfg, trim(std::string_view(t).substr(0, eq)),
                       std::string_view(t).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_config_text(cfg, read_file(path), path.string());
  return cfg;
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.get(cfg));
  return out;
}

std::map<std::string, std::string> config_map(const RunConfig& cfg) {
  auto e = config_entries(cfg);
  return {e.begin(), e.end()};
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

void validate(const RunConfig& cfg) {
  validate(cfg.train);
  if (!(cfg.beta > 0.0 && cfg.beta < 1.0)) throw ConfigError("beta must lie in (0,1)");
  for (double b : cfg.betas)
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("every value in betas must lie in (0,1)");
  if (cfg.pretrain.feature_dim == 0 || cfg.pretrain.hidden_dim == 0) {
    throw ConfigError("feature and hidden widths must be positive");
  }
  if (cfg.scenarios.empty() || cfg.ablations.empty() || cfg.betas.empty()) {
    throw ConfigError("scenarios, ablations and betas must be non-empty");
  }
}

ExperimentConfig experiment_config(const RunConfig& cfg) {
  ExperimentConfig e;
  e.pretrain = cfg.pretrain;
  e.train = cfg.train;
  e.train.denoiser.feature_dim = cfg.pretrain.feature_dim;
  e.beta = cfg.beta;
  e.seed = cfg.seed;
  e.eval = cfg.eval;
  e.pretrain.seed = cfg.seed;
  e.train.seed = cfg.seed;
  return e;
}

}  // namespace crossdiff
