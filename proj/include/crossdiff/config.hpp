#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "crossdiff/eval.hpp"
#include "crossdiff/features.hpp"
#include "crossdiff/pipeline.hpp"
#include "crossdiff/synth.hpp"
#include "crossdiff/training.hpp"

namespace crossdiff {

/// Everything a CLI run can be configured with. Files use flat `key = value`
/// lines; `#` starts a comment; list values are comma separated.
struct RunConfig {
  uint64_t seed = 0;
  std::filesystem::path out = "out";

  std::filesystem::path ratings_aux;
  std::filesystem::path ratings_target;
  std::filesystem::path embeddings;     // directory of *.emb files
  std::filesystem::path hidden_states;  // directory of *.hs files (alternative)
  size_t min_interactions = 0;

  SynthConfig synth;
  PretrainConfig pretrain;
  TrainConfig train;
  EvalOptions eval;

  double beta = 0.2;
  std::vector<double> betas = {0.2, 0.5, 0.8};
  std::vector<Scenario> scenarios = {Scenario::kStandard, Scenario::kDualColdStart};
  std::vector<Ablation> ablations = {Ablation::kFull, Ablation::kNoSide, Ablation::kNoDiffusion,
                                     Ablation::kNoMllm};
  std::vector<size_t> sweep_steps = {2, 5, 10, 20, 50};
  std::vector<ProjectorActivation> sweep_activations = {
      ProjectorActivation::kTanh, ProjectorActivation::kRelu, ProjectorActivation::kSoftmax};
};

/// Sets one key; throws ConfigError for unknown keys or bad values.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

/// Applies every `key = value` line of the text.
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source_name);
RunConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in documentation order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
std::map<std::string, std::string> config_map(const RunConfig& cfg);
std::string format_config(const RunConfig& cfg);

/// Consistency checks across fields (betas in (0,1), lambda range, ...).
void validate(const RunConfig& cfg);

/// Projects the run config onto an experiment.
ExperimentConfig experiment_config(const RunConfig& cfg);

}  // namespace crossdiff
