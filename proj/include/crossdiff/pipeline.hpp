#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crossdiff/data_model.hpp"
#include "crossdiff/eval.hpp"
#include "crossdiff/features.hpp"
#include "crossdiff/training.hpp"

namespace crossdiff {

struct ExperimentConfig {
  PretrainConfig pretrain;
  TrainConfig train;
  double beta = 0.2;
  uint64_t seed = 0;
  EvalOptions eval;
};

/// Combined content hash of both rating datasets.
std::string dataset_fingerprint(const DomainDataset& aux, const DomainDataset& target);

/// Roles, the cold-start split and everything derived from it.
struct PreparedSplit {
  RoleAssignment roles;  // after the split, test users are kColdStart
  ColdStartSplit split;
  DomainDataset target_train;            // target ratings without cold-start users
  std::vector<RatingRecord> test_records;  // target ratings of cold-start users
  std::set<std::string> train_items;
};

PreparedSplit prepare_split(const DomainDataset& aux, const DomainDataset& target,
                            const SplitSpec& spec);

/// Rebuilds a PreparedSplit from a stored test-user list.
PreparedSplit restore_split(const DomainDataset& aux, const DomainDataset& target,
                            const std::vector<std::string>& test_cold);

TrainingInputs make_training_inputs(const PreparedSplit& split, const FeatureTables& tables,
                                    const FeatureProjector* item_projector = nullptr,
                                    const EntityTable* item_raw = nullptr);

struct ExperimentResult {
  PreparedSplit split;
  PretrainedModel pretrained;
  Checkpoint checkpoint;
  TrainingLog log;
  EntityTable generated;
  std::vector<MetricsReport> reports;  // standard, dual_cold_start
};

/// Applies the ablation to the config and corpus, then runs split, projector
/// pretraining, both training stages, inference and evaluation.
ExperimentResult run_experiment(const DomainDataset& aux, const DomainDataset& target,
                                const EmbeddingCorpus& corpus, const ExperimentConfig& cfg,
                                Ablation ablation,
                                const DomainProjectors* cached_aux = nullptr);

/// Reports for every (beta, ablation) and both scenarios. Auxiliary projectors
/// are pretrained once per corpus and shared.
std::vector<MetricsReport> run_ablation_matrix(const DomainDataset& aux,
                                               const DomainDataset& target,
                                               const EmbeddingCorpus& corpus,
                                               const ExperimentConfig& cfg,
                                               const std::vector<double>& betas,
                                               const std::vector<Ablation>& ablations);

/// Rows = ablations, one column group (MAE, RMSE, NDCG@20) per beta, for one
/// scenario.
std::string format_ablation_table(std::span<const MetricsReport> reports, const std::string& scenario);

struct SweepPoint {
  std::string label;  // swept value
  MetricsReport report;
};

/// Full-model standard-scenario metrics per diffusion step count.
std::vector<SweepPoint> sweep_steps(const DomainDataset& aux, const DomainDataset& target,
                                    const EmbeddingCorpus& corpus, const ExperimentConfig& cfg,
                                    const std::vector<size_t>& steps);

/// Full-model standard-scenario metrics per projector activation.
std::vector<SweepPoint> sweep_activations(const DomainDataset& aux, const DomainDataset& target,
                                          const EmbeddingCorpus& corpus,
                                          const ExperimentConfig& cfg,
                                          const std::vector<ProjectorActivation>& activations);

/// TSV of the sweep plus a trend column (rmse up / down / flat vs the previous
/// point), the best point and whether RMSE is monotone over the sweep.
std::string format_sweep_report(const std::string& swept, std::span<const SweepPoint> points);

}  // namespace crossdiff
