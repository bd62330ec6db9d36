#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossdiff/data_model.hpp"
#include "crossdiff/denoiser.hpp"
#include "crossdiff/diffusion.hpp"
#include "crossdiff/features.hpp"
#include "crossdiff/optim.hpp"
#include "crossdiff/sampler.hpp"
#include "crossdiff/tensor_file.hpp"

namespace crossdiff {

struct TrainConfig {
  double lr = 1e-3;
  size_t epochs_stage1 = 50;
  size_t epochs_stage2 = 50;
  size_t batch_size = 128;
  double lambda = 0.5;
  size_t steps = 10;
  double beta_start = kBetaStart;
  double beta_end = kBetaEnd;
  /// Training examples drawn per user and epoch, each with its own (t, eps).
  size_t draws_per_user = 1;
  MeanParam mean_param = MeanParam::kX0Posterior;
  DenoiserConfig denoiser;
  /// Co-train the target item projector with the stage-2 rating term.
  bool cotrain_items = false;
  bool no_side = false;
  bool no_diffusion = false;
  /// Use the OpenMP kernels; results are identical either way.
  bool parallel = true;
  uint64_t seed = 0;
};

/// Throws ConfigError for out-of-range fields.
void validate(const TrainConfig& cfg);

/// Everything the two training stages consume. Feature tables are frozen
/// outputs of projector pretraining.
struct TrainingInputs {
  EntityTable side_target;     // target features of side users
  EntityTable overlap_aux;     // auxiliary features of training overlap users
  EntityTable overlap_target;  // target features of training overlap users
  DomainDataset overlap_ratings;
  EntityTable target_items;
  /// Required only with cotrain_items.
  std::optional<FeatureProjector> item_projector;
  EntityTable item_raw;
};

struct TrainingLog {
  std::vector<double> stage1_loss;  // mean per epoch
  std::vector<double> stage2_loss;
  std::vector<double> stage2_dm;
  std::vector<double> stage2_rating;
  /// Stage (1 or 2) of every optimizer update, in execution order.
  std::vector<uint8_t> update_stages;

  size_t updates(uint8_t stage) const;
};

/// Unconditional training on side users: t ~ U{1..T}, eps ~ N(0, I), regress x0.
void train_stage1_side(DenoiserParams& params, const EntityTable& side_target,
                       const NoiseSchedule& sched, const TrainConfig& cfg, TrainingLog& log);

/// Joint training on overlapping users: conditional diffusion loss on
/// (f^A -> f^T) plus the rating loss of the single-pass reconstruction.
/// Item features are refreshed in place when items are co-trained.
void train_stage2_overlap(DenoiserParams& params, TrainingInputs& inputs,
                          const NoiseSchedule& sched, const TrainConfig& cfg, TrainingLog& log);

/// Deterministic stage-2 objective over every training overlap user with
/// (t, eps) drawn from `seed`; used to measure progress.
double stage2_objective(const DenoiserParams& params, const TrainingInputs& inputs,
                        const NoiseSchedule& sched, double lambda, uint64_t seed);

struct Checkpoint {
  DenoiserParams params;
  size_t steps = 10;
  double beta_start = kBetaStart;
  double beta_end = kBetaEnd;
  MeanParam mean_param = MeanParam::kX0Posterior;
  bool identity_transfer = false;
  bool stage1_skipped = false;
  /// Present when the item projector was co-trained.
  std::optional<EntityTable> item_features;
  size_t n_side = 0;
  size_t n_overlap = 0;
  size_t n_ratings = 0;
  std::string dataset_hash;
  std::string features_hash;
  uint64_t seed = 0;
  /// Flat key=value echo of the configuration that produced the checkpoint.
  std::map<std::string, std::string> config_echo;

  NoiseSchedule schedule() const { return build_schedule(steps, beta_start, beta_end); }
};

/// Runs stage 1 (unless no_side) then stage 2, or nothing for no_diffusion.
/// Parameters are rounded to float32 so the checkpoint file round-trips exactly.
Checkpoint train(TrainingInputs inputs, const TrainConfig& cfg, TrainingLog* log = nullptr);

std::string features_hash(const TrainingInputs& inputs);

TensorFile checkpoint_to_file(const Checkpoint& ckpt);
Checkpoint checkpoint_from_file(const TensorFile& file, const std::string& source_name);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace crossdiff
