#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crossdiff/data_model.hpp"
#include "crossdiff/linalg.hpp"
#include "crossdiff/optim.hpp"
#include "crossdiff/rng.hpp"

namespace crossdiff {

/// Exported encoder hidden states for one entity: first and last layer, each
/// tokens x width, row-major.
struct HiddenStateExport {
  std::string entity_id;
  size_t tokens = 0;
  size_t width = 0;
  std::vector<double> first;
  std::vector<double> last;
};

/// Mean of the per-layer token averages of the first and last layers.
Vec first_last_avg(const HiddenStateExport& hs);

/// Fixed-width real rows keyed by entity id, iterated in id order. Used for
/// raw embeddings and for projected feature vectors alike.
class EntityTable {
 public:
  EntityTable() = default;
  explicit EntityTable(size_t dim) : dim_(dim) {}

  size_t dim() const { return dim_; }
  size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  bool contains(const std::string& id) const { return rows_.contains(id); }
  /// Throws ValidationError when absent.
  const Vec& at(const std::string& id) const;
  /// Throws ValidationError on width mismatch or non-finite entries.
  void set(const std::string& id, Vec row);
  const std::map<std::string, Vec>& rows() const { return rows_; }
  std::vector<std::string> ids() const;
  /// Rounds every entry to the nearest float32 so the table survives a
  /// float32 file round trip unchanged.
  void round_values() {
    for (auto& [_, row] : rows_) round_to_float(row);
  }

  bool operator==(const EntityTable&) const = default;

 private:
  size_t dim_ = 0;
  std::map<std::string, Vec> rows_;
};

/// Raw (pre-projection) embeddings for both domains.
struct EmbeddingCorpus {
  EntityTable aux_users;
  EntityTable aux_items;
  EntityTable target_users;
  EntityTable target_items;

  bool operator==(const EmbeddingCorpus&) const = default;
};

/// Raw-embedding file: `entity_id \t v1,v2,...`.
EntityTable parse_embeddings(std::string_view text, const std::string& source_name);
EntityTable read_embeddings(const std::filesystem::path& path);
std::string format_embeddings(const EntityTable& table);
void write_embeddings(const EntityTable& table, const std::filesystem::path& path);

/// Directory layout: aux_users.emb, aux_items.emb, target_users.emb, target_items.emb.
EmbeddingCorpus read_corpus(const std::filesystem::path& dir);
void write_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& dir);

/// Hidden-state file: `entity_id \t n \t d \t base64(first) \t base64(last)`,
/// payloads little-endian float32, row-major n x d.
std::vector<HiddenStateExport> parse_hidden_states(std::string_view text,
                                                   const std::string& source_name);
std::string format_hidden_states(std::span<const HiddenStateExport> exports);
/// Pools every export with first_last_avg.
EntityTable pool_hidden_states(std::span<const HiddenStateExport> exports);
/// Same layout as read_corpus with `.hs` files.
EmbeddingCorpus read_hidden_state_corpus(const std::filesystem::path& dir);

enum class ProjectorActivation { kTanh, kRelu, kSoftmax };
std::string_view projector_activation_name(ProjectorActivation a);
ProjectorActivation parse_projector_activation(std::string_view s);

/// Two-layer MLP: out = act(W2 dropout(act_h(W1 x + b1)) + b2). act_h is tanh
/// for kTanh and kSoftmax, relu for kRelu; act is the named activation
/// (softmax is taken over the output vector).
struct FeatureProjector {
  ProjectorActivation activation = ProjectorActivation::kTanh;
  Linear hidden;
  Linear output;

  FeatureProjector() = default;
  FeatureProjector(size_t in_dim, size_t hidden_dim, size_t out_dim,
                   ProjectorActivation act = ProjectorActivation::kTanh);

  size_t in_dim() const { return hidden.in; }
  size_t out_dim() const { return output.out; }

  void init(CounterRng& rng);
  std::vector<TensorRef> tensors(const std::string& prefix);
};

struct ProjectorRecord {
  Vec input, hidden_act, dropout_scale, output_pre, output;
};

/// Deterministic inference pass (no dropout).
Vec project(std::span<const double> raw, const FeatureProjector& proj);
/// Training pass; dropout_rate > 0 draws an inverted-dropout mask from rng.
Vec project_train(std::span<const double> raw, const FeatureProjector& proj,
                  double dropout_rate, CounterRng* rng, ProjectorRecord& record);
void projector_backward(const FeatureProjector& proj, const ProjectorRecord& record,
                        std::span<const double> grad_output, FeatureProjector& grads);

/// Projects every row of a raw table.
EntityTable project_table(const EntityTable& raw, const FeatureProjector& proj);

struct PretrainConfig {
  size_t hidden_dim = 128;
  size_t feature_dim = 32;
  ProjectorActivation activation = ProjectorActivation::kTanh;
  double dropout = 0.1;
  double lr = 1e-3;
  size_t epochs = 50;
  size_t batch_size = 128;
  uint64_t seed = 0;
};

struct DomainProjectors {
  FeatureProjector user;
  FeatureProjector item;
  double initial_loss = 0.0;  // rating MSE before training
  double final_loss = 0.0;    // rating MSE after training, no dropout
};

/// Trains a user and an item projector so that dot(f_u, f_v) fits the
/// domain's ratings. Every rated entity must have a raw embedding.
DomainProjectors pretrain_domain(const DomainDataset& data, const EntityTable& user_raw,
                                 const EntityTable& item_raw, const PretrainConfig& cfg,
                                 std::string_view stream_label);

/// Rating MSE of dot(project(user), project(item)) over the dataset.
double rating_mse(const DomainDataset& data, const EntityTable& user_features,
                  const EntityTable& item_features);

/// Frozen outputs of projector pretraining.
struct FeatureTables {
  EntityTable aux_users;
  EntityTable aux_items;
  /// Target users that trained the target projectors (side + train overlap).
  EntityTable target_users;
  EntityTable target_items;
  /// Target users whose target ratings were withheld but who have a raw target
  /// embedding; only for oracle comparisons, never used for training.
  EntityTable heldout_target_users;
  double aux_initial_loss = 0.0, aux_final_loss = 0.0;
  double target_initial_loss = 0.0, target_final_loss = 0.0;

  bool operator==(const FeatureTables& o) const {
    return aux_users == o.aux_users && aux_items == o.aux_items &&
           target_users == o.target_users && target_items == o.target_items &&
           heldout_target_users == o.heldout_target_users;
  }
};

struct PretrainedModel {
  DomainProjectors aux;
  DomainProjectors target;
  FeatureTables tables;
};

/// target_train must exclude cold-start users' target ratings. Output tables
/// are rounded to float32.
/// When cached_aux is given the auxiliary projectors are reused instead of
/// retrained.
PretrainedModel pretrain_projectors(const DomainDataset& aux, const DomainDataset& target_train,
                                    const EmbeddingCorpus& corpus, const PretrainConfig& cfg,
                                    const DomainProjectors* cached_aux = nullptr);

/// Seeded standard-normal embeddings with the same ids and widths as corpus.
EmbeddingCorpus random_corpus_like(const EmbeddingCorpus& corpus, uint64_t seed);

}  // namespace crossdiff
