#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crossdiff/data_model.hpp"
#include "crossdiff/features.hpp"

namespace crossdiff {

struct SynthConfig {
  size_t n_users = 200;         // per domain
  size_t n_items = 300;         // per domain
  double overlap_fraction = 0.5;
  size_t embed_dim = 16;
  double noise = 0.1;           // cross-domain map noise and rating noise std
  size_t ratings_per_user = 20;
  size_t n_components = 2;
  double component_spread = 0.6;  // |mean entry|
  double component_std = 0.3;
  double popularity_exponent = 1.0;
  bool identity_map = false;
  uint64_t seed = 0;
};

/// Isotropic Gaussian mixture.
struct MixtureSpec {
  std::vector<Vec> means;
  std::vector<double> weights;
  double std = 0.1;
};

/// Draws n points; component ids are written to `components` when non-null.
std::vector<Vec> sample_mixture(const MixtureSpec& spec, size_t n, CounterRng& rng,
                                std::vector<size_t>* components = nullptr);

struct SynthGroundTruth {
  MixtureSpec latent;                 // distribution of the auxiliary raw embedding z
  std::vector<double> map;            // target raw = map * z + noise, row-major d x d
  double rating_offset = 3.0;
  double rating_scale = 1.0;
  std::map<std::string, size_t> user_component;
};

struct SynthCorpus {
  DomainDataset aux;
  DomainDataset target;
  EmbeddingCorpus embeddings;
  SynthGroundTruth truth;
};

/// Deterministic corpus: overlapping users have target raw embedding
/// map * aux + noise, side-target users are drawn from the same pushed-forward
/// mixture, and ratings are clip(offset + scale * <user, item> + noise, 0, 5).
SynthCorpus synth_corpus(const SynthConfig& cfg);

std::string ground_truth_json(const SynthCorpus& corpus, const SynthConfig& cfg);

/// Writes ratings_aux.tsv, ratings_target.tsv, embeddings/ and truth.json.
void write_synth_corpus(const SynthCorpus& corpus, const SynthConfig& cfg,
                        const std::filesystem::path& dir);

}  // namespace crossdiff
