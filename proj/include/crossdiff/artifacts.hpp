#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "crossdiff/features.hpp"
#include "crossdiff/tensor_file.hpp"

namespace crossdiff {

/// Output of the pretrain command: projectors, frozen feature tables and the
/// cold-start split they were fit under.
struct FeaturesArtifact {
  PretrainedModel model;
  double beta = 0.0;
  uint64_t seed = 0;
  std::string ablation = "full";
  std::string dataset_hash;
  std::vector<std::string> test_cold;
  std::map<std::string, std::string> config_echo;
};

TensorFile features_to_file(const FeaturesArtifact& a);
FeaturesArtifact features_from_file(const TensorFile& file, const std::string& source_name);
void save_features(const FeaturesArtifact& a, const std::filesystem::path& path);
FeaturesArtifact load_features(const std::filesystem::path& path);

}  // namespace crossdiff
