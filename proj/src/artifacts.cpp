#include "crossdiff/artifacts.hpp"

#include "json.hpp"

#include "crossdiff/errors.hpp"

namespace crossdiff {

namespace {

using Json = nlohmann::ordered_json;

struct TableSlot {
  const char* name;
  EntityTable FeatureTables::*table;
};

constexpr TableSlot kTables[] = {
    {"aux_users", &FeatureTables::aux_users},
    {"aux_items", &FeatureTables::aux_items},
    {"target_users", &FeatureTables::target_users},
    {"target_items", &FeatureTables::target_items},
    {"heldout_target_users", &FeatureTables::heldout_target_users},
};

struct ProjectorSlot {
  const char* name;
  DomainProjectors PretrainedModel::*domain;
  FeatureProjector DomainProjectors::*proj;
};

constexpr ProjectorSlot kProjectors[] = {
    {"aux.user", &PretrainedModel::aux, &DomainProjectors::user},
    {"aux.item", &PretrainedModel::aux, &DomainProjectors::item},
    {"target.user", &PretrainedModel::target, &DomainProjectors::user},
    {"target.item", &PretrainedModel::target, &DomainProjectors::item},
};

}  // namespace

TensorFile features_to_file(const FeaturesArtifact& a) {
  Json m;
  m["kind"] = "features";
  m["beta"] = a.beta;
  m["seed"] = a.seed;
  m["ablation"] = a.ablation;
  m["dataset_hash"] = a.dataset_hash;
  m["test_cold"] = a.test_cold;
  const auto& t = a.model.tables;
  m["losses"] = {{"aux_initial", a.model.aux.initial_loss},
                 {"aux_final", a.model.aux.final_loss},
                 {"target_initial", a.model.target.initial_loss},
                 {"target_final", a.model.target.final_loss}};
  TensorFile file;
  for (const auto& slot : kTables) {
    std::vector<std::string> ids;
    file.tensors.push_back(table_tensor(std::string("table.") + slot.name, t.*slot.table, ids));
    m["ids"][slot.name] = ids;
  }
  for (const auto& slot : kProjectors) {
    FeatureProjector p = (a.model.*slot.domain).*slot.proj;
    m["projectors"][slot.name] = {{"in", p.in_dim()},
                                  {"hidden", p.hidden.out},
                                  {"out", p.out_dim()},
                                  {"activation", std::string(projector_activation_name(p.activation))}};
    for (const auto& ref : p.tensors(std::string("proj.") + slot.name)) {
      file.tensors.push_back({ref.name, ref.shape, Vec(ref.data.begin(), ref.data.end())});
    }
  }
  m["config"] = a.config_echo;
  file.manifest = m.dump();
  return file;
}

FeaturesArtifact features_from_file(const TensorFile& file, const std::string& source_name) {
  FeaturesArtifact a;
  try {
    const Json m = Json::parse(file.manifest);
    if (m.at("kind") != "features") throw ParseError(source_name, 0, "not a features file");
    a.beta = m.at("beta").get<double>();
    a.seed = m.at("seed").get<uint64_t>();
    a.ablation = m.at("ablation").get<std::string>();
    a.dataset_hash = m.at("dataset_hash").get<std::string>();
    a.test_cold = m.at("test_cold").get<std::vector<std::string>>();
    a.config_echo = m.at("config").get<std::map<std::string, std::string>>();
    const auto& l = m.at("losses");
    a.model.aux.initial_loss = l.at("aux_initial").get<double>();
    a.model.aux.final_loss = l.at("aux_final").get<double>();
    a.model.target.initial_loss = l.at("target_initial").get<double>();
    a.model.target.final_loss = l.at("target_final").get<double>();
    auto& t = a.model.tables;
    for (const auto& slot : kTables) {
      t.*slot.table = tensor_table(file.find(std::string("table.") + slot.name),
                                   m.at("ids").at(slot.name).get<std::vector<std::string>>());
    }
    t.aux_initial_loss = a.model.aux.initial_loss;
    t.aux_final_loss = a.model.aux.final_loss;
    t.target_initial_loss = a.model.target.initial_loss;
    t.target_final_loss = a.model.target.final_loss;
    for (const auto& slot : kProjectors) {
      const auto& d = m.at("projectors").at(slot.name);
      FeatureProjector p(d.at("in").get<size_t>(), d.at("hidden").get<size_t>(),
                         d.at("out").get<size_t>(),
                         parse_projector_activation(d.at("activation").get<std::string>()));
      for (auto& ref : p.tensors(std::string("proj.") + slot.name)) {
        const NamedTensor& stored = file.find(ref.name);
        if (stored.shape != ref.shape) {
          throw ValidationError(source_name + ": tensor '" + ref.name + "' has the wrong shape");
        }
        std::copy(stored.data.begin(), stored.data.end(), ref.data.begin());
      }
      (a.model.*slot.domain).*slot.proj = std::move(p);
    }
  } catch (const Json::exception& e) {
    throw ParseError(source_name, 0, std::string("bad manifest: ") + e.what());
  }
  return a;
}

void save_features(const FeaturesArtifact& a, const std::filesystem::path& path) {
  write_tensor_file(features_to_file(a), path);
}

FeaturesArtifact load_features(const std::filesystem::path& path) {
  return features_from_file(read_tensor_file(path), path.string());
}

}  // namespace crossdiff
