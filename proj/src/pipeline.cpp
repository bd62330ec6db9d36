#include "crossdiff/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include "crossdiff/errors.hpp"
#include "crossdiff/hash.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

std::string dataset_fingerprint(const DomainDataset& aux, const DomainDataset& target) {
  return hash_hex(aux.content_hash() + ":" + target.content_hash());
}

namespace {

PreparedSplit finish_split(const DomainDataset& aux, const DomainDataset& target,
                           const RoleAssignment& roles, ColdStartSplit split) {
  PreparedSplit out;
  out.roles = apply_split(roles, split);
  const std::set<std::string> cold(split.test_cold.begin(), split.test_cold.end());
  out.target_train = target.filter_users([&](const std::string& u) { return !cold.contains(u); });
  for (const auto& r : target.records())
    if (cold.contains(r.user_id)) out.test_records.push_back(r);
  out.train_items = out.target_train.items();
  out.split = std::move(split);
  (void)aux;
  return out;
}

}  // namespace

PreparedSplit prepare_split(const DomainDataset& aux, const DomainDataset& target,
                            const SplitSpec& spec) {
  const RoleAssignment roles = assign_roles(aux, target);
  return finish_split(aux, target, roles, split_cold_start(roles, spec));
}

PreparedSplit restore_split(const DomainDataset& aux, const DomainDataset& target,
                            const std::vector<std::string>& test_cold) {
  const RoleAssignment roles = assign_roles(aux, target);
  ColdStartSplit split;
  const std::set<std::string> cold(test_cold.begin(), test_cold.end());
  for (const auto& u : roles.with_role(Role::kOverlapping)) {
    (cold.contains(u) ? split.test_cold : split.train_overlap).push_back(u);
  }
  if (split.test_cold.size() != cold.size()) {
    throw ValidationError("stored split names users that are not overlapping in these datasets");
  }
  return finish_split(aux, target, roles, std::move(split));
}

TrainingInputs make_training_inputs(const PreparedSplit& split, const FeatureTables& tables,
                                    const FeatureProjector* item_projector,
                                    const EntityTable* item_raw) {
  TrainingInputs in;
  const size_t dim = tables.target_users.dim();
  in.side_target = EntityTable(dim);
  in.overlap_aux = EntityTable(tables.aux_users.dim());
  in.overlap_target = EntityTable(dim);
  for (const auto& u : split.roles.with_role(Role::kSideTarget)) {
    in.side_target.set(u, tables.target_users.at(u));
  }
  const std::set<std::string> train(split.split.train_overlap.begin(),
                                    split.split.train_overlap.end());
  for (const auto& u : split.split.train_overlap) {
    if (!tables.aux_users.contains(u)) {
      throw ValidationError("overlapping user '" + u + "' has no auxiliary feature");
    }
    in.overlap_aux.set(u, tables.aux_users.at(u));
    in.overlap_target.set(u, tables.target_users.at(u));
  }
  in.overlap_ratings =
      split.target_train.filter_users([&](const std::string& u) { return train.contains(u); });
  in.target_items = tables.target_items;
  if (item_projector) in.item_projector = *item_projector;
  if (item_raw) in.item_raw = *item_raw;
  return in;
}

ExperimentResult run_experiment(const DomainDataset& aux, const DomainDataset& target,
                                const EmbeddingCorpus& corpus, const ExperimentConfig& cfg,
                                Ablation ablation, const DomainProjectors* cached_aux) {
  ExperimentConfig c = cfg;
  c.pretrain.seed = cfg.seed;
  c.train.seed = cfg.seed;
  c.train.denoiser.feature_dim = c.pretrain.feature_dim;
  c.train.no_side = ablation == Ablation::kNoSide;
  c.train.no_diffusion = ablation == Ablation::kNoDiffusion;

  const bool random_corpus = ablation == Ablation::kNoMllm;
  const EmbeddingCorpus used = random_corpus ? random_corpus_like(corpus, cfg.seed) : corpus;

  ExperimentResult res;
  res.split = prepare_split(aux, target, SplitSpec{cfg.beta, cfg.seed});
  res.pretrained = pretrain_projectors(aux, res.split.target_train, used, c.pretrain,
                                       random_corpus ? nullptr : cached_aux);

  TrainingInputs inputs =
      make_training_inputs(res.split, res.pretrained.tables,
                           c.train.cotrain_items ? &res.pretrained.target.item : nullptr,
                           c.train.cotrain_items ? &used.target_items : nullptr);
  res.checkpoint = train(std::move(inputs), c.train, &res.log);
  res.checkpoint.dataset_hash = dataset_fingerprint(aux, target);

  res.generated = infer_users(res.checkpoint, res.pretrained.tables.aux_users,
                              res.split.split.test_cold, cfg.seed, c.train.parallel);
  const EntityTable& items = res.checkpoint.item_features ? *res.checkpoint.item_features
                                                          : res.pretrained.tables.target_items;
  for (Scenario s : {Scenario::kStandard, Scenario::kDualColdStart}) {
    MetricsReport r = evaluate_features(res.generated, items, res.split.test_records,
                                        res.split.train_items, s, cfg.eval);
    r.beta = cfg.beta;
    r.ablation = std::string(ablation_name(ablation));
    res.reports.push_back(r);
  }
  return res;
}

std::vector<MetricsReport> run_ablation_matrix(const DomainDataset& aux,
                                               const DomainDataset& target,
                                               const EmbeddingCorpus& corpus,
                                               const ExperimentConfig& cfg,
                                               const std::vector<double>& betas,
                                               const std::vector<Ablation>& ablations) {
  PretrainConfig pc = cfg.pretrain;
  pc.seed = cfg.seed;
  const DomainProjectors aux_proj =
      pretrain_domain(aux, corpus.aux_users, corpus.aux_items, pc, "pretrain/auxiliary");
  std::vector<MetricsReport> out;
  for (double beta : betas) {
    ExperimentConfig c = cfg;
    c.beta = beta;
    for (Ablation a : ablations) {
      auto res = run_experiment(aux, target, corpus, c, a, &aux_proj);
      out.insert(out.end(), res.reports.begin(), res.reports.end());
    }
  }
  return out;
}

std::string format_ablation_table(std::span<const MetricsReport> reports,
                                   const std::string& scenario) {
  std::vector<double> betas;
  std::vector<std::string> ablations;
  for (const auto& r : reports) {
    if (r.scenario != scenario) continue;
    if (std::find(betas.begin(), betas.end(), r.beta) == betas.end()) betas.push_back(r.beta);
    if (std::find(ablations.begin(), ablations.end(), r.ablation) == ablations.end())
      ablations.push_back(r.ablation);
  }
  char cell[64];
  std::string out = "# " + scenario + "\nablation";
  for (double b : betas) {
    const std::string tag = format_fixed(b * 100.0, 0) + "%";
    out += "\tMAE@" + tag + "\tRMSE@" + tag + "\tNDCG@20@" + tag;
  }
  out += '\n';
  for (const auto& a : ablations) {
    out += a;
    for (double b : betas) {
      auto it = std::find_if(reports.begin(), reports.end(), [&](const MetricsReport& r) {
        return r.scenario == scenario && r.ablation == a && r.beta == b;
      });
      if (it == reports.end() || it->pairs == 0) {
        out += "\t-\t-\t-";
        continue;
      }
      std::snprintf(cell, sizeof(cell), "\t%.4f\t%.4f\t%.4f", it->mae, it->rmse, it->ndcg20);
      out += cell;
    }
    out += '\n';
  }
  return out;
}

std::vector<SweepPoint> sweep_steps(const DomainDataset& aux, const DomainDataset& target,
                                    const EmbeddingCorpus& corpus, const ExperimentConfig& cfg,
                                    const std::vector<size_t>& steps) {
  PretrainConfig pc = cfg.pretrain;
  pc.seed = cfg.seed;
  const DomainProjectors aux_proj =
      pretrain_domain(aux, corpus.aux_users, corpus.aux_items, pc, "pretrain/auxiliary");
  std::vector<SweepPoint> out;
  for (size_t t : steps) {
    ExperimentConfig c = cfg;
    c.train.steps = t;
    auto res = run_experiment(aux, target, corpus, c, Ablation::kFull, &aux_proj);
    out.push_back({std::to_string(t), res.reports.front()});
  }
  return out;
}

std::vector<SweepPoint> sweep_activations(const DomainDataset& aux, const DomainDataset& target,
                                          const EmbeddingCorpus& corpus,
                                          const ExperimentConfig& cfg,
                                          const std::vector<ProjectorActivation>& activations) {
  std::vector<SweepPoint> out;
  for (ProjectorActivation a : activations) {
    ExperimentConfig c = cfg;
    c.pretrain.activation = a;
    auto res = run_experiment(aux, target, corpus, c, Ablation::kFull);
    out.push_back({std::string(projector_activation_name(a)), res.reports.front()});
  }
  return out;
}

std::string format_sweep_report(const std::string& swept, std::span<const SweepPoint> points) {
  std::string out = swept + "\tusers\tpairs\tmae\trmse\tndcg20\ttrend\n";
  size_t best = 0;
  bool nonincreasing = true, nondecreasing = true;
  for (size_t i = 0; i < points.size(); ++i) {
    const auto& r = points[i].report;
    std::string trend = "-";
    if (i > 0) {
      const double prev = points[i - 1].report.rmse;
      trend = r.rmse < prev ? "down" : r.rmse > prev ? "up" : "flat";
      if (r.rmse > prev) nonincreasing = false;
      if (r.rmse < prev) nondecreasing = false;
    }
    if (r.rmse < points[best].report.rmse) best = i;
    out += points[i].label + '\t' + std::to_string(r.users) + '\t' + std::to_string(r.pairs) + '\t' +
           format_fixed(r.mae, 6) + '\t' + format_fixed(r.rmse, 6) + '\t' +
           format_fixed(r.ndcg20, 6) + '\t' + trend + '\n';
  }
  if (!points.empty()) {
    out += "# best_rmse\t" + points[best].label + '\n';
    out += std::string("# rmse_monotone\t") +
           (nonincreasing ? "nonincreasing" : nondecreasing ? "nondecreasing" : "no") + '\n';
  }
  return out;
}

}  // namespace crossdiff
