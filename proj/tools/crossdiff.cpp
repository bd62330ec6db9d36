// crossdiff: command-line driver for the cross-domain diffusion recommender.
//
//   crossdiff synth     write a seeded synthetic corpus
//   crossdiff ingest    normalize rating files into the output directory
//   crossdiff pretrain  fit projectors, freeze feature tables, fix the split
//   crossdiff train     two-stage diffusion training -> checkpoint
//   crossdiff infer     generate target features for cold-start users
//   crossdiff evaluate  MAE / RMSE / NDCG@20 per scenario
//   crossdiff ablate    ablation matrix, or a T / activation sweep
//
// Every command reads the previous command's outputs through
// <out>/artifacts.json and writes content-addressed files next to it.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "crossdiff/artifacts.hpp"
#include "crossdiff/config.hpp"
#include "crossdiff/errors.hpp"
#include "crossdiff/eval.hpp"
#include "crossdiff/hash.hpp"
#include "crossdiff/pipeline.hpp"
#include "crossdiff/synth.hpp"
#include "crossdiff/text_io.hpp"
#include "crossdiff/training.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace crossdiff;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kParse: return 2;
    case ErrorCategory::kValidation: return 3;
    case ErrorCategory::kConfig: return 4;
    case ErrorCategory::kState: return 5;
    case ErrorCategory::kDependency: return 6;
    case ErrorCategory::kDegenerateSplit: return 7;
    case ErrorCategory::kIo: return 8;
  }
  return 1;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("crossdiff");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("CROSSDIFF_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept it when asked for.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

/// The artifacts.json index of one output directory.
class Index {
 public:
  explicit Index(fs::path dir) : dir_(std::move(dir)) {
    const fs::path p = dir_ / "artifacts.json";
    if (fs::exists(p)) {
      try {
        j_ = Json::parse(read_file(p));
      } catch (const Json::exception& e) {
        throw ParseError(p.string(), 0, e.what());
      }
    }
  }

  const fs::path& dir() const { return dir_; }

  bool has(const std::string& kind) const { return j_.contains(kind); }

  const Json& get(const std::string& kind, const std::string& producer) const {
    if (!j_.contains(kind)) throw DependencyError(kind + " in " + dir_.string(), producer);
    return j_.at(kind);
  }

  fs::path file(const std::string& kind, const std::string& key, const std::string& producer) const {
    const fs::path p = dir_ / get(kind, producer).at(key).get<std::string>();
    if (!fs::exists(p)) throw DependencyError(p.string(), producer);
    return p;
  }

  void put(const std::string& kind, Json entry) {
    j_[kind] = std::move(entry);
    write_file(dir_ / "artifacts.json", j_.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  Json j_ = Json::object();
};

/// Writes `<stem>-<hash>.<ext>` and returns the file name.
std::string write_hashed(const fs::path& dir, const std::string& stem, const std::string& ext,
                         const std::string& contents) {
  const std::string name = stem + "-" + hash_hex(contents) + "." + ext;
  write_file(dir / name, contents);
  return name;
}

/// Config echo without the output directory.
std::map<std::string, std::string> config_echo(const RunConfig& cfg) {
  auto m = config_map(cfg);
  m.erase("out");
  return m;
}

std::string config_comment(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg))
    if (k != "out") out += "# " + k + " = " + v + "\n";
  return out;
}

struct Datasets {
  DomainDataset aux;
  DomainDataset target;
  std::string fingerprint;
};

Datasets load_datasets(const Index& index) {
  const std::string producer = "crossdiff ingest";
  Datasets d;
  d.aux = ingest_ratings(index.file("datasets", "aux", producer), Domain::kAuxiliary);
  d.target = ingest_ratings(index.file("datasets", "target", producer), Domain::kTarget);
  d.fingerprint = dataset_fingerprint(d.aux, d.target);
  return d;
}

EmbeddingCorpus load_corpus(const RunConfig& cfg, const Index& index) {
  if (!cfg.hidden_states.empty()) return read_hidden_state_corpus(cfg.hidden_states);
  if (!cfg.embeddings.empty()) return read_corpus(cfg.embeddings);
  if (index.has("synth")) return read_corpus(index.file("synth", "embeddings", "crossdiff synth"));
  throw DependencyError("raw embeddings (set `embeddings` or `hidden_states`)", "crossdiff synth");
}

Ablation run_ablation(const std::string& flag) {
  return flag.empty() ? Ablation::kFull : parse_ablation(flag);
}

// ---------------------------------------------------------------- commands

int cmd_synth(const RunConfig& cfg) {
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const SynthCorpus corpus = synth_corpus(sc);
  const fs::path dir = cfg.out / "synth";
  write_synth_corpus(corpus, sc, dir);
  write_file(dir / "config.txt", format_config(cfg));
  Index index(cfg.out);
  index.put("synth", Json{{"ratings_aux", "synth/ratings_aux.tsv"},
                          {"ratings_target", "synth/ratings_target.tsv"},
                          {"embeddings", "synth/embeddings"},
                          {"truth", "synth/truth.json"},
                          {"seed", cfg.seed}});
  spdlog::info("synth: {} aux ratings, {} target ratings -> {}", corpus.aux.records().size(),
               corpus.target.records().size(), dir.string());
  return 0;
}

int cmd_ingest(const RunConfig& cfg) {
  Index index(cfg.out);
  fs::path aux_path = cfg.ratings_aux, target_path = cfg.ratings_target;
  if (aux_path.empty() || target_path.empty()) {
    if (!index.has("synth")) {
      throw DependencyError("rating files (set `ratings_aux` and `ratings_target`)",
                            "crossdiff synth");
    }
    if (aux_path.empty()) aux_path = index.file("synth", "ratings_aux", "crossdiff synth");
    if (target_path.empty()) target_path = index.file("synth", "ratings_target", "crossdiff synth");
  }
  IngestOptions opts;
  opts.min_interactions = cfg.min_interactions;
  const DomainDataset aux = ingest_ratings(aux_path, Domain::kAuxiliary, opts);
  const DomainDataset target = ingest_ratings(target_path, Domain::kTarget, opts);
  const std::string header = config_comment(cfg);
  const fs::path dir = cfg.out / "data";
  const std::string aux_name = write_hashed(dir, "ratings_aux", "tsv", header + format_ratings(aux));
  const std::string target_name =
      write_hashed(dir, "ratings_target", "tsv", header + format_ratings(target));
  const RoleAssignment roles = assign_roles(aux, target);
  index.put("datasets", Json{{"aux", "data/" + aux_name},
                             {"target", "data/" + target_name},
                             {"fingerprint", dataset_fingerprint(aux, target)},
                             {"overlapping", roles.count(Role::kOverlapping)},
                             {"side_target", roles.count(Role::kSideTarget)},
                             {"side_auxiliary", roles.count(Role::kSideAuxiliary)}});
  spdlog::info("ingest: aux {} users / {} ratings, target {} users / {} ratings, {} overlapping",
               aux.users().size(), aux.records().size(), target.users().size(),
               target.records().size(), roles.count(Role::kOverlapping));
  return 0;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& ablation_flag) {
  Index index(cfg.out);
  const Datasets data = load_datasets(index);
  const Ablation ablation = run_ablation(ablation_flag);
  EmbeddingCorpus corpus = load_corpus(cfg, index);
  if (ablation == Ablation::kNoMllm) corpus = random_corpus_like(corpus, cfg.seed);

  const PreparedSplit split = prepare_split(data.aux, data.target, SplitSpec{cfg.beta, cfg.seed});
  ExperimentConfig ec = experiment_config(cfg);
  FeaturesArtifact art;
  art.model = pretrain_projectors(data.aux, split.target_train, corpus, ec.pretrain);
  art.beta = cfg.beta;
  art.seed = cfg.seed;
  art.ablation = std::string(ablation_name(ablation));
  art.dataset_hash = data.fingerprint;
  art.test_cold = split.split.test_cold;
  art.config_echo = config_echo(cfg);
  const std::string name = write_hashed(cfg.out, "features", "tens",
                                        encode_tensor_file(features_to_file(art)));
  index.put("features", Json{{"file", name},
                             {"beta", cfg.beta},
                             {"ablation", art.ablation},
                             {"test_users", split.split.test_cold.size()},
                             {"train_overlap_users", split.split.train_overlap.size()}});
  spdlog::info("pretrain: rating MSE aux {:.4f} -> {:.4f}, target {:.4f} -> {:.4f}",
               art.model.aux.initial_loss, art.model.aux.final_loss,
               art.model.target.initial_loss, art.model.target.final_loss);
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  Index index(cfg.out);
  const Datasets data = load_datasets(index);
  const FeaturesArtifact art =
      load_features(index.file("features", "file", "crossdiff pretrain"));
  if (art.dataset_hash != data.fingerprint) {
    throw StateError("feature tables were fit on different datasets; rerun `crossdiff pretrain`");
  }
  const Ablation ablation = parse_ablation(art.ablation);
  const PreparedSplit split = restore_split(data.aux, data.target, art.test_cold);
  ExperimentConfig ec = experiment_config(cfg);
  ec.train.no_side = ablation == Ablation::kNoSide;
  ec.train.no_diffusion = ablation == Ablation::kNoDiffusion;

  std::optional<EmbeddingCorpus> corpus;
  if (ec.train.cotrain_items) {
    corpus = load_corpus(cfg, index);
    if (ablation == Ablation::kNoMllm) corpus = random_corpus_like(*corpus, cfg.seed);
  }
  TrainingInputs inputs = make_training_inputs(
      split, art.model.tables, corpus ? &art.model.target.item : nullptr,
      corpus ? &corpus->target_items : nullptr);
  TrainingLog log;
  Checkpoint ckpt = train(std::move(inputs), ec.train, &log);
  ckpt.dataset_hash = data.fingerprint;
  ckpt.config_echo = config_echo(cfg);
  ckpt.config_echo["ablation"] = art.ablation;
  const std::string name =
      write_hashed(cfg.out, "checkpoint", "ckpt", encode_tensor_file(checkpoint_to_file(ckpt)));
  index.put("checkpoint", Json{{"file", name},
                               {"ablation", art.ablation},
                               {"stage1_updates", log.updates(1)},
                               {"stage2_updates", log.updates(2)}});
  if (!log.stage1_loss.empty()) {
    spdlog::info("train: stage 1 loss {:.5f} -> {:.5f} over {} updates", log.stage1_loss.front(),
                 log.stage1_loss.back(), log.updates(1));
  }
  if (!log.stage2_loss.empty()) {
    spdlog::info("train: stage 2 loss {:.5f} -> {:.5f} over {} updates", log.stage2_loss.front(),
                 log.stage2_loss.back(), log.updates(2));
  }
  if (ckpt.identity_transfer) spdlog::info("train: identity transfer, no diffusion training");
  return 0;
}

int cmd_infer(const RunConfig& cfg) {
  Index index(cfg.out);
  const FeaturesArtifact art =
      load_features(index.file("features", "file", "crossdiff pretrain"));
  const Checkpoint ckpt = load_checkpoint(index.file("checkpoint", "file", "crossdiff train"));
  if (ckpt.dataset_hash != art.dataset_hash) {
    throw StateError("checkpoint and feature tables come from different datasets");
  }
  const EntityTable generated =
      infer_users(ckpt, art.model.tables.aux_users, art.test_cold, cfg.seed, cfg.train.parallel);
  const std::string name = write_hashed(cfg.out, "generated", "emb",
                                        config_comment(cfg) + format_embeddings(generated));
  index.put("generated", Json{{"file", name}, {"users", generated.size()}});
  spdlog::info("infer: generated {} target features", generated.size());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  Index index(cfg.out);
  const Datasets data = load_datasets(index);
  const Checkpoint ckpt = load_checkpoint(index.file("checkpoint", "file", "crossdiff train"));
  if (ckpt.dataset_hash != data.fingerprint) {
    throw StateError("checkpoint was trained on datasets with hash " + ckpt.dataset_hash +
                     ", but the supplied datasets hash to " + data.fingerprint);
  }
  const FeaturesArtifact art =
      load_features(index.file("features", "file", "crossdiff pretrain"));
  const EntityTable generated =
      read_embeddings(index.file("generated", "file", "crossdiff infer"));
  const PreparedSplit split = restore_split(data.aux, data.target, art.test_cold);
  const EntityTable& items = ckpt.item_features ? *ckpt.item_features : art.model.tables.target_items;

  std::vector<MetricsReport> reports;
  for (Scenario s : cfg.scenarios) {
    MetricsReport r =
        evaluate_features(generated, items, split.test_records, split.train_items, s, cfg.eval);
    r.beta = art.beta;
    r.ablation = art.ablation;
    reports.push_back(r);
  }
  const std::string name = write_hashed(cfg.out, "metrics", "tsv",
                                        config_comment(cfg) + format_metrics_tsv(reports));
  index.put("metrics", Json{{"file", name}});
  std::cout << format_metrics_table(reports);
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& sweep) {
  Index index(cfg.out);
  const Datasets data = load_datasets(index);
  const EmbeddingCorpus corpus = load_corpus(cfg, index);
  const ExperimentConfig ec = experiment_config(cfg);
  const std::string header = config_comment(cfg);

  if (sweep == "steps" || sweep == "activation") {
    const auto points =
        sweep == "steps"
            ? sweep_steps(data.aux, data.target, corpus, ec, cfg.sweep_steps)
            : sweep_activations(data.aux, data.target, corpus, ec, cfg.sweep_activations);
    const std::string report = format_sweep_report(sweep == "steps" ? "steps" : "activation", points);
    const std::string name = write_hashed(cfg.out, "sweep-" + sweep, "tsv", header + report);
    index.put("sweep_" + sweep, Json{{"file", name}});
    std::cout << report;
    return 0;
  }
  if (!sweep.empty()) throw ConfigError("--sweep must be steps or activation");

  const auto reports =
      run_ablation_matrix(data.aux, data.target, corpus, ec, cfg.betas, cfg.ablations);
  std::vector<MetricsReport> kept;
  for (const auto& r : reports)
    for (Scenario s : cfg.scenarios)
      if (r.scenario == scenario_name(s)) kept.push_back(r);
  std::string table;
  for (Scenario s : cfg.scenarios) table += format_ablation_table(kept, std::string(scenario_name(s)));
  const std::string long_name =
      write_hashed(cfg.out, "ablation", "tsv", header + format_metrics_tsv(kept));
  const std::string table_name = write_hashed(cfg.out, "ablation-table", "tsv", header + table);
  index.put("ablation", Json{{"file", long_name}, {"table", table_name}});
  std::cout << format_metrics_table(kept) << '\n' << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Cross-domain diffusion recommender"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ablation_flag, sweep;
  std::optional<uint64_t> seed;
  std::optional<double> beta;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for every random stream");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--set", overrides, "override one config key (key=value)")->take_all();

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic corpus");
  auto* ingest = app.add_subcommand("ingest", "normalize rating files");
  auto* pretrain = app.add_subcommand("pretrain", "fit projectors and freeze feature tables");
  pretrain->add_option("--beta", beta, "fraction of overlapping users held out as cold-start");
  pretrain->add_option("--ablation", ablation_flag, "full, no_side, no_diffusion or no_mllm");
  auto* train_cmd = app.add_subcommand("train", "two-stage diffusion training");
  auto* infer = app.add_subcommand("infer", "generate cold-start target features");
  auto* evaluate = app.add_subcommand("evaluate", "MAE / RMSE / NDCG@20");
  auto* ablate = app.add_subcommand("ablate", "ablation matrix or hyperparameter sweep");
  ablate->add_option("--sweep", sweep, "steps or activation");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out = out_dir;
    if (beta) cfg.beta = *beta;
    validate(cfg);
    fs::create_directories(cfg.out);

    if (synth->parsed()) return cmd_synth(cfg);
    if (ingest->parsed()) return cmd_ingest(cfg);
    if (pretrain->parsed()) return cmd_pretrain(cfg, ablation_flag);
    if (train_cmd->parsed()) return cmd_train(cfg);
    if (infer->parsed()) return cmd_infer(cfg);
    if (evaluate->parsed()) return cmd_evaluate(cfg);
    if (ablate->parsed()) return cmd_ablate(cfg, sweep);
  } catch (const Error& e) {
    spdlog::error("{} error: {}", category_name(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
