#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "crossdiff/errors.hpp"
#include "crossdiff/pipeline.hpp"
#include "crossdiff/synth.hpp"
#include "crossdiff/tensor_file.hpp"

using namespace crossdiff;

namespace {

const SynthCorpus& corpus() {
  static const SynthCorpus c = [] {
    SynthConfig s;
    s.n_users = 60;
    s.n_items = 80;
    s.ratings_per_user = 10;
    s.seed = 2;
    return synth_corpus(s);
  }();
  return c;
}

ExperimentConfig quick_config() {
  ExperimentConfig cfg;
  cfg.pretrain.hidden_dim = 32;
  cfg.pretrain.feature_dim = 8;
  cfg.pretrain.epochs = 5;
  cfg.pretrain.batch_size = 64;
  cfg.train.epochs_stage1 = 3;
  cfg.train.epochs_stage2 = 3;
  cfg.train.batch_size = 16;
  cfg.beta = 0.5;
  cfg.seed = 1;
  return cfg;
}

size_t count_lines(const std::string& s) { return static_cast<size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST(Split, RestoreReproducesPreparedSplit) {
  const auto& c = corpus();
  const auto a = prepare_split(c.aux, c.target, {0.2, 5});
  const auto b = restore_split(c.aux, c.target, a.split.test_cold);
  EXPECT_EQ(a.split.train_overlap, b.split.train_overlap);
  EXPECT_EQ(format_ratings(a.target_train), format_ratings(b.target_train));
  EXPECT_EQ(a.train_items, b.train_items);
  EXPECT_EQ(a.test_records.size(), b.test_records.size());
  EXPECT_THROW(restore_split(c.aux, c.target, {"not-a-user"}), ValidationError);
}

TEST(Split, ColdStartUsersNeverReachTraining) {
  const auto& c = corpus();
  const auto split = prepare_split(c.aux, c.target, {0.5, 5});
  const std::set<std::string> cold(split.split.test_cold.begin(), split.split.test_cold.end());
  for (const auto& r : split.target_train.records()) EXPECT_FALSE(cold.contains(r.user_id));
  for (const auto& r : split.test_records) EXPECT_TRUE(cold.contains(r.user_id));
  EXPECT_EQ(split.test_records.size() + split.target_train.records().size(), c.target.records().size());

  const auto model = pretrain_projectors(c.aux, split.target_train, c.embeddings, quick_config().pretrain);
  for (const auto& u : cold) EXPECT_FALSE(model.tables.target_users.contains(u));
  const auto in = make_training_inputs(split, model.tables);
  for (const auto& u : cold) {
    EXPECT_FALSE(in.overlap_target.contains(u));
    EXPECT_FALSE(in.side_target.contains(u));
  }
  EXPECT_EQ(in.side_target.size(), 30u);
  EXPECT_EQ(in.overlap_aux.size(), split.split.train_overlap.size());
}

TEST(Fingerprint, SensitiveToEitherDataset) {
  const auto& c = corpus();
  const auto base = dataset_fingerprint(c.aux, c.target);
  EXPECT_EQ(base, dataset_fingerprint(c.aux, c.target));
  EXPECT_NE(base, dataset_fingerprint(c.target, c.aux));
  auto recs = c.target.records();
  recs[0].rating = recs[0].rating > 2.5 ? 1.0 : 4.0;
  EXPECT_NE(base, dataset_fingerprint(c.aux, DomainDataset(Domain::kTarget, recs)));
}

TEST(Experiment, DeterministicEndToEnd) {
  const auto& c = corpus();
  const auto a = run_experiment(c.aux, c.target, c.embeddings, quick_config(), Ablation::kFull);
  const auto b = run_experiment(c.aux, c.target, c.embeddings, quick_config(), Ablation::kFull);
  EXPECT_EQ(encode_tensor_file(checkpoint_to_file(a.checkpoint)),
            encode_tensor_file(checkpoint_to_file(b.checkpoint)));
  EXPECT_EQ(format_metrics_tsv(a.reports), format_metrics_tsv(b.reports));
  ASSERT_EQ(a.reports.size(), 2u);
  EXPECT_EQ(a.reports[0].scenario, "standard");
  EXPECT_EQ(a.reports[1].scenario, "dual_cold_start");
  EXPECT_GT(a.reports[0].pairs, 0u);
  EXPECT_LE(a.reports[0].mae, a.reports[0].rmse);
  EXPECT_EQ(a.generated.size(), a.split.split.test_cold.size());
  EXPECT_EQ(a.checkpoint.dataset_hash, dataset_fingerprint(c.aux, c.target));
}

TEST(Experiment, AblationModes) {
  const auto& c = corpus();
  const auto cfg = quick_config();
  const auto no_side = run_experiment(c.aux, c.target, c.embeddings, cfg, Ablation::kNoSide);
  EXPECT_TRUE(no_side.checkpoint.stage1_skipped);
  EXPECT_EQ(no_side.log.updates(1), 0u);
  const auto no_diff = run_experiment(c.aux, c.target, c.embeddings, cfg, Ablation::kNoDiffusion);
  EXPECT_TRUE(no_diff.checkpoint.identity_transfer);
  for (const auto& u : no_diff.split.split.test_cold)
    EXPECT_EQ(no_diff.generated.at(u), no_diff.pretrained.tables.aux_users.at(u));
  const auto full = run_experiment(c.aux, c.target, c.embeddings, cfg, Ablation::kFull);
  const auto no_mllm = run_experiment(c.aux, c.target, c.embeddings, cfg, Ablation::kNoMllm);
  EXPECT_NE(no_mllm.pretrained.tables.target_items, full.pretrained.tables.target_items);
  EXPECT_EQ(no_mllm.reports[0].ablation, "no_mllm");
}

TEST(AblationTable, FourRowsByThreeBetas) {
  const auto& c = corpus();
  const std::vector<double> betas = {0.2, 0.5, 0.8};
  const std::vector<Ablation> abl(std::begin(kAllAblations), std::end(kAllAblations));
  const auto reports = run_ablation_matrix(c.aux, c.target, c.embeddings, quick_config(), betas, abl);
  EXPECT_EQ(reports.size(), 3u * 4u * 2u);
  const std::string table = format_ablation_table(reports, "standard");
  std::istringstream in(table);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u) << table;
  EXPECT_NE(lines[0].find("RMSE@20%"), std::string::npos);
  EXPECT_NE(lines[0].find("NDCG@20@80%"), std::string::npos);
  for (size_t i = 1; i < lines.size(); ++i)
    EXPECT_EQ(std::count(lines[i].begin(), lines[i].end(), '\t'), 9) << lines[i];
  EXPECT_EQ(lines[1].substr(0, 4), "full");
}

TEST(Sweep, ReportShape) {
  const auto& c = corpus();
  const auto points = sweep_steps(c.aux, c.target, c.embeddings, quick_config(), {2, 5});
  ASSERT_EQ(points.size(), 2u);
  const std::string report = format_sweep_report("steps", points);
  EXPECT_EQ(count_lines(report), 1u + 2u + 2u);
  EXPECT_NE(report.find("# best_rmse\t"), std::string::npos);
  EXPECT_NE(report.find("# rmse_monotone\t"), std::string::npos);
}

TEST(Sweep, MonotoneLabels) {
  std::vector<SweepPoint> pts(3);
  for (size_t i = 0; i < 3; ++i) {
    pts[i].label = std::to_string(i);
    pts[i].report.rmse = 1.0 - 0.1 * static_cast<double>(i);
  }
  auto r = format_sweep_report("steps", pts);
  EXPECT_NE(r.find("# best_rmse\t2"), std::string::npos);
  EXPECT_NE(r.find("nonincreasing"), std::string::npos);
  pts[1].report.rmse = 2.0;
  r = format_sweep_report("steps", pts);
  EXPECT_NE(r.find("# rmse_monotone\tno"), std::string::npos);
  EXPECT_NE(r.find("\tup\n"), std::string::npos);
}
