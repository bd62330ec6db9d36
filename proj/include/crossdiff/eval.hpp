#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crossdiff/data_model.hpp"
#include "crossdiff/features.hpp"
#include "crossdiff/training.hpp"

namespace crossdiff {

/// Raw dot product; not clipped.
double predict_rating(std::span<const double> f_u, std::span<const double> f_v);

struct RankedItem {
  std::string item_id;
  double score = 0.0;
};

struct RankedList {
  std::string user_id;
  std::vector<RankedItem> items;  // scores nonincreasing, ties by ascending id
};

/// The n highest-scoring items of the table (shorter when the table is smaller).
RankedList top_n(std::span<const double> f_u, const EntityTable& items, size_t n,
                 const std::string& user_id = "");

double mae(std::span<const double> preds, std::span<const double> truths);
double rmse(std::span<const double> preds, std::span<const double> truths);

/// DCG over the first k ranked ids with linear gain rel and log2(i + 1)
/// discount, divided by the DCG of the relevances sorted descending. Ids
/// missing from `relevance` count as 0. Returns 0 when the ideal DCG is 0.
double ndcg_at_k(std::span<const std::string> ranked,
                 const std::map<std::string, double>& relevance, size_t k = 20);

enum class Scenario { kStandard, kDualColdStart };
std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view s);

enum class Ablation { kFull, kNoSide, kNoDiffusion, kNoMllm };
std::string_view ablation_name(Ablation a);
Ablation parse_ablation(std::string_view s);
inline constexpr Ablation kAllAblations[] = {Ablation::kFull, Ablation::kNoSide,
                                             Ablation::kNoDiffusion, Ablation::kNoMllm};

struct MetricsReport {
  std::string scenario;
  double beta = 0.0;
  std::string ablation;
  size_t users = 0;           // users with at least one evaluated pair
  size_t pairs = 0;
  size_t excluded_users = 0;  // test users with nothing to evaluate
  double mae = 0.0;
  double rmse = 0.0;
  double ndcg20 = 0.0;
};

/// Target feature for one cold-start user: a T-step conditional sample, or
/// f_aux itself for an identity-transfer checkpoint.
Vec infer_cold_start(const Checkpoint& ckpt, std::span<const double> f_aux,
                     const NoiseSchedule& sched, CounterRng& rng);

/// Generates features for every listed user; user i draws from
/// CounterRng(seed).stream("infer", i). Users must have an auxiliary feature.
EntityTable infer_users(const Checkpoint& ckpt, const EntityTable& aux_features,
                        std::span<const std::string> users, uint64_t seed, bool parallel = true);

struct EvalOptions {
  size_t k = 20;
  bool clip = false;  // clip predictions to [0, 5] before MAE/RMSE
};

/// Scores each test record with the generated user feature. For
/// kDualColdStart only records on items outside train_items count. Users
/// without a generated feature or without evaluable records are excluded.
MetricsReport evaluate_features(const EntityTable& user_features, const EntityTable& item_features,
                                std::span<const RatingRecord> test_records,
                                const std::set<std::string>& train_items, Scenario scenario,
                                const EvalOptions& opts = {});

/// Seeded baseline: each test user gets the target feature of a uniformly
/// drawn training user.
EntityTable chance_features(const EntityTable& train_user_features,
                            std::span<const std::string> users, uint64_t seed);

std::string metrics_tsv_header();
std::string metrics_tsv_row(const MetricsReport& r);
std::string format_metrics_tsv(std::span<const MetricsReport> reports);
std::string format_metrics_table(std::span<const MetricsReport> reports);

}  // namespace crossdiff
