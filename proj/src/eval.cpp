#include "crossdiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "crossdiff/errors.hpp"
#include "crossdiff/kernels.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

double predict_rating(std::span<const double> f_u, std::span<const double> f_v) {
  return dot(f_u, f_v);
}

namespace {

bool ranks_before(const RankedItem& a, const RankedItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.item_id < b.item_id;
}

void check_pairs(std::span<const double> preds, std::span<const double> truths) {
  if (preds.empty()) throw ValidationError("metrics need at least one prediction");
  if (preds.size() != truths.size()) {
    throw ValidationError("metrics: " + std::to_string(preds.size()) + " predictions but " +
                          std::to_string(truths.size()) + " truths");
  }
}

}  // namespace

RankedList top_n(std::span<const double> f_u, const EntityTable& items, size_t n,
                 const std::string& user_id) {
  if (n == 0) throw ValidationError("top_n needs n >= 1");
  RankedList out;
  out.user_id = user_id;
  out.items.reserve(items.size());
  for (const auto& [id, f_v] : items.rows()) out.items.push_back({id, predict_rating(f_u, f_v)});
  const size_t keep = std::min(n, out.items.size());
  std::partial_sort(out.items.begin(), out.items.begin() + static_cast<long>(keep),
                    out.items.end(), ranks_before);
  out.items.resize(keep);
  return out;
}

double mae(std::span<const double> preds, std::span<const double> truths) {
  check_pairs(preds, truths);
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) acc += std::abs(preds[i] - truths[i]);
  return acc / static_cast<double>(preds.size());
}

double rmse(std::span<const double> preds, std::span<const double> truths) {
  check_pairs(preds, truths);
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) acc += (preds[i] - truths[i]) * (preds[i] - truths[i]);
  return std::sqrt(acc / static_cast<double>(preds.size()));
}

double ndcg_at_k(std::span<const std::string> ranked,
                 const std::map<std::string, double>& relevance, size_t k) {
  if (k == 0) throw ValidationError("ndcg needs k >= 1");
  double dcg = 0.0;
  for (size_t i = 0; i < ranked.size() && i < k; ++i) {
    auto it = relevance.find(ranked[i]);
    const double rel = it == relevance.end() ? 0.0 : it->second;
    if (rel < 0.0) throw ValidationError("ndcg relevance must be non-negative");
    dcg += rel / std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<double> ideal;
  for (const auto& [_, rel] : relevance) ideal.push_back(rel);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (size_t i = 0; i < ideal.size() && i < k; ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

std::string_view scenario_name(Scenario s) {
  return s == Scenario::kStandard ? "standard" : "dual_cold_start";
}

Scenario parse_scenario(std::string_view s) {
  if (s == "standard") return Scenario::kStandard;
  if (s == "dual_cold_start") return Scenario::kDualColdStart;
  throw ConfigError("scenario must be standard or dual_cold_start, got '" + std::string(s) + "'");
}

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kNoSide: return "no_side";
    case Ablation::kNoDiffusion: return "no_diffusion";
    case Ablation::kNoMllm: return "no_mllm";
  }
  return "?";
}

Ablation parse_ablation(std::string_view s) {
  for (Ablation a : kAllAblations)
    if (ablation_name(a) == s) return a;
  throw ConfigError("ablation must be full, no_side, no_diffusion or no_mllm, got '" +
                    std::string(s) + "'");
}

Vec infer_cold_start(const Checkpoint& ckpt, std::span<const double> f_aux,
                     const NoiseSchedule& sched, CounterRng& rng) {
  if (f_aux.size() != ckpt.params.config.feature_dim) {
    throw ValidationError("auxiliary feature has width " + std::to_string(f_aux.size()) +
                          ", checkpoint expects " + std::to_string(ckpt.params.config.feature_dim));
  }
  if (ckpt.identity_transfer) return Vec(f_aux.begin(), f_aux.end());
  return sample(ckpt.params, f_aux, sched, rng, ckpt.mean_param);
}

EntityTable infer_users(const Checkpoint& ckpt, const EntityTable& aux_features,
                        std::span<const std::string> users, uint64_t seed, bool parallel) {
  std::vector<Vec> conds;
  conds.reserve(users.size());
  for (const auto& u : users) {
    if (!aux_features.contains(u)) {
      throw ValidationError("cold-start user '" + u + "' has no auxiliary feature");
    }
    conds.push_back(aux_features.at(u));
  }
  EntityTable out(ckpt.params.config.feature_dim);
  if (ckpt.identity_transfer) {
    for (size_t i = 0; i < users.size(); ++i) out.set(users[i], conds[i]);
    return out;
  }
  const NoiseSchedule sched = ckpt.schedule();
  const CounterRng base = CounterRng(seed).stream("infer");
  auto generated = parallel
                       ? parallel::batch_sample(ckpt.params, conds, sched, base, ckpt.mean_param)
                       : reference::batch_sample(ckpt.params, conds, sched, base, ckpt.mean_param);
  for (size_t i = 0; i < users.size(); ++i) {
    round_to_float(generated[i]);
    out.set(users[i], std::move(generated[i]));
  }
  return out;
}

MetricsReport evaluate_features(const EntityTable& user_features, const EntityTable& item_features,
                                std::span<const RatingRecord> test_records,
                                const std::set<std::string>& train_items, Scenario scenario,
                                const EvalOptions& opts) {
  MetricsReport rep;
  rep.scenario = std::string(scenario_name(scenario));

  std::map<std::string, std::vector<const RatingRecord*>> by_user;
  for (const auto& r : test_records) {
    auto& list = by_user[r.user_id];
    if (scenario == Scenario::kDualColdStart && train_items.contains(r.item_id)) continue;
    if (!item_features.contains(r.item_id)) continue;
    list.push_back(&r);
  }

  double abs_sum = 0.0, sq_sum = 0.0, ndcg_sum = 0.0;
  for (const auto& [user, records] : by_user) {
    if (records.empty() || !user_features.contains(user)) {
      ++rep.excluded_users;
      continue;
    }
    const Vec& f_u = user_features.at(user);
    std::vector<RankedItem> ranked;
    std::map<std::string, double> relevance;
    for (const RatingRecord* r : records) {
      double pred = predict_rating(f_u, item_features.at(r->item_id));
      ranked.push_back({r->item_id, pred});
      if (opts.clip) pred = std::clamp(pred, 0.0, 5.0);
      abs_sum += std::abs(pred - r->rating);
      sq_sum += (pred - r->rating) * (pred - r->rating);
      relevance[r->item_id] = r->rating;
    }
    std::sort(ranked.begin(), ranked.end(), ranks_before);
    std::vector<std::string> ids;
    for (const auto& it : ranked) ids.push_back(it.item_id);
    ndcg_sum += ndcg_at_k(ids, relevance, opts.k);
    rep.pairs += records.size();
    ++rep.users;
  }
  if (rep.pairs > 0) {
    rep.mae = abs_sum / static_cast<double>(rep.pairs);
    rep.rmse = std::sqrt(sq_sum / static_cast<double>(rep.pairs));
    rep.ndcg20 = ndcg_sum / static_cast<double>(rep.users);
  }
  return rep;
}

EntityTable chance_features(const EntityTable& train_user_features,
                            std::span<const std::string> users, uint64_t seed) {
  if (train_user_features.empty()) throw ValidationError("chance baseline needs training users");
  const auto ids = train_user_features.ids();
  CounterRng rng = CounterRng(seed).stream("chance");
  EntityTable out(train_user_features.dim());
  for (const auto& u : users) out.set(u, train_user_features.at(ids[rng.below(ids.size())]));
  return out;
}

std::string metrics_tsv_header() {
  return "scenario\tbeta\tablation\tusers\tpairs\tmae\trmse\tndcg20\n";
}

std::string metrics_tsv_row(const MetricsReport& r) {
  return r.scenario + '\t' + format_double(r.beta) + '\t' + r.ablation + '\t' +
         std::to_string(r.users) + '\t' + std::to_string(r.pairs) + '\t' +
         format_fixed(r.mae, 6) + '\t' + format_fixed(r.rmse, 6) + '\t' +
         format_fixed(r.ndcg20, 6) + '\n';
}

std::string format_metrics_tsv(std::span<const MetricsReport> reports) {
  std::string out = metrics_tsv_header();
  for (const auto& r : reports) out += metrics_tsv_row(r);
  return out;
}

std::string format_metrics_table(std::span<const MetricsReport> reports) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "%-16s %5s %-13s %6s %7s %9s %9s %9s\n", "scenario", "beta",
                "ablation", "users", "pairs", "MAE", "RMSE", "NDCG@20");
  out += line;
  out += std::string(81, '-') + '\n';
  for (const auto& r : reports) {
    if (r.pairs == 0) {
      std::snprintf(line, sizeof(line), "%-16s %5.2f %-13s %6zu %7zu %9s %9s %9s\n",
                    r.scenario.c_str(), r.beta, r.ablation.c_str(), r.users, r.pairs, "-", "-", "-");
    } else {
      std::snprintf(line, sizeof(line), "%-16s %5.2f %-13s %6zu %7zu %9.4f %9.4f %9.4f\n",
                    r.scenario.c_str(), r.beta, r.ablation.c_str(), r.users, r.pairs, r.mae,
                    r.rmse, r.ndcg20);
    }
    out += line;
  }
  return out;
}

}  // namespace crossdiff
