// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "crossdiff/denoiser.hpp"
#include "crossdiff/diffusion.hpp"
#include "crossdiff/eval.hpp"
#include "crossdiff/features.hpp"
#include "crossdiff/kernels.hpp"
#include "crossdiff/pipeline.hpp"
#include "crossdiff/synth.hpp"
#include "crossdiff/tensor_file.hpp"
#include "crossdiff/text_io.hpp"
#include "crossdiff/training.hpp"

using namespace crossdiff;

namespace {

struct Outcome {
  Outcome() = default;
  Outcome(bool p, std::string d) : pass(p), detail(std::move(d)) {}

  bool pass = false;
  std::string detail;
  std::vector<std::string> notes;  // printed indented below the verdict
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

Vec random_vec(size_t n, CounterRng& rng, double lo = -1.0, double hi = 1.0) {
  Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double feature_rmse(const EntityTable& got, const EntityTable& truth) {
  double s = 0.0;
  size_t n = 0;
  for (const auto& [id, v] : got.rows()) {
    const auto& w = truth.at(id);
    for (size_t i = 0; i < v.size(); ++i) {
      s += (v[i] - w[i]) * (v[i] - w[i]);
      ++n;
    }
  }
  return std::sqrt(s / static_cast<double>(n));
}

// Transfer experiments share one corpus and config.
ExperimentConfig transfer_config(double beta) {
  ExperimentConfig cfg;
  cfg.seed = 1;
  cfg.beta = beta;
  cfg.train.batch_size = 32;
  cfg.train.draws_per_user = 4;
  cfg.train.lambda = 0.5;
  cfg.train.denoiser.cond_inject = CondInject::kPerBlock;
  return cfg;
}

const SynthCorpus& planted_corpus() {
  static const SynthCorpus c = [] {
    SynthConfig s;
    s.seed = 1;
    return synth_corpus(s);
  }();
  return c;
}

// ------------------------------------------------------------------ 1

Outcome pooling_exactness() {
  CounterRng rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    HiddenStateExport hs;
    hs.entity_id = "e";
    hs.tokens = 1 + rng.below(64);
    hs.width = 1 + rng.below(256);
    if (rep == 0) hs.tokens = 64, hs.width = 256;
    hs.first = random_vec(hs.tokens * hs.width, rng, -10, 10);
    hs.last = random_vec(hs.tokens * hs.width, rng, -10, 10);
    const Vec got = first_last_avg(hs);
    for (size_t j = 0; j < hs.width; ++j) {
      long double a = 0, b = 0;
      for (size_t t = 0; t < hs.tokens; ++t) {
        a += hs.first[t * hs.width + j];
        b += hs.last[t * hs.width + j];
      }
      const long double want = (a / hs.tokens + b / hs.tokens) / 2;
      worst = std::max(worst, static_cast<double>(std::fabs(got[j] - want)));
    }
  }
  return {worst < 1e-12, "max abs err " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 2

Outcome schedule_fidelity() {
  const auto s2 = build_schedule(2, 1e-4, 0.02);
  const bool exact = s2.alpha_bar(1) == 0.9999 && s2.alpha_bar(2) == 0.979902;
  double worst = 0.0;
  for (size_t T : {5, 10, 20, 50}) {
    const auto s = build_schedule(T, 1e-4, 0.02);
    long double prod = 1;
    for (size_t t = 1; t <= T; ++t) {
      const long double beta = 1e-4L + (0.02L - 1e-4L) * (t - 1) / (T - 1);
      prod *= 1 - beta;
      worst = std::max(worst, static_cast<double>(std::fabs(s.alpha_bar(t) - prod)));
      worst = std::max(worst, static_cast<double>(std::fabs(s.beta(t) - beta)));
    }
  }
  return {exact && worst < 1e-12,
          "T=2 alpha_bar " + format_double(s2.alpha_bar(1)) + ", " + format_double(s2.alpha_bar(2)) +
              "; fold max err " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 3

Outcome forward_marginal() {
  const size_t n = 100000, dim = 2;
  const auto sched = build_schedule(10);
  CounterRng root(303);
  CounterRng xr = root.stream("x0");
  const Vec x0 = random_vec(dim, xr);
  double worst_z = 0.0;
  Vec eps(dim);
  for (size_t t = 1; t <= 10; ++t) {
    CounterRng rng = root.stream("draws", t);
    std::vector<std::vector<double>> draws(dim, std::vector<double>(n));
    for (size_t k = 0; k < n; ++k) {
      rng.fill_normal(eps);
      const Vec x = q_sample(x0, t, eps, sched);
      for (size_t i = 0; i < dim; ++i) draws[i][k] = x[i];
    }
    const double var = 1.0 - sched.alpha_bar(t);
    for (size_t i = 0; i < dim; ++i) {
      const double mean = std::accumulate(draws[i].begin(), draws[i].end(), 0.0) / n;
      double ss = 0.0;
      for (double v : draws[i]) ss += (v - mean) * (v - mean);
      const double sample_var = ss / (n - 1);
      const double z_mean = std::abs(mean - std::sqrt(sched.alpha_bar(t)) * x0[i]) / std::sqrt(var / n);
      const double z_var = std::abs(sample_var - var) / (var * std::sqrt(2.0 / (n - 1)));
      worst_z = std::max({worst_z, z_mean, z_var});
    }
  }
  return {worst_z < 3.0, "worst deviation " + fmt("%.2f", worst_z) + " standard errors"};
}

// ------------------------------------------------------------------ 4

double fd_worst_rel(DenoiserParams params, const Vec& xt, size_t t, const Vec& cond, const Vec& g) {
  DenoiserRecord rec;
  denoise_forward(params, xt, t, cond, &rec);
  DenoiserParams grads(params.config);
  const InputGrads in = denoiser_backward(params, rec, g, grads);
  auto objective = [&](const Vec& x, const Vec& c) { return dot(denoise_forward(params, x, t, c), g); };
  double worst = 0.0;
  auto compare = [&](double a, double b) {
    worst = std::max(worst, std::abs(a - b) / std::max(1e-6, std::abs(a) + std::abs(b)));
  };
  const double h = 1e-5;
  auto p = params.tensors();
  auto gp = grads.tensors();
  for (size_t k = 0; k < p.size(); ++k) {
    for (size_t i = 0; i < p[k].data.size(); ++i) {
      const double keep = p[k].data[i];
      p[k].data[i] = keep + h;
      const double up = objective(xt, cond);
      p[k].data[i] = keep - h;
      const double down = objective(xt, cond);
      p[k].data[i] = keep;
      compare(gp[k].data[i], (up - down) / (2 * h));
    }
  }
  for (size_t i = 0; i < xt.size(); ++i) {
    Vec a = xt, b = xt;
    a[i] += h;
    b[i] -= h;
    compare(in.x_t[i], (objective(a, cond) - objective(b, cond)) / (2 * h));
  }
  for (size_t i = 0; i < cond.size(); ++i) {
    Vec a = cond, b = cond;
    a[i] += h;
    b[i] -= h;
    compare(in.cond[i], (objective(xt, a) - objective(xt, b)) / (2 * h));
  }
  return worst;
}

Outcome gradient_correctness() {
  double worst = 0.0;
  for (uint64_t k = 0; k < 100; ++k) {
    CounterRng rng = CounterRng(404).stream("instance", k);
    DenoiserConfig cfg;
    cfg.feature_dim = 1 + rng.below(16);
    cfg.temb_dim = 2 * (1 + rng.below(8));
    cfg.temb_out = 1 + rng.below(16);
    cfg.down_dim = 1 + rng.below(16);
    cfg.mid_dim = 1 + rng.below(16);
    cfg.cond_inject = k % 2 ? CondInject::kPerBlock : CondInject::kInputOnly;
    cfg.activation = (k / 2) % 2 ? BlockActivation::kSilu : BlockActivation::kTanh;
    const auto p = DenoiserParams::random(cfg, rng);
    const Vec xt = random_vec(cfg.feature_dim, rng), g = random_vec(cfg.feature_dim, rng);
    const Vec cond = k % 3 ? random_vec(cfg.feature_dim, rng) : Vec{};
    worst = std::max(worst, fd_worst_rel(p, xt, 1 + rng.below(10), cond, g));
  }
  return {worst < 1e-3, "worst relative error " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 5

Outcome mixture_recovery() {
  const size_t dim = 32;
  CounterRng root(505);
  CounterRng mr = root.stream("means");
  Vec m1(dim), m2(dim);
  for (size_t i = 0; i < dim; ++i) {
    m1[i] = mr.uniform() < 0.5 ? -0.5 : 0.5;
    m2[i] = mr.uniform() < 0.5 ? -0.5 : 0.5;
  }
  MixtureSpec spec;
  spec.means = {m1, m2};
  spec.weights = {0.5, 0.5};
  spec.std = 0.1;
  CounterRng dr = root.stream("data");
  const auto points = sample_mixture(spec, 200, dr);
  EntityTable side(dim);
  for (size_t i = 0; i < points.size(); ++i) side.set("s" + std::to_string(1000 + i), points[i]);

  TrainConfig tc;
  tc.batch_size = 32;
  tc.epochs_stage1 = 100;
  tc.seed = 5;
  const auto sched = build_schedule(10);
  CounterRng ir = CounterRng(tc.seed).stream("train/init");
  auto params = DenoiserParams::random(tc.denoiser, ir);
  TrainingLog log;
  train_stage1_side(params, side, sched, tc, log);

  const auto samples = parallel::batch_sample(params, std::vector<Vec>(2000), sched,
                                              root.stream("sample"), MeanParam::kX0Posterior);
  std::vector<Vec> acc(2, Vec(dim, 0.0));
  size_t count[2] = {0, 0};
  for (const auto& x : samples) {
    double d[2] = {0, 0};
    for (size_t i = 0; i < dim; ++i) {
      d[0] += (x[i] - m1[i]) * (x[i] - m1[i]);
      d[1] += (x[i] - m2[i]) * (x[i] - m2[i]);
    }
    const size_t c = d[0] <= d[1] ? 0 : 1;
    for (size_t i = 0; i < dim; ++i) acc[c][i] += x[i];
    ++count[c];
  }
  double worst = count[0] && count[1] ? 0.0 : INFINITY;
  for (size_t c = 0; c < 2 && count[0] && count[1]; ++c)
    for (size_t i = 0; i < dim; ++i)
      worst = std::max(worst, std::abs(acc[c][i] / count[c] - spec.means[c][i]));
  return {worst < 0.15, "max per-coordinate mean error " + fmt("%.3f", worst) + " (" +
                            std::to_string(count[0]) + "/" + std::to_string(count[1]) + " samples)"};
}

// ------------------------------------------------------------------ 6, 7

struct BetaRuns {
  ExperimentResult full, no_side;
  MetricsReport chance;
};

std::map<double, BetaRuns>& transfer_runs() {
  static std::map<double, BetaRuns> runs = [] {
    std::map<double, BetaRuns> out;
    const auto& c = planted_corpus();
    for (double beta : {0.2, 0.5, 0.8}) {
      const auto cfg = transfer_config(beta);
      BetaRuns r;
      r.full = run_experiment(c.aux, c.target, c.embeddings, cfg, Ablation::kFull);
      r.no_side = run_experiment(c.aux, c.target, c.embeddings, cfg, Ablation::kNoSide);
      const auto chance = chance_features(r.full.pretrained.tables.target_users,
                                          r.full.split.split.test_cold, cfg.seed);
      r.chance = evaluate_features(chance, r.full.pretrained.tables.target_items,
                                   r.full.split.test_records, r.full.split.train_items,
                                   Scenario::kStandard);
      r.chance.beta = beta;
      r.chance.ablation = "chance";
      out.emplace(beta, std::move(r));
    }
    return out;
  }();
  return runs;
}

Outcome conditional_transfer() {
  const double beta = 0.2;
  const auto cfg = transfer_config(beta);
  const auto& c = planted_corpus();
  const auto& full = transfer_runs().at(beta).full;
  const auto& truth = full.pretrained.tables.heldout_target_users;
  const double cond = feature_rmse(full.generated, truth);

  // Unconditional baseline: the same model after stage 1 only.
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainingInputs in = make_training_inputs(full.split, full.pretrained.tables);
  CounterRng ir = CounterRng(tc.seed).stream("train/init");
  auto stage1 = DenoiserParams::random(tc.denoiser, ir);
  TrainingLog log;
  const auto sched = full.checkpoint.schedule();
  train_stage1_side(stage1, in.side_target, sched, tc, log);
  const auto& users = full.split.split.test_cold;
  const auto drawn = parallel::batch_sample(stage1, std::vector<Vec>(users.size()), sched,
                                            CounterRng(cfg.seed).stream("infer"), tc.mean_param);
  EntityTable uncond(truth.dim());
  for (size_t i = 0; i < users.size(); ++i) uncond.set(users[i], drawn[i]);
  const double unc = feature_rmse(uncond, truth);

  const auto identity = run_experiment(c.aux, c.target, c.embeddings, cfg, Ablation::kNoDiffusion);
  const double full_rmse = full.reports[0].rmse, id_rmse = identity.reports[0].rmse;
  const bool pass = cond <= 0.7 * unc && full_rmse < id_rmse;
  Outcome o{pass, "feature RMSE conditional " + fmt("%.4f", cond) + " vs unconditional " +
                      fmt("%.4f", unc) + " (" + fmt("%.0f", 100 * (1 - cond / unc)) +
                      "% lower); rating RMSE full " + fmt("%.4f", full_rmse) + " vs no_diffusion " +
                      fmt("%.4f", id_rmse)};
  return o;
}

Outcome ablation_direction() {
  int ordered = 0;
  std::vector<MetricsReport> table;
  std::vector<std::string> notes;
  for (auto& [beta, r] : transfer_runs()) {
    const double f = r.full.reports[0].rmse, ns = r.no_side.reports[0].rmse, ch = r.chance.rmse;
    const bool ok = f < ns && ns <= ch;
    ordered += ok;
    notes.push_back("beta " + fmt("%.1f", beta) + ": full " + fmt("%.4f", f) + ", no_side " +
                    fmt("%.4f", ns) + ", chance " + fmt("%.4f", ch) + (ok ? " ordered" : " not ordered"));
    table.push_back(r.full.reports[0]);
    table.push_back(r.no_side.reports[0]);
    table.push_back(r.chance);
  }
  const std::string layout = format_ablation_table(table, "standard");
  size_t start = 0;
  while (start < layout.size()) {
    const size_t end = layout.find('\n', start);
    notes.push_back(layout.substr(start, end - start));
    start = end + 1;
  }
  Outcome o{ordered >= 2, std::to_string(ordered) + " of 3 beta values ordered full < no_side <= chance"};
  o.notes = notes;
  return o;
}

// ------------------------------------------------------------------ 8

double brute_dcg(const std::vector<std::string>& ranked, const std::map<std::string, double>& rel,
                 size_t k) {
  double s = 0.0;
  for (size_t i = 0; i < ranked.size() && i < k; ++i) s += rel.at(ranked[i]) / std::log2(i + 2.0);
  return s;
}

Outcome metric_oracles() {
  CounterRng rng(808);
  double worst_ndcg = 0.0;
  size_t lists = 0;
  for (size_t n = 1; n <= 6; ++n) {
    for (int rep = 0; rep < 8; ++rep) {
      std::vector<std::string> items;
      std::map<std::string, double> rel;
      for (size_t i = 0; i < n; ++i) {
        items.push_back(std::string(1, static_cast<char>('a' + i)));
        rel[items.back()] = rep == 0 ? 0.0 : static_cast<double>(rng.below(6));
      }
      for (size_t k : {size_t{20}, size_t{3}}) {
        // Ideal DCG over every ordering of the catalog.
        std::vector<std::string> perm = items;
        double idcg = 0.0;
        do idcg = std::max(idcg, brute_dcg(perm, rel, k));
        while (std::next_permutation(perm.begin(), perm.end()));
        perm = items;
        do {
          const double want = idcg > 0 ? brute_dcg(perm, rel, k) / idcg : 0.0;
          worst_ndcg = std::max(worst_ndcg, std::abs(ndcg_at_k(perm, rel, k) - want));
          ++lists;
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
    }
  }

  // Two users, three items; predictions are dot products.
  EntityTable users(2), items(2);
  users.set("u1", {1, 0});
  users.set("u2", {0, 1});
  items.set("a", {4, 1});
  items.set("b", {2, 2});
  items.set("c", {1, 3});
  const std::vector<RatingRecord> recs = {{"u1", "a", 5, Domain::kTarget},
                                          {"u1", "b", 1, Domain::kTarget},
                                          {"u2", "b", 3.5, Domain::kTarget},
                                          {"u2", "c", 2, Domain::kTarget},
                                          {"u2", "a", 0, Domain::kTarget}};
  const auto std_r = evaluate_features(users, items, recs, {"a"}, Scenario::kStandard);
  const auto dual_r = evaluate_features(users, items, recs, {"a"}, Scenario::kDualColdStart);
  // |4-5|, |2-1|, |2-3.5|, |3-2|, |1-0| and the dual subset |2-1|, |2-3.5|, |3-2|.
  const bool hand = std_r.pairs == 5 && std_r.mae == 5.5 / 5 && std_r.rmse == std::sqrt(6.25 / 5) &&
                    dual_r.pairs == 3 && dual_r.mae == 3.5 / 3 && dual_r.rmse == std::sqrt(4.25 / 3);

  bool ordered = true;
  for (int rep = 0; rep < 10000; ++rep) {
    const size_t n = 1 + rng.below(20);
    const Vec p = random_vec(n, rng, -5, 5), y = random_vec(n, rng, 0, 5);
    ordered &= mae(p, y) <= rmse(p, y);
  }
  return {worst_ndcg < 1e-12 && hand && ordered,
          std::to_string(lists) + " ranked lists, max NDCG err " + fmt("%.1e", worst_ndcg) +
              "; hand fixtures " + (hand ? "exact" : "mismatch") + "; MAE <= RMSE " +
              (ordered ? "held" : "violated")};
}

// ------------------------------------------------------------------ 9

Outcome step_sweep() {
  const auto& c = planted_corpus();
  const auto points = sweep_steps(c.aux, c.target, c.embeddings, transfer_config(0.2), {2, 5, 10, 20, 50});
  const std::string report = format_sweep_report("steps", points);
  Outcome o;
  size_t best = 0;
  for (size_t i = 0; i < points.size(); ++i)
    if (points[i].report.rmse < points[best].report.rmse) best = i;
  const bool complete = points.size() == 5 && report.find("# rmse_monotone\t") != std::string::npos;
  o.pass = complete && points[best].label != "2";
  o.detail = "best RMSE at T=" + points[best].label;
  size_t start = 0;
  while (start < report.size()) {
    const size_t end = report.find('\n', start);
    o.notes.push_back(report.substr(start, end - start));
    start = end + 1;
  }
  return o;
}

// ------------------------------------------------------------------ 10

Outcome determinism() {
  SynthConfig sc;
  sc.seed = 3;
  const auto corpus = synth_corpus(sc);
  ExperimentConfig cfg;
  cfg.seed = 3;
  std::string ckpt[2], metrics[2];
  double worst_secs = 0.0;
  for (int run = 0; run < 2; ++run) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = run_experiment(corpus.aux, corpus.target, corpus.embeddings, cfg, Ablation::kFull);
    ckpt[run] = encode_tensor_file(checkpoint_to_file(res.checkpoint));
    metrics[run] = format_metrics_tsv(res.reports);
    worst_secs = std::max(worst_secs, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  const bool same = ckpt[0] == ckpt[1] && metrics[0] == metrics[1];
  return {same && worst_secs < 300.0, std::string(same ? "identical" : "different") +
                                          " checkpoint and metrics bytes; slowest run " +
                                          fmt("%.1f", worst_secs) + " s"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_secs;  // 0 = none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "first-last pooling exactness", 1.0, pooling_exactness},
      {2, "schedule fidelity", 0.0, schedule_fidelity},
      {3, "forward-process marginal", 30.0, forward_marginal},
      {4, "gradient correctness", 60.0, gradient_correctness},
      {5, "unconditional mixture recovery", 180.0, mixture_recovery},
      {6, "conditional transfer", 0.0, conditional_transfer},
      {7, "ablation direction", 0.0, ablation_direction},
      {8, "metric oracles", 0.0, metric_oracles},
      {9, "diffusion-step sweep", 0.0, step_sweep},
      {10, "determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    if (c.budget_secs > 0 && secs >= c.budget_secs) {
      pass = false;
      o.detail += "; over the " + fmt("%.0f", c.budget_secs) + " s budget";
    }
    failures += !pass;
    std::printf("criterion %d %s: %s (%s; %.1f s)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
