#include <gtest/gtest.h>

#include <cmath>

#include "crossdiff/errors.hpp"
#include "crossdiff/features.hpp"
#include "crossdiff/synth.hpp"
#include "test_util.hpp"

using namespace crossdiff;
using crossdiff::testing::random_vec;

namespace {

HiddenStateExport make_export(size_t n, size_t d, Vec first, Vec last) {
  return {"e", n, d, std::move(first), std::move(last)};
}

// Independent closed form: row means accumulated in long double.
Vec closed_form(const HiddenStateExport& hs) {
  Vec out(hs.width);
  for (size_t j = 0; j < hs.width; ++j) {
    long double a = 0, b = 0;
    for (size_t i = 0; i < hs.tokens; ++i) {
      a += hs.first[i * hs.width + j];
      b += hs.last[i * hs.width + j];
    }
    out[j] = static_cast<double>(0.5L * (a / hs.tokens + b / hs.tokens));
  }
  return out;
}

SynthConfig small_synth(uint64_t seed) {
  SynthConfig c;
  c.n_users = 100;
  c.n_items = 120;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(FirstLastAvg, HandExample) {
  const Vec out = first_last_avg(make_export(2, 2, {1, 3, 3, 1}, {2, 2, 0, 4}));
  EXPECT_DOUBLE_EQ(out[0], 1.5);
  EXPECT_DOUBLE_EQ(out[1], 2.5);
}

TEST(FirstLastAvg, SingleTokenCases) {
  EXPECT_EQ(first_last_avg(make_export(1, 2, {5, -5}, {5, -5})), (Vec{5, -5}));
  EXPECT_EQ(first_last_avg(make_export(1, 2, {0, 0}, {2, 2})), (Vec{1, 1}));
}

TEST(FirstLastAvg, ShapeMismatch) {
  EXPECT_THROW(first_last_avg(make_export(2, 2, {1, 2, 3, 4}, {1, 2})), ValidationError);
  EXPECT_THROW(first_last_avg(make_export(0, 2, {}, {})), ValidationError);
}

TEST(FirstLastAvg, MatchesClosedFormOnRandomExports) {
  CounterRng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 1 + rng.below(64), d = 1 + rng.below(256);
    auto hs = make_export(n, d, random_vec(n * d, rng, -3, 3), random_vec(n * d, rng, -3, 3));
    const Vec got = first_last_avg(hs), want = closed_form(hs);
    for (size_t j = 0; j < d; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
  }
}

TEST(HiddenStates, FileRoundTripThroughFloat32) {
  HiddenStateExport hs = make_export(2, 3, {0.5, -1, 2, 0.25, 8, -0.125}, {1, 1, 1, 0, 0, 0});
  hs.entity_id = "item/7";
  const auto text = format_hidden_states(std::span(&hs, 1));
  const auto back = parse_hidden_states(text, "mem");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].entity_id, "item/7");
  EXPECT_EQ(back[0].first, hs.first);
  EXPECT_EQ(back[0].last, hs.last);
  EXPECT_EQ(pool_hidden_states(back).at("item/7"), first_last_avg(hs));
}

TEST(HiddenStates, MalformedRecord) {
  EXPECT_THROW(parse_hidden_states("e\t2\t2\tAAAA\n", "mem"), ParseError);
  EXPECT_THROW(parse_hidden_states("e\t1\t1\t!!!!\tAAAAAA==\n", "mem"), ParseError);
}

TEST(Embeddings, ParseAndFormat) {
  const auto t = parse_embeddings("a\t1,2.5\nb\t-1,0\n", "mem");
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_EQ(t.at("a"), (Vec{1, 2.5}));
  EXPECT_EQ(parse_embeddings(format_embeddings(t), "mem"), t);
  EXPECT_THROW(parse_embeddings("a\t1,2\nb\t1\n", "mem"), ParseError);
  EXPECT_THROW(parse_embeddings("a\t1,x\n", "mem"), ParseError);
}

TEST(Project, ZeroWeightsGiveZero) {
  FeatureProjector p(4, 8, 3);
  EXPECT_EQ(project(Vec{1, -2, 3, 4}, p), (Vec{0, 0, 0}));
}

TEST(Project, ScalarTanhChain) {
  // A single-unit projector is tanh(w2 * tanh(w1 * x)); with w2 = 1 the
  // inner tanh(2) is the first-layer value.
  FeatureProjector p(1, 1, 1);
  p.hidden.w = {2.0};
  p.output.w = {1.0};
  const Vec out = project(Vec{1.0}, p);
  EXPECT_NEAR(out[0], std::tanh(std::tanh(2.0)), 1e-15);
  EXPECT_NEAR(std::tanh(2.0), 0.96403, 1e-5);
}

TEST(Project, WidthMismatch) {
  FeatureProjector p(4, 8, 3);
  EXPECT_THROW(project(Vec{1, 2}, p), ValidationError);
}

TEST(Project, TanhBoundOnRandomInputs) {
  CounterRng rng(5);
  FeatureProjector p(16, 32, 8);
  p.init(rng);
  for (double& w : p.output.w) w *= 4.0;
  for (int i = 0; i < 10000; ++i) {
    for (double v : project(random_vec(16, rng, -10, 10), p)) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Project, SoftmaxOutputIsADistribution) {
  CounterRng rng(6);
  FeatureProjector p(4, 8, 5, ProjectorActivation::kSoftmax);
  p.init(rng);
  const Vec out = project(random_vec(4, rng), p);
  double s = 0;
  for (double v : out) {
    EXPECT_GT(v, 0.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Project, BackwardMatchesFiniteDifferences) {
  for (auto act : {ProjectorActivation::kTanh, ProjectorActivation::kRelu, ProjectorActivation::kSoftmax}) {
    CounterRng rng(8);
    FeatureProjector p(5, 7, 4, act);
    p.init(rng);
    const Vec x = random_vec(5, rng), g = random_vec(4, rng);
    ProjectorRecord rec;
    project_train(x, p, 0.0, nullptr, rec);
    FeatureProjector grads(5, 7, 4, act);
    projector_backward(p, rec, g, grads);
    auto objective = [&] { return dot(project(x, p), g); };
    auto params = p.tensors("p");
    auto gparams = grads.tensors("p");
    for (size_t k = 0; k < params.size(); ++k) {
      for (size_t i = 0; i < params[k].data.size(); ++i) {
        const double keep = params[k].data[i];
        params[k].data[i] = keep + 1e-6;
        const double up = objective();
        params[k].data[i] = keep - 1e-6;
        const double down = objective();
        params[k].data[i] = keep;
        EXPECT_NEAR(gparams[k].data[i], (up - down) / 2e-6, 1e-6)
            << projector_activation_name(act) << " " << params[k].name << "[" << i << "]";
      }
    }
  }
}

TEST(Synth, Deterministic) {
  const auto a = synth_corpus(small_synth(4)), b = synth_corpus(small_synth(4));
  EXPECT_EQ(format_ratings(a.aux), format_ratings(b.aux));
  EXPECT_EQ(format_ratings(a.target), format_ratings(b.target));
  EXPECT_EQ(a.embeddings, b.embeddings);
  EXPECT_EQ(ground_truth_json(a, small_synth(4)), ground_truth_json(b, small_synth(4)));
  EXPECT_NE(format_ratings(a.target), format_ratings(synth_corpus(small_synth(5)).target));
}

TEST(Synth, RoleCounts) {
  const auto c = synth_corpus(small_synth(1));
  const auto roles = assign_roles(c.aux, c.target);
  EXPECT_EQ(roles.count(Role::kOverlapping), 50u);
  EXPECT_EQ(roles.count(Role::kSideTarget), 50u);
  EXPECT_EQ(roles.count(Role::kSideAuxiliary), 50u);
}

TEST(Synth, ZeroNoiseFollowsTheMap) {
  auto cfg = small_synth(2);
  cfg.noise = 0.0;
  const auto c = synth_corpus(cfg);
  const size_t d = cfg.embed_dim;
  const auto roles = assign_roles(c.aux, c.target);
  for (const auto& u : roles.with_role(Role::kOverlapping)) {
    const Vec& z = c.embeddings.aux_users.at(u);
    const Vec& t = c.embeddings.target_users.at(u);
    for (size_t r = 0; r < d; ++r) {
      double want = 0;
      for (size_t k = 0; k < d; ++k) want += c.truth.map[r * d + k] * z[k];
      EXPECT_NEAR(t[r], want, 1e-12);
    }
  }
}

TEST(Synth, IdentityMapZeroNoiseCopiesEmbeddings) {
  auto cfg = small_synth(3);
  cfg.noise = 0.0;
  cfg.identity_map = true;
  const auto c = synth_corpus(cfg);
  for (const auto& u : assign_roles(c.aux, c.target).with_role(Role::kOverlapping))
    EXPECT_EQ(c.embeddings.aux_users.at(u), c.embeddings.target_users.at(u));
}

TEST(Synth, RatingsInRange) {
  const auto c = synth_corpus(small_synth(9));
  for (const auto* d : {&c.aux, &c.target})
    for (const auto& r : d->records()) {
      EXPECT_GE(r.rating, 0.0);
      EXPECT_LE(r.rating, 5.0);
    }
}

TEST(Synth, ConfigValidation) {
  auto cfg = small_synth(1);
  cfg.overlap_fraction = 1.0;
  EXPECT_THROW(synth_corpus(cfg), ConfigError);
  cfg = small_synth(1);
  cfg.n_items = 0;
  EXPECT_THROW(synth_corpus(cfg), ConfigError);
}

TEST(Pretrain, LossDecreasesAndTablesHaveFeatureDim) {
  auto cfg = small_synth(1);
  cfg.noise = 0.0;
  const auto c = synth_corpus(cfg);
  PretrainConfig pc;
  pc.seed = 3;
  const auto model = pretrain_projectors(c.aux, c.target, c.embeddings, pc);
  EXPECT_LT(model.aux.final_loss, model.aux.initial_loss);
  EXPECT_LT(model.target.final_loss, model.target.initial_loss);
  EXPECT_LT(model.target.final_loss, 0.05);
  EXPECT_LT(model.aux.final_loss, 0.05);
  EXPECT_EQ(model.tables.target_users.size(), 100u);
  EXPECT_EQ(model.tables.target_users.dim(), 32u);
  EXPECT_EQ(model.tables.aux_users.size(), 100u);
  for (const auto& [id, row] : model.tables.target_users.rows())
    for (double v : row) EXPECT_TRUE(std::isfinite(v)) << id;

  const auto again = pretrain_projectors(c.aux, c.target, c.embeddings, pc);
  EXPECT_EQ(again.tables, model.tables);
}

TEST(Pretrain, MissingEmbeddingListsIds) {
  const auto c = synth_corpus(small_synth(1));
  EmbeddingCorpus broken = c.embeddings;
  EntityTable items(broken.target_items.dim());
  for (const auto& [id, row] : broken.target_items.rows())
    if (id != "t00000") items.set(id, row);
  broken.target_items = items;
  try {
    pretrain_projectors(c.aux, c.target, broken, PretrainConfig{});
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("t00000"), std::string::npos) << e.what();
  }
}

TEST(RandomCorpus, SameShapeDifferentValues) {
  const auto c = synth_corpus(small_synth(1));
  const auto r = random_corpus_like(c.embeddings, 1);
  EXPECT_EQ(r.aux_users.ids(), c.embeddings.aux_users.ids());
  EXPECT_EQ(r.target_items.dim(), c.embeddings.target_items.dim());
  EXPECT_NE(r.aux_users, c.embeddings.aux_users);
  EXPECT_EQ(r, random_corpus_like(c.embeddings, 1));
}
