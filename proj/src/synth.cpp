#include "crossdiff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "crossdiff/errors.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

std::vector<Vec> sample_mixture(const MixtureSpec& spec, size_t n, CounterRng& rng,
                                std::vector<size_t>* components) {
  if (spec.means.empty() || spec.means.size() != spec.weights.size()) {
    throw ValidationError("mixture needs matching means and weights");
  }
  double total = 0.0;
  for (double w : spec.weights) total += w;
  std::vector<Vec> out;
  out.reserve(n);
  if (components) components->clear();
  for (size_t i = 0; i < n; ++i) {
    double u = rng.uniform() * total;
    size_t k = 0;
    while (k + 1 < spec.weights.size() && u >= spec.weights[k]) u -= spec.weights[k++];
    Vec x(spec.means[k].size());
    rng.fill_normal(x);
    for (size_t j = 0; j < x.size(); ++j) x[j] = spec.means[k][j] + spec.std * x[j];
    out.push_back(std::move(x));
    if (components) components->push_back(k);
  }
  return out;
}

namespace {

std::string padded(char prefix, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%05zu", prefix, i);
  return buf;
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian matrix.
std::vector<double> random_orthogonal(size_t d, CounterRng& rng) {
  std::vector<double> q(d * d);
  for (size_t r = 0; r < d; ++r) {
    Vec v(d);
    rng.fill_normal(v);
    for (size_t p = 0; p < r; ++p) {
      double proj = 0.0;
      for (size_t j = 0; j < d; ++j) proj += v[j] * q[p * d + j];
      for (size_t j = 0; j < d; ++j) v[j] -= proj * q[p * d + j];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (size_t j = 0; j < d; ++j) q[r * d + j] = v[j] / norm;
  }
  return q;
}

/// Distinct item indices drawn with weights proportional to 1 / (rank + 1)^s.
std::vector<size_t> draw_items(size_t n_items, size_t count, double exponent, CounterRng& rng) {
  std::vector<double> cdf(n_items);
  double acc = 0.0;
  for (size_t j = 0; j < n_items; ++j) {
    acc += 1.0 / std::pow(static_cast<double>(j + 1), exponent);
    cdf[j] = acc;
  }
  std::set<size_t> picked;
  count = std::min(count, n_items);
  while (picked.size() < count) {
    const double u = rng.uniform() * acc;
    const size_t j = static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    picked.insert(std::min(j, n_items - 1));
  }
  return {picked.begin(), picked.end()};
}

}  // namespace

SynthCorpus synth_corpus(const SynthConfig& cfg) {
  if (cfg.n_users == 0 || cfg.n_items == 0 || cfg.embed_dim == 0 || cfg.ratings_per_user == 0 ||
      cfg.n_components == 0) {
    throw ConfigError("synthetic corpus sizes must be positive");
  }
  if (!(cfg.overlap_fraction > 0.0 && cfg.overlap_fraction < 1.0)) {
    throw ConfigError("overlap fraction must lie in (0,1)");
  }
  if (cfg.noise < 0.0) throw ConfigError("noise level must be non-negative");

  const size_t d = cfg.embed_dim;
  CounterRng root = CounterRng(cfg.seed).stream("synth");
  SynthCorpus out;
  SynthGroundTruth& truth = out.truth;

  CounterRng mix_rng = root.stream("mixture");
  for (size_t k = 0; k < cfg.n_components; ++k) {
    Vec mean(d);
    for (double& v : mean) v = mix_rng.uniform() < 0.5 ? -cfg.component_spread : cfg.component_spread;
    truth.latent.means.push_back(std::move(mean));
    truth.latent.weights.push_back(1.0 / static_cast<double>(cfg.n_components));
  }
  truth.latent.std = cfg.component_std;

  if (cfg.identity_map) {
    truth.map.assign(d * d, 0.0);
    for (size_t i = 0; i < d; ++i) truth.map[i * d + i] = 1.0;
  } else {
    CounterRng map_rng = root.stream("map");
    truth.map = random_orthogonal(d, map_rng);
  }
  const double second_moment =
      cfg.component_spread * cfg.component_spread + cfg.component_std * cfg.component_std;
  truth.rating_scale = 1.0 / std::sqrt(static_cast<double>(d) * second_moment);
  truth.rating_offset = 3.0;

  const size_t n_overlap = static_cast<size_t>(
      std::floor(cfg.overlap_fraction * static_cast<double>(cfg.n_users) + 0.5));
  const size_t n_side = cfg.n_users - n_overlap;
  // ids: [0, overlap) overlapping, then side-target, then side-auxiliary.
  const size_t n_total = n_overlap + 2 * n_side;

  CounterRng user_rng = root.stream("users");
  std::vector<size_t> comps;
  std::vector<Vec> latent = sample_mixture(truth.latent, n_total, user_rng, &comps);
  CounterRng map_noise = root.stream("map-noise");

  EmbeddingCorpus& emb = out.embeddings;
  emb.aux_users = EntityTable(d);
  emb.target_users = EntityTable(d);
  emb.aux_items = EntityTable(d);
  emb.target_items = EntityTable(d);

  for (size_t i = 0; i < n_total; ++i) {
    const std::string id = padded('u', i);
    truth.user_component[id] = comps[i];
    const bool in_aux = i < n_overlap || i >= n_overlap + n_side;
    const bool in_target = i < n_overlap + n_side;
    if (in_aux) emb.aux_users.set(id, latent[i]);
    if (in_target) {
      Vec t(d, 0.0);
      Vec eps(d);
      map_noise.fill_normal(eps);
      for (size_t r = 0; r < d; ++r) {
        for (size_t c = 0; c < d; ++c) t[r] += truth.map[r * d + c] * latent[i][c];
        t[r] += cfg.noise * eps[r];
      }
      emb.target_users.set(id, std::move(t));
    }
  }

  CounterRng item_rng = root.stream("items");
  for (size_t j = 0; j < cfg.n_items; ++j) {
    Vec v(d);
    item_rng.fill_normal(v);
    emb.aux_items.set(padded('a', j), v);
    item_rng.fill_normal(v);
    emb.target_items.set(padded('t', j), v);
  }

  auto make_ratings = [&](const EntityTable& users, const EntityTable& items, Domain domain,
                          std::string_view label) {
    CounterRng rng = root.stream(label);
    const auto item_ids = items.ids();
    std::vector<RatingRecord> records;
    for (const auto& [uid, u] : users.rows()) {
      for (size_t j : draw_items(item_ids.size(), cfg.ratings_per_user, cfg.popularity_exponent, rng)) {
        const Vec& v = items.at(item_ids[j]);
        double r = truth.rating_offset + truth.rating_scale * dot(u, v) + cfg.noise * rng.normal();
        r = std::clamp(r, 0.0, 5.0);
        records.push_back({uid, item_ids[j], r, domain});
      }
    }
    return DomainDataset(domain, std::move(records));
  };
  out.aux = make_ratings(emb.aux_users, emb.aux_items, Domain::kAuxiliary, "ratings-aux");
  out.target = make_ratings(emb.target_users, emb.target_items, Domain::kTarget, "ratings-target");
  return out;
}

std::string ground_truth_json(const SynthCorpus& corpus, const SynthConfig& cfg) {
  nlohmann::ordered_json j;
  j["config"] = {{"n_users", cfg.n_users},
                 {"n_items", cfg.n_items},
                 {"overlap_fraction", cfg.overlap_fraction},
                 {"embed_dim", cfg.embed_dim},
                 {"noise", cfg.noise},
                 {"ratings_per_user", cfg.ratings_per_user},
                 {"n_components", cfg.n_components},
                 {"component_spread", cfg.component_spread},
                 {"component_std", cfg.component_std},
                 {"popularity_exponent", cfg.popularity_exponent},
                 {"identity_map", cfg.identity_map},
                 {"seed", cfg.seed}};
  const auto& t = corpus.truth;
  j["mixture"] = {{"means", t.latent.means}, {"weights", t.latent.weights}, {"std", t.latent.std}};
  j["map"] = t.map;
  j["rating_offset"] = t.rating_offset;
  j["rating_scale"] = t.rating_scale;
  j["user_component"] = t.user_component;
  return j.dump(1) + "\n";
}

void write_synth_corpus(const SynthCorpus& corpus, const SynthConfig& cfg,
                        const std::filesystem::path& dir) {
  write_ratings(corpus.aux, dir / "ratings_aux.tsv");
  write_ratings(corpus.target, dir / "ratings_target.tsv");
  write_corpus(corpus.embeddings, dir / "embeddings");
  write_file(dir / "truth.json", ground_truth_json(corpus, cfg));
}

}  // namespace crossdiff
