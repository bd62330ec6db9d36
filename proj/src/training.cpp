#include "crossdiff/training.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"

#include "crossdiff/errors.hpp"
#include "crossdiff/hash.hpp"
#include "crossdiff/kernels.hpp"
#include "crossdiff/losses.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (cfg.epochs_stage1 == 0 || cfg.epochs_stage2 == 0) {
    throw ConfigError("epochs per stage must be positive");
  }
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  if (cfg.draws_per_user == 0) throw ConfigError("draws_per_user must be positive");
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0,1], got " + format_double(cfg.lambda));
  }
  if (cfg.steps == 0) throw ConfigError("diffusion steps must be positive");
  if (!(cfg.beta_start > 0.0 && cfg.beta_start <= cfg.beta_end && cfg.beta_end < 1.0)) {
    throw ConfigError("beta schedule needs 0 < beta_start <= beta_end < 1");
  }
}

size_t TrainingLog::updates(uint8_t stage) const {
  return static_cast<size_t>(std::count(update_stages.begin(), update_stages.end(), stage));
}

namespace {

void run_batch(const DenoiserParams& params, std::span<const DiffusionExample> batch,
               const NoiseSchedule& sched, double lambda, bool want_item_grads, bool parallel,
               GradientWorkspace& ws, BatchResult& out) {
  if (parallel) {
    parallel::batch_gradient(params, batch, sched, lambda, want_item_grads, ws, out);
  } else {
    reference::batch_gradient(params, batch, sched, lambda, want_item_grads, ws, out);
  }
}

void apply_adam(DenoiserParams& params, const DenoiserParams& grads, AdamState& adam, double lr) {
  const auto p = params.tensors();
  const auto g = grads.tensors();
  adam_step(p, g, adam, lr);
}

void shuffle(std::vector<size_t>& order, CounterRng rng) {
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

void check_dim(const EntityTable& table, const DenoiserParams& params, const char* what) {
  if (!table.empty() && table.dim() != params.config.feature_dim) {
    throw ValidationError(std::string(what) + " have width " + std::to_string(table.dim()) +
                          ", denoiser expects " + std::to_string(params.config.feature_dim));
  }
}

/// Per-epoch (t, eps) draws for every example slot, generated serially so the
/// stream layout never depends on threading.
struct NoiseDraws {
  std::vector<size_t> t;
  std::vector<double> eps;

  void draw(size_t n, size_t dim, size_t steps, CounterRng rng) {
    t.resize(n);
    eps.resize(n * dim);
    for (size_t k = 0; k < n; ++k) {
      t[k] = 1 + static_cast<size_t>(rng.below(steps));
      rng.fill_normal(std::span<double>(eps).subspan(k * dim, dim));
    }
  }
};

}  // namespace

void train_stage1_side(DenoiserParams& params, const EntityTable& side_target,
                       const NoiseSchedule& sched, const TrainConfig& cfg, TrainingLog& log) {
  validate(cfg);
  if (side_target.empty()) {
    throw ConfigError("stage 1 needs at least one side user with a target feature; "
                      "set no_side to skip it");
  }
  check_dim(side_target, params, "side-user features");
  const size_t dim = params.config.feature_dim;
  std::vector<const Vec*> users;
  for (const auto& [_, row] : side_target.rows()) users.push_back(&row);
  const size_t n_ex = users.size() * cfg.draws_per_user;

  const CounterRng root = CounterRng(cfg.seed).stream("train/stage1");
  AdamState adam;
  GradientWorkspace ws;
  BatchResult result;
  NoiseDraws draws;
  std::vector<size_t> order(n_ex);
  std::vector<DiffusionExample> batch;
  for (size_t epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle(order, root.stream("shuffle", epoch));
    draws.draw(n_ex, dim, sched.steps(), root.stream("noise", epoch));
    double epoch_loss = 0.0;
    for (size_t start = 0; start < n_ex; start += cfg.batch_size) {
      const size_t end = std::min(n_ex, start + cfg.batch_size);
      batch.clear();
      for (size_t k = start; k < end; ++k) {
        DiffusionExample ex;
        ex.x0 = *users[order[k] % users.size()];
        ex.t = draws.t[k];
        ex.eps = std::span<const double>(draws.eps).subspan(k * dim, dim);
        batch.push_back(ex);
      }
      run_batch(params, batch, sched, 1.0, false, cfg.parallel, ws, result);
      apply_adam(params, result.grads, adam, cfg.lr);
      log.update_stages.push_back(1);
      epoch_loss += result.loss_total * static_cast<double>(end - start);
    }
    log.stage1_loss.push_back(epoch_loss / static_cast<double>(n_ex));
  }
}

namespace {

struct OverlapUser {
  const Vec* aux = nullptr;
  const Vec* target = nullptr;
  std::span<const RatingRecord> ratings;
};

std::vector<OverlapUser> overlap_users(const TrainingInputs& in) {
  std::vector<OverlapUser> users;
  for (const auto& [id, target] : in.overlap_target.rows()) {
    if (!in.overlap_aux.contains(id)) {
      throw ValidationError("overlapping user '" + id + "' lacks an auxiliary feature");
    }
    OverlapUser u;
    u.aux = &in.overlap_aux.at(id);
    u.target = &target;
    u.ratings = in.overlap_ratings.user_records(id);
    users.push_back(u);
  }
  return users;
}

}  // namespace

void train_stage2_overlap(DenoiserParams& params, TrainingInputs& inputs,
                          const NoiseSchedule& sched, const TrainConfig& cfg, TrainingLog& log) {
  validate(cfg);
  check_lambda(cfg.lambda);
  if (inputs.overlap_target.empty()) {
    throw ConfigError("stage 2 needs at least one training overlapping user");
  }
  check_dim(inputs.overlap_target, params, "overlap target features");
  check_dim(inputs.overlap_aux, params, "overlap auxiliary features");
  check_dim(inputs.target_items, params, "item features");
  const bool cotrain = cfg.cotrain_items;
  if (cotrain && !inputs.item_projector) {
    throw ConfigError("cotrain_items needs the target item projector");
  }
  const auto users = overlap_users(inputs);
  for (const auto& u : users)
    for (const auto& r : u.ratings)
      if (!(cotrain ? inputs.item_raw.contains(r.item_id) : inputs.target_items.contains(r.item_id)))
        throw ValidationError("no feature for target item '" + r.item_id + "'");

  const size_t dim = params.config.feature_dim;
  const size_t n_ex = users.size() * cfg.draws_per_user;
  const CounterRng root = CounterRng(cfg.seed).stream("train/stage2");

  AdamState adam, item_adam;
  GradientWorkspace ws;
  BatchResult result;
  NoiseDraws draws;
  std::vector<size_t> order(n_ex);
  std::vector<DiffusionExample> batch;
  std::vector<std::vector<RatingTerm>> terms;
  std::map<std::string, ProjectorRecord> item_rec;
  std::map<std::string, Vec> item_grad;
  FeatureProjector item_grads_acc;
  if (cotrain) item_grads_acc = *inputs.item_projector;

  for (size_t epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    shuffle(order, root.stream("shuffle", epoch));
    draws.draw(n_ex, dim, sched.steps(), root.stream("noise", epoch));
    double sum_total = 0.0, sum_dm = 0.0, sum_rating = 0.0;
    for (size_t start = 0; start < n_ex; start += cfg.batch_size) {
      const size_t end = std::min(n_ex, start + cfg.batch_size);
      if (cotrain) {
        item_rec.clear();
        for (size_t k = start; k < end; ++k)
          for (const auto& r : users[order[k] % users.size()].ratings) item_rec.try_emplace(r.item_id);
        for (auto& [id, rec] : item_rec)
          project_train(inputs.item_raw.at(id), *inputs.item_projector, 0.0, nullptr, rec);
      }
      batch.clear();
      terms.assign(end - start, {});
      for (size_t k = start; k < end; ++k) {
        const OverlapUser& u = users[order[k] % users.size()];
        auto& ts = terms[k - start];
        for (const auto& r : u.ratings) {
          const Vec& fv = cotrain ? item_rec.at(r.item_id).output : inputs.target_items.at(r.item_id);
          ts.push_back({fv, r.rating});
        }
        DiffusionExample ex;
        ex.x0 = *u.target;
        ex.cond = *u.aux;
        ex.t = draws.t[k];
        ex.eps = std::span<const double>(draws.eps).subspan(k * dim, dim);
        ex.ratings = ts;
        batch.push_back(ex);
      }
      run_batch(params, batch, sched, cfg.lambda, cotrain, cfg.parallel, ws, result);
      apply_adam(params, result.grads, adam, cfg.lr);
      log.update_stages.push_back(2);

      if (cotrain) {
        item_grad.clear();
        for (size_t b = 0; b < batch.size(); ++b) {
          const OverlapUser& u = users[order[start + b] % users.size()];
          for (size_t j = 0; j < u.ratings.size(); ++j) {
            const Vec& g = result.item_grads[b][j];
            Vec& acc = item_grad.try_emplace(u.ratings[j].item_id, dim, 0.0).first->second;
            for (size_t i = 0; i < dim; ++i) acc[i] += g[i];
          }
        }
        item_grads_acc.hidden.zero();
        item_grads_acc.output.zero();
        for (const auto& [id, g] : item_grad)
          projector_backward(*inputs.item_projector, item_rec.at(id), g, item_grads_acc);
        const auto p = inputs.item_projector->tensors("item");
        std::vector<ConstTensorRef> g;
        for (auto& t : item_grads_acc.tensors("item")) g.push_back({t.name, t.shape, t.data});
        adam_step(p, g, item_adam, cfg.lr);
      }

      const double w = static_cast<double>(end - start);
      sum_total += result.loss_total * w;
      sum_dm += result.loss_dm * w;
      sum_rating += result.loss_rating * w;
    }
    const double n = static_cast<double>(n_ex);
    log.stage2_loss.push_back(sum_total / n);
    log.stage2_dm.push_back(sum_dm / n);
    log.stage2_rating.push_back(sum_rating / n);
  }

  if (cotrain) {
    inputs.target_items = project_table(inputs.item_raw, *inputs.item_projector);
    inputs.target_items.round_values();
  }
}

double stage2_objective(const DenoiserParams& params, const TrainingInputs& inputs,
                        const NoiseSchedule& sched, double lambda, uint64_t seed) {
  check_lambda(lambda);
  const auto users = overlap_users(inputs);
  if (users.empty()) throw ValidationError("no overlapping users to evaluate");
  const size_t dim = params.config.feature_dim;
  const CounterRng root = CounterRng(seed).stream("objective");
  double dm = 0.0, sq = 0.0;
  size_t n_ratings = 0;
  Vec eps(dim);
  for (size_t i = 0; i < users.size(); ++i) {
    CounterRng rng = root.stream("user", i);
    const size_t t = 1 + static_cast<size_t>(rng.below(sched.steps()));
    rng.fill_normal(eps);
    const Vec x_t = q_sample(*users[i].target, t, eps, sched);
    const Vec x0_hat = denoise_forward(params, x_t, t, *users[i].aux);
    dm += loss_dm(*users[i].target, x0_hat);
    for (const auto& r : users[i].ratings) {
      const double d = dot(x0_hat, inputs.target_items.at(r.item_id)) - r.rating;
      sq += d * d;
      ++n_ratings;
    }
  }
  dm /= static_cast<double>(users.size());
  if (n_ratings == 0) return lambda * dm;
  return loss_joint(dm, sq / static_cast<double>(n_ratings), lambda);
}

std::string features_hash(const TrainingInputs& inputs) {
  std::string blob;
  for (const EntityTable* t : {&inputs.side_target, &inputs.overlap_aux, &inputs.overlap_target,
                               &inputs.target_items}) {
    blob += format_embeddings(*t);
    blob += '\x1e';
  }
  return hash_hex(blob);
}

Checkpoint train(TrainingInputs inputs, const TrainConfig& cfg, TrainingLog* log) {
  validate(cfg);
  TrainingLog local_log;
  TrainingLog& lg = log ? *log : local_log;
  const NoiseSchedule sched = build_schedule(cfg.steps, cfg.beta_start, cfg.beta_end);

  Checkpoint ckpt;
  ckpt.steps = cfg.steps;
  ckpt.beta_start = cfg.beta_start;
  ckpt.beta_end = cfg.beta_end;
  ckpt.mean_param = cfg.mean_param;
  ckpt.seed = cfg.seed;
  ckpt.n_side = inputs.side_target.size();
  ckpt.n_overlap = inputs.overlap_target.size();
  ckpt.n_ratings = inputs.overlap_ratings.records().size();
  ckpt.dataset_hash = inputs.overlap_ratings.content_hash();
  ckpt.features_hash = features_hash(inputs);

  CounterRng init_rng = CounterRng(cfg.seed).stream("train/init");
  ckpt.params = DenoiserParams::random(cfg.denoiser, init_rng);

  if (cfg.no_diffusion) {
    ckpt.identity_transfer = true;
    ckpt.stage1_skipped = true;
  } else {
    if (cfg.no_side) {
      ckpt.stage1_skipped = true;
    } else {
      train_stage1_side(ckpt.params, inputs.side_target, sched, cfg, lg);
    }
    train_stage2_overlap(ckpt.params, inputs, sched, cfg, lg);
    if (cfg.cotrain_items) ckpt.item_features = inputs.target_items;
  }
  for (auto& t : ckpt.params.tensors()) round_to_float(t.data);
  return ckpt;
}

namespace {

using Json = nlohmann::ordered_json;

Json denoiser_json(const DenoiserConfig& c) {
  return Json{{"feature_dim", c.feature_dim},
              {"temb_dim", c.temb_dim},
              {"temb_out", c.temb_out},
              {"down_dim", c.down_dim},
              {"mid_dim", c.mid_dim},
              {"cond_inject", std::string(cond_inject_name(c.cond_inject))},
              {"activation", std::string(block_activation_name(c.activation))}};
}

DenoiserConfig denoiser_from_json(const Json& j) {
  DenoiserConfig c;
  c.feature_dim = j.at("feature_dim").get<size_t>();
  c.temb_dim = j.at("temb_dim").get<size_t>();
  c.temb_out = j.at("temb_out").get<size_t>();
  c.down_dim = j.at("down_dim").get<size_t>();
  c.mid_dim = j.at("mid_dim").get<size_t>();
  c.cond_inject = parse_cond_inject(j.at("cond_inject").get<std::string>());
  c.activation = parse_block_activation(j.at("activation").get<std::string>());
  return c;
}

}  // namespace

TensorFile checkpoint_to_file(const Checkpoint& ckpt) {
  Json m;
  m["kind"] = "checkpoint";
  m["denoiser"] = denoiser_json(ckpt.params.config);
  m["schedule"] = {{"steps", ckpt.steps}, {"beta_start", ckpt.beta_start}, {"beta_end", ckpt.beta_end}};
  m["mean_param"] = std::string(mean_param_name(ckpt.mean_param));
  m["identity_transfer"] = ckpt.identity_transfer;
  m["stage1_skipped"] = ckpt.stage1_skipped;
  m["counts"] = {{"side_users", ckpt.n_side},
                 {"overlap_users", ckpt.n_overlap},
                 {"ratings", ckpt.n_ratings}};
  m["dataset_hash"] = ckpt.dataset_hash;
  m["features_hash"] = ckpt.features_hash;
  m["seed"] = ckpt.seed;
  m["config"] = ckpt.config_echo;

  TensorFile file;
  for (const auto& t : ckpt.params.tensors()) {
    file.tensors.push_back({t.name, t.shape, Vec(t.data.begin(), t.data.end())});
  }
  if (ckpt.item_features) {
    std::vector<std::string> ids;
    file.tensors.push_back(table_tensor("item_features", *ckpt.item_features, ids));
    m["item_ids"] = ids;
  }
  file.manifest = m.dump();
  return file;
}

Checkpoint checkpoint_from_file(const TensorFile& file, const std::string& source_name) {
  Json m;
  try {
    m = Json::parse(file.manifest);
  } catch (const Json::exception& e) {
    throw ParseError(source_name, 0, std::string("bad manifest: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    if (m.at("kind") != "checkpoint") throw ParseError(source_name, 0, "not a checkpoint");
    ckpt.params = DenoiserParams(denoiser_from_json(m.at("denoiser")));
    const auto& s = m.at("schedule");
    ckpt.steps = s.at("steps").get<size_t>();
    ckpt.beta_start = s.at("beta_start").get<double>();
    ckpt.beta_end = s.at("beta_end").get<double>();
    ckpt.mean_param = parse_mean_param(m.at("mean_param").get<std::string>());
    ckpt.identity_transfer = m.at("identity_transfer").get<bool>();
    ckpt.stage1_skipped = m.at("stage1_skipped").get<bool>();
    ckpt.n_side = m.at("counts").at("side_users").get<size_t>();
    ckpt.n_overlap = m.at("counts").at("overlap_users").get<size_t>();
    ckpt.n_ratings = m.at("counts").at("ratings").get<size_t>();
    ckpt.dataset_hash = m.at("dataset_hash").get<std::string>();
    ckpt.features_hash = m.at("features_hash").get<std::string>();
    ckpt.seed = m.at("seed").get<uint64_t>();
    ckpt.config_echo = m.at("config").get<std::map<std::string, std::string>>();
    if (m.contains("item_ids")) {
      ckpt.item_features = tensor_table(file.find("item_features"),
                                        m.at("item_ids").get<std::vector<std::string>>());
    }
  } catch (const Json::exception& e) {
    throw ParseError(source_name, 0, std::string("bad manifest: ") + e.what());
  }
  for (auto& t : ckpt.params.tensors()) {
    const NamedTensor& stored = file.find(t.name);
    if (stored.shape != t.shape) {
      throw ValidationError(source_name + ": tensor '" + t.name + "' has the wrong shape");
    }
    std::copy(stored.data.begin(), stored.data.end(), t.data.begin());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_tensor_file(checkpoint_to_file(ckpt), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_file(read_tensor_file(path), path.string());
}

}  // namespace crossdiff
