#include "crossdiff/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "crossdiff/errors.hpp"
#include "crossdiff/hash.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

Vec first_last_avg(const HiddenStateExport& hs) {
  if (hs.tokens == 0 || hs.width == 0) {
    throw ValidationError("hidden states for " + hs.entity_id + " are empty");
  }
  const size_t n = hs.tokens * hs.width;
  if (hs.first.size() != n || hs.last.size() != n) {
    throw ValidationError("hidden states for " + hs.entity_id + ": first/last shape mismatch (" +
                          std::to_string(hs.first.size()) + ", " +
                          std::to_string(hs.last.size()) + " values for " +
                          std::to_string(hs.tokens) + "x" + std::to_string(hs.width) + ")");
  }
  Vec mean_first(hs.width, 0.0), mean_last(hs.width, 0.0);
  for (size_t i = 0; i < hs.tokens; ++i) {
    for (size_t j = 0; j < hs.width; ++j) {
      mean_first[j] += hs.first[i * hs.width + j];
      mean_last[j] += hs.last[i * hs.width + j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(hs.tokens);
  Vec out(hs.width);
  for (size_t j = 0; j < hs.width; ++j)
    out[j] = 0.5 * (mean_first[j] * inv_n + mean_last[j] * inv_n);
  return out;
}

const Vec& EntityTable::at(const std::string& id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw ValidationError("no vector for entity '" + id + "'");
  return it->second;
}

void EntityTable::set(const std::string& id, Vec row) {
  if (rows_.empty() && dim_ == 0) dim_ = row.size();
  if (row.size() != dim_) {
    throw ValidationError("entity '" + id + "' has width " + std::to_string(row.size()) +
                          ", table width is " + std::to_string(dim_));
  }
  for (double v : row)
    if (!std::isfinite(v)) throw ValidationError("entity '" + id + "' has a non-finite entry");
  rows_[id] = std::move(row);
}

std::vector<std::string> EntityTable::ids() const {
  std::vector<std::string> out;
  out.reserve(rows_.size());
  for (const auto& [id, _] : rows_) out.push_back(id);
  return out;
}

EntityTable parse_embeddings(std::string_view text, const std::string& source_name) {
  EntityTable table;
  size_t line_no = 0;
  for_each_line(text, [&](std::string_view line) {
    ++line_no;
    if (line.empty() || line.front() == '#') return;
    auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty()) {
      throw ParseError(source_name, line_no, "expected `id<TAB>v1,v2,...`");
    }
    Vec row;
    for (auto tok : split(fields[1], ',')) {
      double v = 0.0;
      if (!parse_double(tok, v)) {
        throw ParseError(source_name, line_no, "bad number '" + std::string(tok) + "'");
      }
      row.push_back(v);
    }
    try {
      table.set(std::string(fields[0]), std::move(row));
    } catch (const ValidationError& e) {
      throw ParseError(source_name, line_no, e.what());
    }
  });
  return table;
}

EntityTable read_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(read_file(path), path.string());
}

std::string format_embeddings(const EntityTable& table) {
  std::string out;
  for (const auto& [id, row] : table.rows()) {
    out += id;
    out += '\t';
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

void write_embeddings(const EntityTable& table, const std::filesystem::path& path) {
  write_file(path, format_embeddings(table));
}

namespace {
constexpr const char* kCorpusFiles[4] = {"aux_users", "aux_items", "target_users",
                                         "target_items"};

std::array<EntityTable*, 4> corpus_slots(EmbeddingCorpus& c) {
  return {&c.aux_users, &c.aux_items, &c.target_users, &c.target_items};
}
}  // namespace

EmbeddingCorpus read_corpus(const std::filesystem::path& dir) {
  EmbeddingCorpus corpus;
  auto slots = corpus_slots(corpus);
  for (size_t i = 0; i < 4; ++i) {
    auto path = dir / (std::string(kCorpusFiles[i]) + ".emb");
    if (!std::filesystem::exists(path)) throw IoError("embedding file missing: " + path.string());
    *slots[i] = read_embeddings(path);
  }
  return corpus;
}

void write_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& dir) {
  auto& c = const_cast<EmbeddingCorpus&>(corpus);
  auto slots = corpus_slots(c);
  for (size_t i = 0; i < 4; ++i)
    write_embeddings(*slots[i], dir / (std::string(kCorpusFiles[i]) + ".emb"));
}

namespace {
static_assert(std::endian::native == std::endian::little,
              "float payloads are little-endian; add byte swapping for this platform");

std::vector<double> decode_floats(std::string_view b64, size_t expected,
                                  const std::string& source, size_t line_no) {
  std::string bytes;
  try {
    bytes = base64_decode(b64);
  } catch (const ValidationError& e) {
    throw ParseError(source, line_no, e.what());
  }
  if (bytes.size() != expected * sizeof(float)) {
    throw ParseError(source, line_no,
                     "payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(expected * sizeof(float)));
  }
  std::vector<double> out(expected);
  for (size_t i = 0; i < expected; ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    out[i] = static_cast<double>(f);
  }
  return out;
}

std::string encode_floats(std::span<const double> values) {
  std::string bytes(values.size() * sizeof(float), '\0');
  for (size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(bytes.data() + i * sizeof(float), &f, sizeof(float));
  }
  return base64_encode(bytes);
}
}  // namespace

std::vector<HiddenStateExport> parse_hidden_states(std::string_view text,
                                                   const std::string& source_name) {
  std::vector<HiddenStateExport> out;
  size_t line_no = 0;
  for_each_line(text, [&](std::string_view line) {
    ++line_no;
    if (line.empty() || line.front() == '#') return;
    auto f = split(line, '\t');
    if (f.size() != 5) throw ParseError(source_name, line_no, "expected 5 tab-separated fields");
    HiddenStateExport hs;
    hs.entity_id = std::string(f[0]);
    uint64_t n = 0, d = 0;
    if (!parse_u64(f[1], n) || !parse_u64(f[2], d) || n == 0 || d == 0) {
      throw ParseError(source_name, line_no, "token count and width must be positive integers");
    }
    hs.tokens = n;
    hs.width = d;
    hs.first = decode_floats(f[3], n * d, source_name, line_no);
    hs.last = decode_floats(f[4], n * d, source_name, line_no);
    out.push_back(std::move(hs));
  });
  return out;
}

std::string format_hidden_states(std::span<const HiddenStateExport> exports) {
  std::string out;
  for (const auto& hs : exports) {
    out += hs.entity_id + '\t' + std::to_string(hs.tokens) + '\t' + std::to_string(hs.width) +
           '\t' + encode_floats(hs.first) + '\t' + encode_floats(hs.last) + '\n';
  }
  return out;
}

EntityTable pool_hidden_states(std::span<const HiddenStateExport> exports) {
  EntityTable table;
  for (const auto& hs : exports) table.set(hs.entity_id, first_last_avg(hs));
  return table;
}

EmbeddingCorpus read_hidden_state_corpus(const std::filesystem::path& dir) {
  EmbeddingCorpus corpus;
  auto slots = corpus_slots(corpus);
  for (size_t i = 0; i < 4; ++i) {
    auto path = dir / (std::string(kCorpusFiles[i]) + ".hs");
    if (!std::filesystem::exists(path)) throw IoError("hidden-state file missing: " + path.string());
    *slots[i] = pool_hidden_states(parse_hidden_states(read_file(path), path.string()));
  }
  return corpus;
}

std::string_view projector_activation_name(ProjectorActivation a) {
  switch (a) {
    case ProjectorActivation::kTanh: return "tanh";
    case ProjectorActivation::kRelu: return "relu";
    case ProjectorActivation::kSoftmax: return "softmax";
  }
  return "?";
}

ProjectorActivation parse_projector_activation(std::string_view s) {
  if (s == "tanh") return ProjectorActivation::kTanh;
  if (s == "relu") return ProjectorActivation::kRelu;
  if (s == "softmax") return ProjectorActivation::kSoftmax;
  throw ConfigError("activation must be tanh, relu or softmax, got '" + std::string(s) + "'");
}

FeatureProjector::FeatureProjector(size_t in_dim, size_t hidden_dim, size_t out_dim,
                                   ProjectorActivation act)
    : activation(act), hidden(in_dim, hidden_dim), output(hidden_dim, out_dim) {}

void FeatureProjector::init(CounterRng& rng) {
  hidden.init_uniform(rng);
  output.init_uniform(rng);
}

std::vector<TensorRef> FeatureProjector::tensors(const std::string& prefix) {
  std::vector<TensorRef> refs;
  hidden.append_tensors(prefix + ".hidden", refs);
  output.append_tensors(prefix + ".output", refs);
  return refs;
}

namespace {

void hidden_activate(ProjectorActivation a, std::span<double> v) {
  if (a == ProjectorActivation::kRelu) {
    for (double& x : v) x = x > 0.0 ? x : 0.0;
  } else {
    for (double& x : v) x = std::tanh(x);
  }
}

void output_activate(ProjectorActivation a, std::span<const double> pre, std::span<double> out) {
  switch (a) {
    case ProjectorActivation::kTanh:
      for (size_t i = 0; i < pre.size(); ++i) out[i] = std::tanh(pre[i]);
      break;
    case ProjectorActivation::kRelu:
      for (size_t i = 0; i < pre.size(); ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
      break;
    case ProjectorActivation::kSoftmax: {
      const double mx = *std::max_element(pre.begin(), pre.end());
      double z = 0.0;
      for (size_t i = 0; i < pre.size(); ++i) z += out[i] = std::exp(pre[i] - mx);
      for (double& v : out) v /= z;
      break;
    }
  }
}

void check_width(std::span<const double> raw, const FeatureProjector& proj) {
  if (raw.size() != proj.in_dim()) {
    throw ValidationError("raw embedding has width " + std::to_string(raw.size()) +
                          ", projector expects " + std::to_string(proj.in_dim()));
  }
}

}  // namespace

Vec project(std::span<const double> raw, const FeatureProjector& proj) {
  check_width(raw, proj);
  Vec h(proj.hidden.out);
  proj.hidden.forward(raw, h);
  hidden_activate(proj.activation, h);
  Vec pre(proj.output.out), out(proj.output.out);
  proj.output.forward(h, pre);
  output_activate(proj.activation, pre, out);
  return out;
}

Vec project_train(std::span<const double> raw, const FeatureProjector& proj, double dropout_rate,
                  CounterRng* rng, ProjectorRecord& r) {
  check_width(raw, proj);
  r.input.assign(raw.begin(), raw.end());
  r.hidden_act.assign(proj.hidden.out, 0.0);
  proj.hidden.forward(raw, r.hidden_act);
  hidden_activate(proj.activation, r.hidden_act);
  r.dropout_scale.assign(proj.hidden.out, 1.0);
  if (dropout_rate > 0.0 && rng != nullptr) {
    const double keep = 1.0 - dropout_rate;
    for (size_t i = 0; i < r.hidden_act.size(); ++i) {
      r.dropout_scale[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
      r.hidden_act[i] *= r.dropout_scale[i];
    }
  }
  r.output_pre.assign(proj.output.out, 0.0);
  proj.output.forward(r.hidden_act, r.output_pre);
  r.output.assign(proj.output.out, 0.0);
  output_activate(proj.activation, r.output_pre, r.output);
  return r.output;
}

void projector_backward(const FeatureProjector& proj, const ProjectorRecord& r,
                        std::span<const double> grad_output, FeatureProjector& grads) {
  const size_t out_dim = proj.output.out;
  Vec g_pre(grad_output.begin(), grad_output.end());
  switch (proj.activation) {
    case ProjectorActivation::kTanh:
      for (size_t i = 0; i < out_dim; ++i) g_pre[i] *= 1.0 - r.output[i] * r.output[i];
      break;
    case ProjectorActivation::kRelu:
      for (size_t i = 0; i < out_dim; ++i) g_pre[i] *= r.output_pre[i] > 0.0 ? 1.0 : 0.0;
      break;
    case ProjectorActivation::kSoftmax: {
      double s = 0.0;
      for (size_t i = 0; i < out_dim; ++i) s += grad_output[i] * r.output[i];
      for (size_t i = 0; i < out_dim; ++i) g_pre[i] = r.output[i] * (grad_output[i] - s);
      break;
    }
  }
  Vec g_h(proj.hidden.out, 0.0);
  proj.output.backward(r.hidden_act, g_pre, grads.output, g_h);
  for (size_t i = 0; i < g_h.size(); ++i) {
    g_h[i] *= r.dropout_scale[i];
    if (r.dropout_scale[i] == 0.0) continue;
    // Undo the dropout scale to recover the pre-dropout activation.
    const double a = r.hidden_act[i] / r.dropout_scale[i];
    if (proj.activation == ProjectorActivation::kRelu) {
      g_h[i] *= a > 0.0 ? 1.0 : 0.0;
    } else {
      g_h[i] *= 1.0 - a * a;
    }
  }
  proj.hidden.backward(r.input, g_h, grads.hidden, {});
}

EntityTable project_table(const EntityTable& raw, const FeatureProjector& proj) {
  EntityTable out(proj.out_dim());
  for (const auto& [id, row] : raw.rows()) out.set(id, project(row, proj));
  return out;
}

double rating_mse(const DomainDataset& data, const EntityTable& users, const EntityTable& items) {
  if (data.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& r : data.records()) {
    const double d = dot(users.at(r.user_id), items.at(r.item_id)) - r.rating;
    acc += d * d;
  }
  return acc / static_cast<double>(data.records().size());
}

namespace {

void require_embeddings(const DomainDataset& data, const EntityTable& users,
                        const EntityTable& items) {
  std::vector<std::string> missing;
  for (const auto& u : data.users())
    if (!users.contains(u)) missing.push_back("user " + u);
  for (const auto& v : data.items())
    if (!items.contains(v)) missing.push_back("item " + v);
  if (missing.empty()) return;
  std::string msg = std::string(domain_name(data.domain())) + " domain: missing embeddings for ";
  for (size_t i = 0; i < missing.size() && i < 20; ++i) msg += (i ? ", " : "") + missing[i];
  if (missing.size() > 20) msg += ", ... (" + std::to_string(missing.size()) + " total)";
  throw ValidationError(msg);
}

}  // namespace

DomainProjectors pretrain_domain(const DomainDataset& data, const EntityTable& user_raw,
                                 const EntityTable& item_raw, const PretrainConfig& cfg,
                                 std::string_view stream_label) {
  if (data.empty()) throw ValidationError("cannot pretrain projectors on an empty dataset");
  if (cfg.batch_size == 0 || cfg.epochs == 0) {
    throw ConfigError("pretraining epochs and batch size must be positive");
  }
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  require_embeddings(data, user_raw, item_raw);

  CounterRng root = CounterRng(cfg.seed).stream(stream_label);
  CounterRng init_rng = root.stream("init");
  DomainProjectors out;
  out.user = FeatureProjector(user_raw.dim(), cfg.hidden_dim, cfg.feature_dim, cfg.activation);
  out.item = FeatureProjector(item_raw.dim(), cfg.hidden_dim, cfg.feature_dim, cfg.activation);
  out.user.init(init_rng);
  out.item.init(init_rng);

  auto evaluate = [&] {
    return rating_mse(data, project_table(user_raw, out.user), project_table(item_raw, out.item));
  };
  out.initial_loss = evaluate();

  const auto& records = data.records();
  std::vector<size_t> order(records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  AdamState adam;
  FeatureProjector g_user = out.user, g_item = out.item;
  CounterRng shuffle_rng = root.stream("shuffle");
  CounterRng dropout_rng = root.stream("dropout");

  std::map<std::string, ProjectorRecord> user_rec, item_rec;
  std::map<std::string, Vec> user_grad, item_grad;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.below(i + 1)]);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 2.0 / static_cast<double>(end - start);
      user_rec.clear();
      item_rec.clear();
      user_grad.clear();
      item_grad.clear();
      // Forward each distinct entity once; the map keeps a fixed id order.
      for (size_t k = start; k < end; ++k) {
        const auto& r = records[order[k]];
        user_rec.try_emplace(r.user_id);
        item_rec.try_emplace(r.item_id);
      }
      for (auto& [id, rec] : user_rec)
        project_train(user_raw.at(id), out.user, cfg.dropout, &dropout_rng, rec);
      for (auto& [id, rec] : item_rec)
        project_train(item_raw.at(id), out.item, cfg.dropout, &dropout_rng, rec);
      for (size_t k = start; k < end; ++k) {
        const auto& r = records[order[k]];
        const Vec& fu = user_rec[r.user_id].output;
        const Vec& fv = item_rec[r.item_id].output;
        const double err = scale * (dot(fu, fv) - r.rating);
        Vec& gu = user_grad.try_emplace(r.user_id, fu.size(), 0.0).first->second;
        Vec& gv = item_grad.try_emplace(r.item_id, fv.size(), 0.0).first->second;
        for (size_t j = 0; j < fu.size(); ++j) {
          gu[j] += err * fv[j];
          gv[j] += err * fu[j];
        }
      }
      g_user.hidden.zero();
      g_user.output.zero();
      g_item.hidden.zero();
      g_item.output.zero();
      for (auto& [id, g] : user_grad) projector_backward(out.user, user_rec[id], g, g_user);
      for (auto& [id, g] : item_grad) projector_backward(out.item, item_rec[id], g, g_item);

      auto params = out.user.tensors("user");
      auto item_params = out.item.tensors("item");
      params.insert(params.end(), item_params.begin(), item_params.end());
      std::vector<ConstTensorRef> grads;
      for (auto& t : g_user.tensors("user")) grads.push_back({t.name, t.shape, t.data});
      for (auto& t : g_item.tensors("item")) grads.push_back({t.name, t.shape, t.data});
      adam_step(params, grads, adam, cfg.lr);
    }
  }
  out.final_loss = evaluate();
  return out;
}

PretrainedModel pretrain_projectors(const DomainDataset& aux, const DomainDataset& target_train,
                                    const EmbeddingCorpus& corpus, const PretrainConfig& cfg,
                                    const DomainProjectors* cached_aux) {
  PretrainedModel m;
  m.aux = cached_aux ? *cached_aux
                     : pretrain_domain(aux, corpus.aux_users, corpus.aux_items, cfg,
                                       "pretrain/auxiliary");
  m.target = pretrain_domain(target_train, corpus.target_users, corpus.target_items, cfg,
                             "pretrain/target");
  auto& t = m.tables;
  t.aux_users = project_table(corpus.aux_users, m.aux.user);
  t.aux_items = project_table(corpus.aux_items, m.aux.item);
  t.target_items = project_table(corpus.target_items, m.target.item);
  t.target_users = EntityTable(cfg.feature_dim);
  t.heldout_target_users = EntityTable(cfg.feature_dim);
  for (const auto& [id, raw] : corpus.target_users.rows()) {
    auto& dest = target_train.users().contains(id) ? t.target_users : t.heldout_target_users;
    dest.set(id, project(raw, m.target.user));
  }
  for (EntityTable* table : {&t.aux_users, &t.aux_items, &t.target_users, &t.target_items,
                             &t.heldout_target_users}) {
    table->round_values();
  }
  t.aux_initial_loss = m.aux.initial_loss;
  t.aux_final_loss = m.aux.final_loss;
  t.target_initial_loss = m.target.initial_loss;
  t.target_final_loss = m.target.final_loss;
  return m;
}

EmbeddingCorpus random_corpus_like(const EmbeddingCorpus& corpus, uint64_t seed) {
  CounterRng root = CounterRng(seed).stream("random-corpus");
  EmbeddingCorpus out;
  auto fill = [&](const EntityTable& like, EntityTable& dest, std::string_view label) {
    CounterRng rng = root.stream(label);
    dest = EntityTable(like.dim());
    for (const auto& [id, row] : like.rows()) {
      Vec v(row.size());
      rng.fill_normal(v);
      dest.set(id, std::move(v));
    }
  };
  fill(corpus.aux_users, out.aux_users, "aux_users");
  fill(corpus.aux_items, out.aux_items, "aux_items");
  fill(corpus.target_users, out.target_users, "target_users");
  fill(corpus.target_items, out.target_items, "target_items");
  return out;
}

}  // namespace crossdiff
