#include "crossdiff/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "crossdiff/errors.hpp"
#include "crossdiff/hash.hpp"
#include "crossdiff/rng.hpp"
#include "crossdiff/text_io.hpp"

namespace crossdiff {

std::string_view domain_name(Domain d) {
  return d == Domain::kAuxiliary ? "auxiliary" : "target";
}

std::string_view role_name(Role r) {
  switch (r) {
    case Role::kOverlapping: return "overlapping";
    case Role::kSideTarget: return "side_target";
    case Role::kSideAuxiliary: return "side_auxiliary";
    case Role::kColdStart: return "cold_start";
  }
  return "?";
}

DomainDataset::DomainDataset(Domain domain, std::vector<RatingRecord> records)
    : domain_(domain) {
  for (const auto& r : records) {
    if (!(r.rating >= 0.0 && r.rating <= 5.0)) {
      throw ValidationError("rating out of [0,5] for (" + r.user_id + ", " + r.item_id +
                            "): " + format_double(r.rating));
    }
  }
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.user_id, a.item_id) < std::tie(b.user_id, b.item_id);
  });
  records.erase(std::unique(records.begin(), records.end(),
                            [](const auto& a, const auto& b) {
                              return a.user_id == b.user_id && a.item_id == b.item_id;
                            }),
                records.end());
  for (auto& r : records) r.domain = domain;
  records_ = std::move(records);
  for (size_t i = 0; i < records_.size();) {
    size_t j = i;
    while (j < records_.size() && records_[j].user_id == records_[i].user_id) {
      items_.insert(records_[j].item_id);
      ++j;
    }
    users_.insert(records_[i].user_id);
    user_ranges_[records_[i].user_id] = {i, j};
    i = j;
  }
}

std::span<const RatingRecord> DomainDataset::user_records(const std::string& user) const {
  auto it = user_ranges_.find(user);
  if (it == user_ranges_.end()) return {};
  return std::span<const RatingRecord>(records_).subspan(
      it->second.first, it->second.second - it->second.first);
}

std::string DomainDataset::content_hash() const {
  return hash_hex(std::string(domain_name(domain_)) + "\n" + format_ratings(*this));
}

DomainDataset parse_ratings(std::string_view text, Domain domain,
                            const std::string& source_name, const IngestOptions& options) {
  std::vector<RatingRecord> records;
  size_t line_no = 0;
  for_each_line(text, [&](std::string_view line) {
    ++line_no;
    if (line.empty() || line.front() == '#') return;
    auto fields = split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(source_name, line_no,
                       "expected 3 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError(source_name, line_no, "empty user or item id");
    }
    double rating = 0.0;
    if (!parse_double(fields[2], rating)) {
      throw ParseError(source_name, line_no, "rating is not a number: '" +
                                                 std::string(fields[2]) + "'");
    }
    if (!(rating >= 0.0 && rating <= 5.0)) {
      throw ValidationError(source_name + ":" + std::to_string(line_no) +
                            ": rating " + std::string(fields[2]) + " outside [0,5]");
    }
    records.push_back({std::string(fields[0]), std::string(fields[1]), rating, domain});
  });
  DomainDataset data(domain, std::move(records));
  if (options.min_interactions > 0) {
    data = data.filter_users([&](const std::string& u) {
      return data.user_records(u).size() >= options.min_interactions;
    });
  }
  return data;
}

DomainDataset ingest_ratings(const std::filesystem::path& path, Domain domain,
                             const IngestOptions& options) {
  return parse_ratings(read_file(path), domain, path.string(), options);
}

std::string format_ratings(const DomainDataset& data) {
  std::string out;
  for (const auto& r : data.records()) {
    out += r.user_id;
    out += '\t';
    out += r.item_id;
    out += '\t';
    out += format_double(r.rating);
    out += '\n';
  }
  return out;
}

void write_ratings(const DomainDataset& data, const std::filesystem::path& path) {
  write_file(path, format_ratings(data));
}

std::vector<std::string> RoleAssignment::with_role(Role r) const {
  std::vector<std::string> out;
  for (const auto& [user, role] : roles)
    if (role == r) out.push_back(user);
  return out;
}

size_t RoleAssignment::count(Role r) const {
  return static_cast<size_t>(std::count_if(roles.begin(), roles.end(),
                                           [r](const auto& kv) { return kv.second == r; }));
}

RoleAssignment assign_roles(const DomainDataset& aux, const DomainDataset& tgt) {
  RoleAssignment out;
  for (const auto& u : aux.users())
    out.roles[u] = tgt.users().contains(u) ? Role::kOverlapping : Role::kSideAuxiliary;
  for (const auto& u : tgt.users())
    if (!aux.users().contains(u)) out.roles[u] = Role::kSideTarget;
  return out;
}

size_t cold_start_count(double beta, size_t n_overlapping) {
  return static_cast<size_t>(std::floor(beta * static_cast<double>(n_overlapping) + 0.5));
}

ColdStartSplit split_cold_start(const RoleAssignment& roles, const SplitSpec& spec) {
  if (!(spec.beta > 0.0 && spec.beta < 1.0)) {
    throw ValidationError("split beta must lie in (0,1), got " + format_double(spec.beta));
  }
  std::vector<std::string> overlap = roles.with_role(Role::kOverlapping);
  if (overlap.size() < 2) {
    throw DegenerateSplitError("need at least 2 overlapping users, have " +
                               std::to_string(overlap.size()));
  }
  const size_t n_test = cold_start_count(spec.beta, overlap.size());
  if (n_test == 0 || n_test == overlap.size()) {
    throw DegenerateSplitError("beta=" + format_double(spec.beta) + " over " +
                               std::to_string(overlap.size()) + " overlapping users gives " +
                               std::to_string(n_test) + " test users");
  }
  // std::map iteration already yields lexicographic order. Fisher-Yates from
  // the back.
  CounterRng rng = CounterRng(spec.seed).stream("split");
  for (size_t i = overlap.size() - 1; i > 0; --i) {
    const size_t j = rng.below(i + 1);
    std::swap(overlap[i], overlap[j]);
  }
  ColdStartSplit split;
  split.test_cold.assign(overlap.begin(), overlap.begin() + static_cast<long>(n_test));
  split.train_overlap.assign(overlap.begin() + static_cast<long>(n_test), overlap.end());
  std::sort(split.test_cold.begin(), split.test_cold.end());
  std::sort(split.train_overlap.begin(), split.train_overlap.end());
  return split;
}

RoleAssignment apply_split(const RoleAssignment& roles, const ColdStartSplit& split) {
  RoleAssignment out = roles;
  for (const auto& u : split.test_cold) {
    auto it = out.roles.find(u);
    if (it == out.roles.end() || it->second != Role::kOverlapping) {
      throw ValidationError("cold-start user " + u + " is not an overlapping user");
    }
    it->second = Role::kColdStart;
  }
  return out;
}

std::vector<RatingRecord> dual_cold_start_subset(std::span<const RatingRecord> test_records,
                                                 const std::set<std::string>& train_items) {
  std::vector<RatingRecord> out;
  for (const auto& r : test_records)
    if (!train_items.contains(r.item_id)) out.push_back(r);
  return out;
}

}  // namespace crossdiff
