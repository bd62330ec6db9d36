#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace crossdiff {

enum class Domain { kAuxiliary, kTarget };

std::string_view domain_name(Domain d);

struct RatingRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  Domain domain = Domain::kTarget;
};

/// Ratings of one domain. Records are sorted by (user, item) and unique; the
/// user and item sets are exactly those referenced by the records.
class DomainDataset {
 public:
  DomainDataset() = default;
  /// Validates ratings, drops duplicate (user, item) pairs keeping the first
  /// occurrence, and sorts.
  DomainDataset(Domain domain, std::vector<RatingRecord> records);

  Domain domain() const { return domain_; }
  const std::vector<RatingRecord>& records() const { return records_; }
  const std::set<std::string>& users() const { return users_; }
  const std::set<std::string>& items() const { return items_; }
  bool empty() const { return records_.empty(); }

  /// Records of one user, contiguous because records are sorted by user.
  std::span<const RatingRecord> user_records(const std::string& user) const;

  /// Copy restricted to users for which keep(user) is true.
  template <typename Pred>
  DomainDataset filter_users(Pred keep) const {
    std::vector<RatingRecord> kept;
    for (const auto& r : records_)
      if (keep(r.user_id)) kept.push_back(r);
    return DomainDataset(domain_, std::move(kept));
  }

  /// Stable content hash (hex BLAKE2b-64) over the canonical TSV form.
  std::string content_hash() const;

 private:
  Domain domain_ = Domain::kTarget;
  std::vector<RatingRecord> records_;
  std::set<std::string> users_;
  std::set<std::string> items_;
  std::map<std::string, std::pair<size_t, size_t>> user_ranges_;
};

struct IngestOptions {
  /// Users with fewer records are dropped; 0 disables the filter.
  size_t min_interactions = 0;
};

/// Parses `user \t item \t rating` lines; `#` lines and blank lines skipped.
DomainDataset ingest_ratings(const std::filesystem::path& path, Domain domain,
                             const IngestOptions& options = {});
DomainDataset parse_ratings(std::string_view text, Domain domain,
                            const std::string& source_name,
                            const IngestOptions& options = {});
void write_ratings(const DomainDataset& data, const std::filesystem::path& path);
std::string format_ratings(const DomainDataset& data);

enum class Role { kOverlapping, kSideTarget, kSideAuxiliary, kColdStart };

std::string_view role_name(Role r);

struct RoleAssignment {
  std::map<std::string, Role> roles;

  std::vector<std::string> with_role(Role r) const;
  size_t count(Role r) const;
};

RoleAssignment assign_roles(const DomainDataset& aux, const DomainDataset& tgt);

struct SplitSpec {
  double beta = 0.2;
  uint64_t seed = 0;
};

struct ColdStartSplit {
  std::vector<std::string> train_overlap;  // sorted
  std::vector<std::string> test_cold;      // sorted
};

/// Number of test users: floor(beta * n + 0.5).
size_t cold_start_count(double beta, size_t n_overlapping);

/// Shuffles the sorted overlapping users with the "split" stream of the seed
/// and takes the first cold_start_count() as test users.
ColdStartSplit split_cold_start(const RoleAssignment& roles, const SplitSpec& spec);

/// Roles after the split: test users become kColdStart.
RoleAssignment apply_split(const RoleAssignment& roles, const ColdStartSplit& split);

std::vector<RatingRecord> dual_cold_start_subset(
    std::span<const RatingRecord> test_records, const std::set<std::string>& train_items);

}  // namespace crossdiff
