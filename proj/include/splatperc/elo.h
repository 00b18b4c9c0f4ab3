// Copyright 2026 The splatperc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef SPLATPERC_ELO_H_
#define SPLATPERC_ELO_H_

// Pairwise preference votes and their Bradley-Terry rating.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace splatperc {

enum class Winner { kA, kB };

struct VoteRecord {
  std::string trial_id;
  std::string method_a;
  std::string method_b;
  std::string crop_id;
  Winner winner = Winner::kA;
  std::string rater_id;
  int64_t time = 0;

  bool operator==(const VoteRecord&) const = default;
};

inline constexpr int kVoteSchemaVersion = 1;

void to_json(nlohmann::json& j, const VoteRecord& v);
void from_json(const nlohmann::json& j, VoteRecord& v);

// Elo per unit of latent skill, 400 / ln 10.
inline constexpr double kEloPerTheta = 173.71779276130073;
inline constexpr double kAnchorElo = 1000.0;

struct MethodRating {
  std::string method;
  double theta = 0.0;
  double elo = kAnchorElo;
  double se_theta = 0.0;
  double se_elo = 0.0;
  // 95% interval in Elo.
  double lo = kAnchorElo;
  double hi = kAnchorElo;
  int votes = 0;
};

struct RatingTable {
  std::vector<MethodRating> methods;
  std::string anchor;
  double prior_scale = 2.0;
  int total_votes = 0;
  int newton_iterations = 0;
  // False when some method has no comparison path to the anchor; those
  // ratings are held by the prior only.
  bool connected = true;

  const MethodRating& at(const std::string& method) const;
  int index(const std::string& method) const;
};

nlohmann::json rating_table_to_json(const RatingTable& t);

// MAP skills under independent N(0, prior_scale^2) priors with the anchor
// pinned at theta = 0 (Elo 1000). `methods` fixes the order and the anchor
// (first entry); methods that only appear in votes are appended in order of
// first appearance. Standard errors come from the inverse of the observed
// information over the free skills.
RatingTable elo_fit(const std::vector<VoteRecord>& votes, double prior_scale = 2.0,
                    const std::vector<std::string>& methods = {});

// Prior-only table for methods with no votes yet.
RatingTable prior_rating_table(const std::vector<std::string>& methods, double prior_scale = 2.0);

// How many times more often the higher-rated side is preferred.
double elo_to_preference_ratio(double delta);

// Comparisons per unordered method pair, keyed by (lower index, higher index).
using PairCounts = std::map<std::pair<int, int>, int>;
PairCounts count_pairs(const RatingTable& table, const std::vector<VoteRecord>& votes);

// p (1 - p) (SE_i^2 + SE_j^2) for the pair.
double pair_score(const RatingTable& table, int i, int j);

// Ranks pairs by pair_score (fewer comparisons first on ties) and draws one
// of the top three uniformly. Returns indices into table.methods, i < j.
std::pair<int, int> select_next_pair(const RatingTable& table, const PairCounts& counts,
                                     uint64_t seed);

// Append-only newline-delimited JSON vote log; every append is flushed and
// synced before returning.
class VoteStore {
 public:
  VoteStore() = default;
  explicit VoteStore(const std::filesystem::path& path);
  ~VoteStore();
  VoteStore(const VoteStore&) = delete;
  VoteStore& operator=(const VoteStore&) = delete;

  void append(const VoteRecord& v);
  const std::vector<VoteRecord>& records() const { return records_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<VoteRecord> records_;
};

std::vector<VoteRecord> load_votes(const std::filesystem::path& path);

}  // namespace splatperc

#endif  // SPLATPERC_ELO_H_
