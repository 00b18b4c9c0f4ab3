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


#include "splatperc/elo.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <queue>
#include <random>

#include <Eigen/Dense>

#include "splatperc/error.h"
#include "splatperc/image.h"

namespace splatperc {

void to_json(nlohmann::json& j, const VoteRecord& v) {
  j = {{"v", kVoteSchemaVersion},
       {"trial_id", v.trial_id},
       {"method_a", v.method_a},
       {"method_b", v.method_b},
       {"crop_id", v.crop_id},
       {"winner", v.winner == Winner::kA ? "a" : "b"},
       {"rater_id", v.rater_id},
       {"time", v.time}};
}

void from_json(const nlohmann::json& j, VoteRecord& v) {
  if (!j.is_object() || j.value("v", 0) != kVoteSchemaVersion)
    throw Error(ErrorCode::kVersionMismatch, "vote record schema");
  v.trial_id = j.at("trial_id").get<std::string>();
  v.method_a = j.at("method_a").get<std::string>();
  v.method_b = j.at("method_b").get<std::string>();
  v.crop_id = j.value("crop_id", "");
  const std::string w = j.at("winner").get<std::string>();
  if (w != "a" && w != "b") throw Error(ErrorCode::kInvalidArgument, "winner must be a or b");
  v.winner = w == "a" ? Winner::kA : Winner::kB;
  v.rater_id = j.value("rater_id", "");
  v.time = j.value("time", int64_t{0});
}

const MethodRating& RatingTable::at(const std::string& method) const {
  return methods[index(method)];
}

int RatingTable::index(const std::string& method) const {
  for (size_t i = 0; i < methods.size(); ++i)
    if (methods[i].method == method) return static_cast<int>(i);
  throw Error(ErrorCode::kInvalidArgument, "unknown method " + method);
}

nlohmann::json rating_table_to_json(const RatingTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const MethodRating& m : t.methods)
    rows.push_back({{"method", m.method},
                    {"theta", m.theta},
                    {"elo", m.elo},
                    {"se_theta", m.se_theta},
                    {"se_elo", m.se_elo},
                    {"ci95", {m.lo, m.hi}},
                    {"votes", m.votes}});
  return {{"anchor", t.anchor},
          {"anchor_elo", kAnchorElo},
          {"prior_scale", t.prior_scale},
          {"total_votes", t.total_votes},
          {"newton_iterations", t.newton_iterations},
          {"connected", t.connected},
          {"methods", rows}};
}

namespace {

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log sigmoid(x) without overflow.
double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

struct Tally {
  std::vector<std::string> names;
  // wins[i][j]: votes where i beat j.
  std::vector<std::vector<double>> wins;
  std::vector<int> votes;
};

Tally tally(const std::vector<VoteRecord>& votes, const std::vector<std::string>& methods) {
  Tally t;
  t.names = methods;
  auto index = [&](const std::string& m) {
    auto it = std::find(t.names.begin(), t.names.end(), m);
    if (it != t.names.end()) return static_cast<int>(it - t.names.begin());
    t.names.push_back(m);
    return static_cast<int>(t.names.size() - 1);
  };
  for (const std::string& m : methods)
    if (std::count(methods.begin(), methods.end(), m) != 1)
      throw Error(ErrorCode::kInvalidArgument, "duplicate method " + m);
  std::vector<std::pair<int, int>> outcomes;
  for (const VoteRecord& v : votes) {
    if (v.method_a == v.method_b)
      throw Error(ErrorCode::kInvalidArgument, "vote compares " + v.method_a + " with itself");
    const int a = index(v.method_a), b = index(v.method_b);
    outcomes.push_back(v.winner == Winner::kA ? std::pair{a, b} : std::pair{b, a});
  }
  const size_t n = t.names.size();
  t.wins.assign(n, std::vector<double>(n, 0.0));
  t.votes.assign(n, 0);
  for (auto [w, l] : outcomes) {
    t.wins[w][l] += 1.0;
    ++t.votes[w];
    ++t.votes[l];
  }
  return t;
}

bool connected_to_anchor(const Tally& t) {
  const size_t n = t.names.size();
  std::vector<bool> seen(n, false);
  std::queue<size_t> q;
  q.push(0);
  seen[0] = true;
  while (!q.empty()) {
    const size_t i = q.front();
    q.pop();
    for (size_t j = 0; j < n; ++j)
      if (!seen[j] && t.wins[i][j] + t.wins[j][i] > 0) {
        seen[j] = true;
        q.push(j);
      }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

double log_posterior(const Tally& t, const Eigen::VectorXd& theta, double prior_scale) {
  const int n = static_cast<int>(theta.size());
  double lp = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (t.wins[i][j] > 0) lp += t.wins[i][j] * log_sigmoid(theta[i] - theta[j]);
  for (int i = 1; i < n; ++i) lp -= theta[i] * theta[i] / (2 * prior_scale * prior_scale);
  return lp;
}

// Gradient and observed information over the free skills 1..n-1.
void derivatives(const Tally& t, const Eigen::VectorXd& theta, double prior_scale,
                 Eigen::VectorXd& grad, Eigen::MatrixXd& info) {
  const int n = static_cast<int>(theta.size());
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double games = t.wins[i][j] + t.wins[j][i];
      if (games == 0) continue;
      const double p = sigmoid(theta[i] - theta[j]);
      const double r = t.wins[i][j] - games * p;
      g[i] += r;
      g[j] -= r;
      const double c = games * p * (1 - p);
      h(i, i) += c;
      h(j, j) += c;
      h(i, j) -= c;
      h(j, i) -= c;
    }
  const double prec = 1.0 / (prior_scale * prior_scale);
  grad = g.tail(n - 1) - prec * theta.tail(n - 1);
  info = h.bottomRightCorner(n - 1, n - 1);
  info.diagonal().array() += prec;
}

RatingTable fit_tally(const Tally& t, double prior_scale, int total_votes) {
  if (!(prior_scale > 0) || !std::isfinite(prior_scale))
    throw Error(ErrorCode::kInvalidArgument, "prior_scale must be positive");
  const int n = static_cast<int>(t.names.size());
  if (n < 1) throw Error(ErrorCode::kEmptyInput, "no methods");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad;
  Eigen::MatrixXd info;
  int iterations = 0;
  if (n > 1) {
    derivatives(t, theta, prior_scale, grad, info);
    double lp = log_posterior(t, theta, prior_scale);
    while (grad.norm() >= 1e-10 && iterations < 200) {
      ++iterations;
      const Eigen::VectorXd step = info.ldlt().solve(grad);
      double alpha = 1.0;
      Eigen::VectorXd next = theta;
      double next_lp = lp;
      for (int k = 0; k < 60; ++k) {
        next.tail(n - 1) = theta.tail(n - 1) + alpha * step;
        next_lp = log_posterior(t, next, prior_scale);
        if (next_lp >= lp) break;
        alpha *= 0.5;
      }
      if (next == theta) break;
      theta = next;
      lp = next_lp;
      derivatives(t, theta, prior_scale, grad, info);
    }
  }
  Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
  if (n > 1) var.tail(n - 1) = info.inverse().diagonal();

  RatingTable table;
  table.anchor = t.names[0];
  table.prior_scale = prior_scale;
  table.total_votes = total_votes;
  table.newton_iterations = iterations;
  table.connected = connected_to_anchor(t);
  for (int i = 0; i < n; ++i) {
    MethodRating m;
    m.method = t.names[i];
    m.theta = theta[i];
    m.elo = kAnchorElo + kEloPerTheta * theta[i];
    m.se_theta = std::sqrt(var[i]);
    m.se_elo = kEloPerTheta * m.se_theta;
    m.lo = m.elo - 1.96 * m.se_elo;
    m.hi = m.elo + 1.96 * m.se_elo;
    m.votes = t.votes[i];
    table.methods.push_back(m);
  }
  return table;
}

}  // namespace

RatingTable elo_fit(const std::vector<VoteRecord>& votes, double prior_scale,
                    const std::vector<std::string>& methods) {
  if (votes.empty()) throw Error(ErrorCode::kEmptyInput, "no votes");
  return fit_tally(tally(votes, methods), prior_scale, static_cast<int>(votes.size()));
}

RatingTable prior_rating_table(const std::vector<std::string>& methods, double prior_scale) {
  return fit_tally(tally({}, methods), prior_scale, 0);
}

double elo_to_preference_ratio(double delta) { return std::pow(10.0, delta / 400.0); }

PairCounts count_pairs(const RatingTable& table, const std::vector<VoteRecord>& votes) {
  PairCounts counts;
  for (const VoteRecord& v : votes) {
    int a = table.index(v.method_a), b = table.index(v.method_b);
    if (a > b) std::swap(a, b);
    ++counts[{a, b}];
  }
  return counts;
}

double pair_score(const RatingTable& table, int i, int j) {
  const MethodRating& a = table.methods.at(i);
  const MethodRating& b = table.methods.at(j);
  const double p = sigmoid(a.theta - b.theta);
  return p * (1 - p) * (a.se_theta * a.se_theta + b.se_theta * b.se_theta);
}

std::pair<int, int> select_next_pair(const RatingTable& table, const PairCounts& counts,
                                     uint64_t seed) {
  const int n = static_cast<int>(table.methods.size());
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two methods");
  struct Candidate {
    double score;
    int count;
    std::pair<int, int> pair;
  };
  std::vector<Candidate> c;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      auto it = counts.find({i, j});
      c.push_back({pair_score(table, i, j), it == counts.end() ? 0 : it->second, {i, j}});
    }
  std::stable_sort(c.begin(), c.end(), [](const Candidate& x, const Candidate& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.count < y.count;
  });
  const size_t top = std::min<size_t>(3, c.size());
  std::mt19937_64 rng(seed);
  return c[std::uniform_int_distribution<size_t>(0, top - 1)(rng)].pair;
}

namespace {

std::vector<VoteRecord> parse_votes(const std::string& text, size_t* complete_bytes) {
  std::vector<VoteRecord> out;
  size_t pos = 0;
  int line = 0;
  while (true) {
    const size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) break;
    ++line;
    const std::string s = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (s.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(s).get<VoteRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kCorruptStream, "vote log line " + std::to_string(line) + ": " +
                                                 e.what());
    }
  }
  // A trailing line without a newline is an interrupted append.
  *complete_bytes = pos;
  return out;
}

}  // namespace

std::vector<VoteRecord> load_votes(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  size_t complete = 0;
  return parse_votes(std::string(bytes.begin(), bytes.end()), &complete);
}

VoteStore::VoteStore(const std::filesystem::path& path) : path_(path) {
  if (std::filesystem::exists(path)) {
    const std::vector<uint8_t> bytes = read_file_bytes(path);
    size_t complete = 0;
    records_ = parse_votes(std::string(bytes.begin(), bytes.end()), &complete);
    if (complete != bytes.size()) std::filesystem::resize_file(path, complete);
  }
  fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0)
    throw Error(ErrorCode::kUnwritable, path.string() + ": " + std::strerror(errno));
}

VoteStore::~VoteStore() {
  if (fd_ >= 0) ::close(fd_);
}

void VoteStore::append(const VoteRecord& v) {
  if (fd_ >= 0) {
    const std::string line = nlohmann::json(v).dump() + "\n";
    size_t done = 0;
    while (done < line.size()) {
      const ssize_t w = ::write(fd_, line.data() + done, line.size() - done);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::kUnwritable, path_.string() + ": " + std::strerror(errno));
      }
      done += static_cast<size_t>(w);
    }
    if (::fsync(fd_) != 0)
      throw Error(ErrorCode::kUnwritable, path_.string() + ": " + std::strerror(errno));
  }
  records_.push_back(v);
}

}  // namespace splatperc
