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


#ifndef SPLATPERC_STUDY_SERVICE_H_
#define SPLATPERC_STUDY_SERVICE_H_

// Blind A/B preference study: trial scheduling, crop serving and vote
// collection behind a small JSON HTTP API.

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "splatperc/elo.h"
#include "splatperc/image.h"

namespace splatperc {

struct StudyMethod {
  std::string name;
  // Holds one rendering per view, named like the reference images.
  std::filesystem::path dir;
};

struct StudyConfig {
  std::vector<StudyMethod> methods;
  std::filesystem::path reference_dir;
  // Clipped to the smaller image side.
  int crop_side = 704;
  // Stop serving trials after this many votes; 0 = unlimited.
  int trial_budget = 0;
  int refit_every = 25;
  double prior_scale = 2.0;
  // Seconds a served trial stays open for its vote.
  double trial_timeout_s = 600.0;
  uint64_t seed = 0;
  // Empty keeps votes in memory only.
  std::filesystem::path vote_log;
  // Optional directory of static rater UI files served at /.
  std::filesystem::path ui_dir;
};

void to_json(nlohmann::json& j, const StudyConfig& c);
void from_json(const nlohmann::json& j, StudyConfig& c);
void validate(const StudyConfig& c);

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

class StudyService {
 public:
  using Clock = std::function<double()>;

  // Loads all views and replays the vote log. `clock` returns Unix seconds.
  explicit StudyService(StudyConfig config, Clock clock = {});
  ~StudyService();
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  // GET /api/next?rater=ID
  HttpReply next(const std::string& rater);
  // POST /api/vote with {"trial_id": ..., "choice": "a" | "b"}
  HttpReply vote(const std::string& body);
  // GET /api/ratings
  HttpReply ratings() const;
  // GET /crops/{id}.png
  HttpReply crop(const std::string& id) const;

  // Blocks until every scheduled refit is committed.
  void sync();
  RatingTable table() const;
  std::vector<VoteRecord> votes() const;
  const std::vector<std::string>& method_names() const { return names_; }
  const StudyConfig& config() const { return config_; }

 private:
  struct CropRef {
    int view = 0;
    // -1 for the reference, else a method index.
    int source = -1;
    CropSpec spec;
    std::string trial_id;
  };
  struct Trial {
    int method_a = 0;
    int method_b = 0;
    std::string crop_key;
    std::string rater;
    double deadline = 0.0;
    std::vector<std::string> crop_tokens;
  };

  std::string token();
  void schedule_refit();
  void refit_loop();
  void drop_trial(const std::string& id);

  StudyConfig config_;
  Clock clock_;
  std::vector<std::string> names_;
  std::vector<std::string> views_;
  // images_[view][0] is the reference, images_[view][1 + m] method m.
  std::vector<std::vector<ImageBuffer>> images_;

  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::unique_ptr<VoteStore> store_;
  std::set<std::string> voted_;
  PairCounts counts_;
  std::map<std::string, Trial> trials_;
  std::map<std::string, CropRef> crops_;
  RatingTable table_;

  std::condition_variable cv_;
  std::optional<std::vector<VoteRecord>> pending_;
  bool refitting_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

// HTTP front end for a StudyService.
class StudyServer {
 public:
  explicit StudyServer(StudyService& service);
  ~StudyServer();
  // Binds the socket; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop(); returns false if the server could not run.
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace splatperc

#endif  // SPLATPERC_STUDY_SERVICE_H_
