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


#include "splatperc/study_service.h"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "httplib.h"
#include "splatperc/error.h"

namespace splatperc {

void to_json(nlohmann::json& j, const StudyConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (const StudyMethod& m : c.methods) methods.push_back({{"name", m.name}, {"dir", m.dir}});
  j = {{"methods", methods},
       {"reference_dir", c.reference_dir},
       {"crop_side", c.crop_side},
       {"trial_budget", c.trial_budget},
       {"refit_every", c.refit_every},
       {"prior_scale", c.prior_scale},
       {"trial_timeout_s", c.trial_timeout_s},
       {"seed", c.seed},
       {"vote_log", c.vote_log},
       {"ui_dir", c.ui_dir}};
}

void from_json(const nlohmann::json& j, StudyConfig& c) {
  StudyConfig d;
  if (j.contains("methods")) {
    d.methods.clear();
    for (const nlohmann::json& m : j.at("methods"))
      d.methods.push_back({m.at("name").get<std::string>(), m.at("dir").get<std::string>()});
  }
  d.reference_dir = j.value("reference_dir", std::string());
  d.crop_side = j.value("crop_side", d.crop_side);
  d.trial_budget = j.value("trial_budget", d.trial_budget);
  d.refit_every = j.value("refit_every", d.refit_every);
  d.prior_scale = j.value("prior_scale", d.prior_scale);
  d.trial_timeout_s = j.value("trial_timeout_s", d.trial_timeout_s);
  d.seed = j.value("seed", d.seed);
  d.vote_log = j.value("vote_log", std::string());
  d.ui_dir = j.value("ui_dir", std::string());
  c = d;
}

void validate(const StudyConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (c.methods.size() < 2) fail("a study needs at least two methods");
  for (size_t i = 0; i < c.methods.size(); ++i) {
    if (c.methods[i].name.empty()) fail("empty method name");
    for (size_t k = 0; k < i; ++k)
      if (c.methods[k].name == c.methods[i].name) fail("duplicate method " + c.methods[i].name);
  }
  if (c.crop_side < 1) fail("crop_side must be positive");
  if (c.trial_budget < 0) fail("trial_budget must be non-negative");
  if (c.refit_every < 1) fail("refit_every must be positive");
  if (!(c.prior_scale > 0)) fail("prior_scale must be positive");
  if (!(c.trial_timeout_s > 0)) fail("trial_timeout_s must be positive");
}

namespace {

bool is_image(const std::filesystem::path& p) {
  const std::string e = p.extension().string();
  return e == ".png" || e == ".ppm" || e == ".pgm";
}

HttpReply json_reply(int status, const nlohmann::json& j) {
  return {status, "application/json", j.dump()};
}

HttpReply error_reply(int status, const std::string& message) {
  return json_reply(status, {{"error", message}});
}

double system_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string crop_key(const std::string& view, const CropSpec& s) {
  return view + ":" + std::to_string(s.origin_x) + ":" + std::to_string(s.origin_y) + ":" +
         std::to_string(s.side) + (s.flip_horizontal ? ":f" : "");
}

}  // namespace

StudyService::StudyService(StudyConfig config, Clock clock)
    : config_(std::move(config)), clock_(clock ? std::move(clock) : Clock(system_seconds)) {
  validate(config_);
  for (const StudyMethod& m : config_.methods) names_.push_back(m.name);
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(config_.reference_dir, ec))
    if (e.is_regular_file() && is_image(e.path())) views_.push_back(e.path().filename());
  if (ec) throw Error(ErrorCode::kUnreadableFile, config_.reference_dir.string());
  std::sort(views_.begin(), views_.end());
  if (views_.empty())
    throw Error(ErrorCode::kEmptyInput, "no images in " + config_.reference_dir.string());
  for (const std::string& v : views_) {
    std::vector<ImageBuffer> row{to_rgb(load_image(config_.reference_dir / v))};
    for (const StudyMethod& m : config_.methods) {
      row.push_back(to_rgb(load_image(m.dir / v)));
      require_same_shape(row.front(), row.back(), "method rendering");
    }
    images_.push_back(std::move(row));
  }

  rng_.seed(config_.seed);
  store_ = config_.vote_log.empty() ? std::make_unique<VoteStore>()
                                    : std::make_unique<VoteStore>(config_.vote_log);
  const std::vector<VoteRecord>& past = store_->records();
  table_ = past.empty() ? prior_rating_table(names_, config_.prior_scale)
                        : elo_fit(past, config_.prior_scale, names_);
  if (table_.methods.size() != names_.size())
    throw Error(ErrorCode::kInvalidArgument, "vote log names methods outside the study");
  for (const VoteRecord& v : past) voted_.insert(v.trial_id);
  counts_ = count_pairs(table_, past);
  worker_ = std::thread([this] { refit_loop(); });
}

StudyService::~StudyService() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

std::string StudyService::token() {
  while (true) {
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                  static_cast<unsigned long long>(rng_()));
    const std::string t(buf);
    if (!trials_.count(t) && !crops_.count(t) && !voted_.count(t)) return t;
  }
}

void StudyService::drop_trial(const std::string& id) {
  auto it = trials_.find(id);
  if (it == trials_.end()) return;
  for (const std::string& c : it->second.crop_tokens) crops_.erase(c);
  trials_.erase(it);
}

HttpReply StudyService::next(const std::string& rater) {
  if (rater.empty()) return error_reply(400, "missing rater");
  std::lock_guard<std::mutex> lock(mu_);
  if (config_.trial_budget > 0 &&
      static_cast<int>(store_->records().size()) >= config_.trial_budget)
    return error_reply(410, "trial budget exhausted");
  const double now = clock_();
  for (auto it = trials_.begin(); it != trials_.end();) {
    const std::string id = (it++)->first;
    if (trials_.at(id).deadline < now) drop_trial(id);
  }

  auto [i, j] = select_next_pair(table_, counts_, rng_());
  if (rng_() & 1) std::swap(i, j);
  const int view = std::uniform_int_distribution<int>(0, static_cast<int>(views_.size()) - 1)(rng_);
  const ImageBuffer& ref = images_[view][0];
  const int side = std::min({config_.crop_side, ref.height, ref.width});
  const CropSpec spec = sample_crop(ref, rng_(), side);

  const std::string id = token();
  Trial t{i, j, crop_key(views_[view], spec), rater, now + config_.trial_timeout_s, {}};
  std::vector<std::string> urls;
  for (int source : {-1, i, j}) {
    const std::string c = token();
    crops_[c] = {view, source, spec, id};
    t.crop_tokens.push_back(c);
    urls.push_back("/crops/" + c + ".png");
  }
  trials_[id] = std::move(t);
  return json_reply(200, {{"trial_id", id},
                          {"reference", urls[0]},
                          {"image_a", urls[1]},
                          {"image_b", urls[2]},
                          {"deadline", now + config_.trial_timeout_s}});
}

HttpReply StudyService::vote(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("trial_id") ||
      !j["trial_id"].is_string() || !j.contains("choice") || !j["choice"].is_string())
    return error_reply(400, "expected {\"trial_id\": string, \"choice\": \"a\" | \"b\"}");
  const std::string id = j["trial_id"].get<std::string>();
  const std::string choice = j["choice"].get<std::string>();
  if (choice != "a" && choice != "b") return error_reply(400, "choice must be a or b");

  std::lock_guard<std::mutex> lock(mu_);
  if (voted_.count(id)) return error_reply(409, "trial already voted");
  auto it = trials_.find(id);
  if (it == trials_.end()) return error_reply(404, "unknown trial");
  const double now = clock_();
  if (now > it->second.deadline) {
    drop_trial(id);
    return error_reply(410, "trial expired");
  }
  const Trial& t = it->second;
  VoteRecord v;
  v.trial_id = id;
  v.method_a = names_[t.method_a];
  v.method_b = names_[t.method_b];
  v.crop_id = t.crop_key;
  v.winner = choice == "a" ? Winner::kA : Winner::kB;
  v.rater_id = t.rater;
  v.time = static_cast<int64_t>(now);
  store_->append(v);
  voted_.insert(id);
  ++counts_[{std::min(t.method_a, t.method_b), std::max(t.method_a, t.method_b)}];
  drop_trial(id);
  if (store_->records().size() % config_.refit_every == 0) schedule_refit();
  return {204, "application/json", ""};
}

HttpReply StudyService::ratings() const {
  std::lock_guard<std::mutex> lock(mu_);
  nlohmann::json j = rating_table_to_json(table_);
  j["votes"] = store_->records().size();
  return json_reply(200, j);
}

HttpReply StudyService::crop(const std::string& id) const {
  CropRef ref;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = crops_.find(id);
    if (it == crops_.end()) return error_reply(404, "unknown crop");
    ref = it->second;
  }
  const std::vector<uint8_t> png =
      encode_png(apply_crop(images_[ref.view][ref.source + 1], ref.spec));
  return {200, "image/png", std::string(png.begin(), png.end())};
}

void StudyService::schedule_refit() {
  pending_ = store_->records();
  cv_.notify_all();
}

void StudyService::refit_loop() {
  std::unique_lock<std::mutex> lock(mu_);
  while (true) {
    cv_.wait(lock, [this] { return stopping_ || pending_.has_value(); });
    if (stopping_) return;
    const std::vector<VoteRecord> votes = std::move(*pending_);
    pending_.reset();
    refitting_ = true;
    lock.unlock();
    RatingTable t = elo_fit(votes, config_.prior_scale, names_);
    lock.lock();
    table_ = std::move(t);
    refitting_ = false;
    cv_.notify_all();
  }
}

void StudyService::sync() {
  std::unique_lock<std::mutex> lock(mu_);
  cv_.wait(lock, [this] { return !pending_.has_value() && !refitting_; });
}

RatingTable StudyService::table() const {
  std::lock_guard<std::mutex> lock(mu_);
  return table_;
}

std::vector<VoteRecord> StudyService::votes() const {
  std::lock_guard<std::mutex> lock(mu_);
  return store_->records();
}

struct StudyServer::Impl {
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const HttpReply& r) {
  res.status = r.status;
  if (!r.body.empty()) res.set_content(r.body, r.content_type);
}

}  // namespace

StudyServer::StudyServer(StudyService& service) : impl_(std::make_unique<Impl>()) {
  httplib::Server& s = impl_->server;
  s.Get("/api/next", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.next(req.get_param_value("rater")));
  });
  s.Post("/api/vote", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.vote(req.body));
  });
  s.Get("/api/ratings", [&service](const httplib::Request&, httplib::Response& res) {
    send(res, service.ratings());
  });
  s.Get(R"(/crops/([0-9a-f]+)\.png)",
        [&service](const httplib::Request& req, httplib::Response& res) {
          send(res, service.crop(req.matches[1]));
        });
  if (!service.config().ui_dir.empty() &&
      !s.set_mount_point("/", service.config().ui_dir.string()))
    throw Error(ErrorCode::kUnreadableFile, service.config().ui_dir.string());
  s.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
          std::rethrow_exception(ep);
        } catch (const std::exception& e) {
          what = e.what();
        }
        res.status = 500;
        res.set_content(nlohmann::json{{"error", what}}.dump(), "application/json");
      });
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool StudyServer::listen() { return impl_->server.listen_after_bind(); }

void StudyServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void StudyServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace splatperc
