// Copyright 2026 The Seqevade Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Metered HTTP classification service and its client-side Oracle.
//
//   POST /v1/classify/window  {"client_id", "window": [int]}
//                             -> {"label", "score"?}
//   POST /v1/classify/trace   {"client_id", "trace": [int]}
//                             -> {"label", "score"?, "windows"}
//   GET  /v1/stats            -> {"clients": [{"client_id", "queries_total",
//                                              "spend_total"}]}
//   GET  /v1/info             -> {"k", "vocab_size", "vocab_hash",
//                                 "knowledge", "model"}
//
// A window request bills one query; a trace request bills one query per
// model window. Malformed bodies get 400; throttled clients get 429 with
// {"error": "throttled", "retry_after_ms"}.

#ifndef SEQEVADE_SERVICE_HPP_
#define SEQEVADE_SERVICE_HPP_

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "seqevade/oracle.hpp"
#include "seqevade/targets.hpp"

namespace seqevade {

using ServiceClock = std::chrono::steady_clock;
using ClockFn = std::function<ServiceClock::time_point()>;

struct Throttle {
  std::uint64_t max_queries = 0;
  std::chrono::milliseconds window{60000};
};

struct BillingPolicy {
  double cost_per_query = 0.001;
  std::optional<Throttle> throttle;
  Knowledge knowledge = Knowledge::decision;
};

struct ClientAccount {
  std::string client_id;
  std::uint64_t queries_total = 0;
  double spend_total = 0.0;
  std::optional<ServiceClock::time_point> throttled_until;
};

// Per-client billing and throttling. Each account has its own lock.
class AccountBook {
 public:
  AccountBook(BillingPolicy policy, ClockFn clock) : policy_(std::move(policy)), clock_(std::move(clock)) {}

  struct Admission {
    bool admitted = true;
    std::chrono::milliseconds retry_after{0};
  };

  // Bills `units` queries unless the throttle would trip.
  Admission Charge(const std::string& client_id, std::uint64_t units) {
    Entry& e = Get(client_id);
    std::lock_guard lock(e.mu);
    const auto now = clock_();
    if (policy_.throttle) {
      const auto& t = *policy_.throttle;
      while (!e.recent.empty() && now - e.recent.front().first >= t.window) {
        e.in_window -= e.recent.front().second;
        e.recent.pop_front();
      }
      if (e.in_window + units > t.max_queries) {
        auto until = e.recent.empty() ? now + t.window : e.recent.front().first + t.window;
        e.account.throttled_until = until;
        return {false, std::chrono::ceil<std::chrono::milliseconds>(until - now)};
      }
      e.recent.emplace_back(now, units);
      e.in_window += units;
      e.account.throttled_until.reset();
    }
    e.account.queries_total += units;
    e.account.spend_total = static_cast<double>(e.account.queries_total) * policy_.cost_per_query;
    return {};
  }

  std::vector<ClientAccount> Snapshot() const {
    std::vector<ClientAccount> out;
    std::lock_guard lock(mu_);
    for (const auto& [id, e] : entries_) {
      std::lock_guard elock(e->mu);
      out.push_back(e->account);
    }
    return out;
  }

  const BillingPolicy& policy() const { return policy_; }

 private:
  struct Entry {
    mutable std::mutex mu;
    ClientAccount account;
    std::deque<std::pair<ServiceClock::time_point, std::uint64_t>> recent;
    std::uint64_t in_window = 0;
  };

  Entry& Get(const std::string& id) {
    std::lock_guard lock(mu_);
    auto& slot = entries_[id];
    if (!slot) {
      slot = std::make_unique<Entry>();
      slot->account.client_id = id;
    }
    return *slot;
  }

  BillingPolicy policy_;
  ClockFn clock_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Entry>> entries_;
};

struct ServiceReply {
  int status = 200;
  nlohmann::json body;
};

inline nlohmann::json response_to_json(const ClassificationResponse& r) {
  nlohmann::json j = {{"label", to_string(r.decision)}};
  if (r.score) j["score"] = *r.score;
  return j;
}

class ClassificationService {
 public:
  ClassificationService(TrainedModel model, BillingPolicy policy, ClockFn clock = [] { return ServiceClock::now(); })
      : model_(std::move(model)), book_(std::move(policy), std::move(clock)) {
    if (book_.policy().knowledge == Knowledge::score && !model_.score_capable)
      throw ConfigError("score knowledge requested from a decision-only model");
  }

  ~ClassificationService() { Stop(); }

  ClassificationService(const ClassificationService&) = delete;
  ClassificationService& operator=(const ClassificationService&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  void Start(const std::string& host = "127.0.0.1", int port = 0) {
    server_ = std::make_unique<httplib::Server>();
    Route();
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
  }

  // Serves on the calling thread until Stop().
  void Run(const std::string& host, int port) {
    server_ = std::make_unique<httplib::Server>();
    Route();
    port_ = port;
    if (!server_->listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  }

  void Stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  const AccountBook& accounts() const { return book_; }

  ServiceReply ClassifyWindow(const std::string& body) { return Classify(body, "window", false); }
  ServiceReply ClassifyTrace(const std::string& body) { return Classify(body, "trace", true); }

  ServiceReply Stats() const {
    nlohmann::json clients = nlohmann::json::array();
    for (const auto& a : book_.Snapshot())
      clients.push_back({{"client_id", a.client_id}, {"queries_total", a.queries_total}, {"spend_total", a.spend_total}});
    return {200, {{"clients", clients}}};
  }

  ServiceReply Info() const {
    return {200,
            {{"k", model_.k},
             {"vocab_size", model_.vocab_size},
             {"vocab_hash", HexDigest(model_.vocab_hash)},
             {"knowledge", to_string(book_.policy().knowledge)},
             {"model", to_string(model_.kind)}}};
  }

 private:
  static ServiceReply BadRequest(const std::string& why) { return {400, {{"error", why}}}; }

  ServiceReply Classify(const std::string& body, const char* field, bool whole_trace) {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return BadRequest("body is not a JSON object");
    if (!j.contains("client_id") || !j["client_id"].is_string()) return BadRequest("missing client_id");
    if (!j.contains(field) || !j[field].is_array()) return BadRequest(std::string("missing ") + field + " array");
    std::vector<TokenId> ids;
    for (const auto& v : j[field]) {
      if (!v.is_number_unsigned()) return BadRequest("token ids must be non-negative integers");
      ids.push_back(v.get<TokenId>());
    }
    const std::uint64_t units = whole_trace ? trace_window_count(model_, model_.monitor(ids)) : 1;
    auto adm = book_.Charge(j["client_id"].get<std::string>(), units);
    if (!adm.admitted) return {429, {{"error", "throttled"}, {"retry_after_ms", adm.retry_after.count()}}};
    auto r = whole_trace ? seqevade::classify_trace(model_, ids) : classify_sequence(model_, ids);
    auto out = response_to_json(strip(r, book_.policy().knowledge));
    if (whole_trace) out["windows"] = units;
    return {200, out};
  }

  void Route() {
    auto send = [](httplib::Response& res, const ServiceReply& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server_->Post("/v1/classify/window",
                  [this, send](const httplib::Request& req, httplib::Response& res) { send(res, ClassifyWindow(req.body)); });
    server_->Post("/v1/classify/trace",
                  [this, send](const httplib::Request& req, httplib::Response& res) { send(res, ClassifyTrace(req.body)); });
    server_->Get("/v1/stats", [this, send](const httplib::Request&, httplib::Response& res) { send(res, Stats()); });
    server_->Get("/v1/info", [this, send](const httplib::Request&, httplib::Response& res) { send(res, Info()); });
  }

  TrainedModel model_;
  AccountBook book_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = -1;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{50};
};

// Oracle backed by a ClassificationService. Connection failures are retried
// and then raised as retryable OracleErrors; 429 raises ThrottledError.
class RemoteOracle final : public Oracle {
 public:
  RemoteOracle(const std::string& endpoint, std::string client_id, QueryMeter* meter = nullptr,
               RetryPolicy retry = {})
      : client_(endpoint), client_id_(std::move(client_id)), meter_(meter), retry_(retry) {
    client_.set_connection_timeout(2, 0);
    client_.set_read_timeout(30, 0);
    auto info = Send([&] { return client_.Get("/v1/info"); });
    if (!info.contains("knowledge") || !info.contains("k"))
      throw OracleError("endpoint does not speak the classification protocol", false);
    knowledge_ = knowledge_from_string(info["knowledge"].get<std::string>());
    info_ = std::move(info);
  }

  Knowledge knowledge() const override { return knowledge_; }
  const nlohmann::json& info() const { return info_; }

  ClassificationResponse classify_window(std::span<const TokenId> window) override {
    auto j = Post("/v1/classify/window", "window", window);
    if (meter_) meter_->record_window();
    return Parse(j);
  }

  ClassificationResponse classify_trace(std::span<const TokenId> trace) override {
    auto j = Post("/v1/classify/trace", "trace", trace);
    if (meter_) meter_->record_trace(j.value("windows", std::uint64_t{0}));
    return Parse(j);
  }

  nlohmann::json stats() {
    return Send([&] { return client_.Get("/v1/stats"); });
  }

 private:
  nlohmann::json Post(const char* path, const char* field, std::span<const TokenId> ids) {
    nlohmann::json body = {{"client_id", client_id_}, {field, std::vector<TokenId>(ids.begin(), ids.end())}};
    const std::string payload = body.dump();
    return Send([&] { return client_.Post(path, payload, "application/json"); });
  }

  template <class Call>
  nlohmann::json Send(Call&& call) {
    for (int attempt = 1;; ++attempt) {
      auto res = call();
      if (!res) {
        if (attempt >= retry_.attempts)
          throw OracleError("classification service unreachable: " + httplib::to_string(res.error()), true);
        std::this_thread::sleep_for(retry_.backoff * attempt);
        continue;
      }
      if (res->status == 429) throw ThrottledError("classification service throttled client " + client_id_);
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (res->status != 200 || j.is_discarded())
        throw OracleError("classification service returned status " + std::to_string(res->status), false);
      return j;
    }
  }

  ClassificationResponse Parse(const nlohmann::json& j) const {
    if (!j.contains("label")) throw OracleError("response without label", false);
    ClassificationResponse r;
    r.decision = decision_from_string(j["label"].get<std::string>());
    if (j.contains("score")) r.score = j["score"].get<double>();
    return strip(r, knowledge_);
  }

  httplib::Client client_;
  std::string client_id_;
  QueryMeter* meter_;
  RetryPolicy retry_;
  Knowledge knowledge_ = Knowledge::decision;
  nlohmann::json info_;
};

inline std::unique_ptr<Oracle> remote_oracle(const std::string& endpoint, const std::string& client_id,
                                             QueryMeter* meter = nullptr) {
  return std::make_unique<RemoteOracle>(endpoint, client_id, meter);
}

}  // namespace seqevade

#endif  // SEQEVADE_SERVICE_HPP_
