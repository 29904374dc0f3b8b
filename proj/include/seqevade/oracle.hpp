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

// The black-box boundary between attacks and target classifiers.
//
// An Oracle answers two kinds of queries:
//   - classify_window: one attacker window of any length. The backend applies
//     its own k-windowing (pad or OR-split), so the attacker's n need not
//     match the target's k. Costs one window query.
//   - classify_trace: a whole trace. Costs one trace query plus one window
//     query per model window.
// In decision mode the score is always stripped.

#ifndef SEQEVADE_ORACLE_HPP_
#define SEQEVADE_ORACLE_HPP_

#include <functional>
#include <memory>
#include <span>
#include <string>

#include "seqevade/core.hpp"
#include "seqevade/targets.hpp"

namespace seqevade {

enum class Knowledge { decision, score };

inline std::string_view to_string(Knowledge k) { return k == Knowledge::score ? "score" : "decision"; }

inline Knowledge knowledge_from_string(std::string_view s) {
  if (s == "score") return Knowledge::score;
  if (s == "decision") return Knowledge::decision;
  throw ConfigError("unknown knowledge mode: " + std::string(s));
}

class OracleError : public Error {
 public:
  OracleError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}
  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

// The backend refuses further queries from this client for now.
class ThrottledError : public OracleError {
 public:
  explicit ThrottledError(const std::string& what) : OracleError(what, false) {}
};

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual Knowledge knowledge() const = 0;
  virtual ClassificationResponse classify_window(std::span<const TokenId> window) = 0;
  virtual ClassificationResponse classify_trace(std::span<const TokenId> trace) = 0;
};

inline ClassificationResponse strip(ClassificationResponse r, Knowledge k) {
  if (k == Knowledge::decision) r.score.reset();
  return r;
}

// Classifies an attacker window of arbitrary length against a k-window model.
inline ClassificationResponse classify_sequence(const TrainedModel& model, std::span<const TokenId> tokens) {
  auto monitored = model.monitor(tokens);
  if (monitored.size() == model.k) return classify_window(model, monitored);
  return classify_trace(model, monitored);
}

// In-process oracle over a trained model.
class ModelOracle final : public Oracle {
 public:
  ModelOracle(const TrainedModel& model, Knowledge knowledge, QueryMeter* meter)
      : model_(model), knowledge_(knowledge), meter_(meter) {
    if (knowledge == Knowledge::score && !model.score_capable)
      throw ConfigError("score knowledge requested from a decision-only model");
  }

  Knowledge knowledge() const override { return knowledge_; }

  ClassificationResponse classify_window(std::span<const TokenId> window) override {
    auto r = classify_sequence(model_, window);
    if (meter_) meter_->record_window();
    return strip(r, knowledge_);
  }

  ClassificationResponse classify_trace(std::span<const TokenId> trace) override {
    auto r = seqevade::classify_trace(model_, trace);
    if (meter_) meter_->record_trace(trace_window_count(model_, trace));
    return strip(r, knowledge_);
  }

 private:
  const TrainedModel& model_;
  Knowledge knowledge_;
  QueryMeter* meter_;
};

inline std::unique_ptr<Oracle> make_oracle(const TrainedModel& model, Knowledge knowledge, QueryMeter& meter) {
  return std::make_unique<ModelOracle>(model, knowledge, &meter);
}

//============= Hybrid ===============

class HybridOracle {
 public:
  virtual ~HybridOracle() = default;
  virtual Knowledge knowledge() const = 0;
  virtual ClassificationResponse classify_window(std::span<const TokenId> window, const StaticFeatureVector& s) = 0;
  virtual ClassificationResponse classify_trace(std::span<const TokenId> trace, const StaticFeatureVector& s) = 0;
};

class LocalHybridOracle final : public HybridOracle {
 public:
  LocalHybridOracle(const HybridModel& model, Knowledge knowledge, QueryMeter* meter)
      : model_(model), knowledge_(knowledge), meter_(meter) {}

  Knowledge knowledge() const override { return knowledge_; }

  ClassificationResponse classify_window(std::span<const TokenId> window, const StaticFeatureVector& s) override {
    double d = *classify_sequence(model_.dynamic, window).score;
    if (meter_) meter_->record_window();
    return strip(respond(model_.fuse(d, model_.static_model.score(s)), model_.threshold), knowledge_);
  }

  ClassificationResponse classify_trace(std::span<const TokenId> trace, const StaticFeatureVector& s) override {
    auto r = classify_hybrid(model_, trace, s);
    if (meter_) meter_->record_trace(trace_window_count(model_.dynamic, trace));
    return strip(r, knowledge_);
  }

 private:
  const HybridModel& model_;
  Knowledge knowledge_;
  QueryMeter* meter_;
};

// Views a hybrid oracle as a sequence oracle with the static vector held
// fixed.
class FixedStaticOracle final : public Oracle {
 public:
  FixedStaticOracle(HybridOracle& inner, const StaticFeatureVector& s) : inner_(inner), static_(s) {}
  Knowledge knowledge() const override { return inner_.knowledge(); }
  ClassificationResponse classify_window(std::span<const TokenId> w) override {
    return inner_.classify_window(w, static_);
  }
  ClassificationResponse classify_trace(std::span<const TokenId> t) override {
    return inner_.classify_trace(t, static_);
  }

 private:
  HybridOracle& inner_;
  const StaticFeatureVector& static_;
};

// Oracle over static vectors alone (one query per call).
using StaticOracle = std::function<ClassificationResponse(const StaticFeatureVector&)>;

inline StaticOracle make_static_oracle(const StaticModel& model, Knowledge knowledge, QueryMeter* meter) {
  return [&model, knowledge, meter](const StaticFeatureVector& v) {
    auto r = classify_static(model, v);
    if (meter) meter->record_window();
    return strip(r, knowledge);
  };
}

}  // namespace seqevade

#endif  // SEQEVADE_ORACLE_HPP_
