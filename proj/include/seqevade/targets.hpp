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

// Desk-scale target classifiers.
//
// All models classify fixed-length windows of k tokens. A trace is malicious
// iff any of its k-windows is malicious (OR-aggregation); its score is the
// maximum window score. Tokens outside the model vocabulary are unmonitored
// and dropped before windowing.

#ifndef SEQEVADE_TARGETS_HPP_
#define SEQEVADE_TARGETS_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "seqevade/core.hpp"

namespace seqevade {

class TrainingError : public Error {
 public:
  using Error::Error;
};

enum class Decision { malicious, benign };

inline std::string_view to_string(Decision d) { return d == Decision::malicious ? "malicious" : "benign"; }

inline Decision decision_from_string(std::string_view s) {
  if (s == "malicious") return Decision::malicious;
  if (s == "benign") return Decision::benign;
  throw EncodingError("unknown decision: " + std::string(s));
}

struct ClassificationResponse {
  Decision decision = Decision::benign;
  std::optional<double> score;  // 1.0 = malicious

  bool malicious() const { return decision == Decision::malicious; }
  friend bool operator==(const ClassificationResponse&, const ClassificationResponse&) = default;
};

inline ClassificationResponse respond(double score, double threshold) {
  return {score >= threshold ? Decision::malicious : Decision::benign, score};
}

//============= Query metering ===============

// window_queries counts model windows classified (a trace query adds one per
// window); invocations counts oracle calls of either kind.
struct QueryCounts {
  std::uint64_t window_queries = 0;
  std::uint64_t trace_queries = 0;
  std::uint64_t invocations = 0;

  friend bool operator==(const QueryCounts&, const QueryCounts&) = default;
  QueryCounts operator-(const QueryCounts& o) const {
    return {window_queries - o.window_queries, trace_queries - o.trace_queries, invocations - o.invocations};
  }
};

// Monotone counters. Safe for concurrent use.
class QueryMeter {
 public:
  void record_window() {
    window_queries_.fetch_add(1, std::memory_order_relaxed);
    invocations_.fetch_add(1, std::memory_order_relaxed);
  }

  void record_trace(std::uint64_t windows) {
    trace_queries_.fetch_add(1, std::memory_order_relaxed);
    window_queries_.fetch_add(windows, std::memory_order_relaxed);
    invocations_.fetch_add(1, std::memory_order_relaxed);
  }

  void record_sample(const std::string& sample_id, std::uint64_t queries) {
    std::lock_guard lock(mu_);
    per_sample_[sample_id] += queries;
  }

  QueryCounts snapshot() const {
    return {window_queries_.load(std::memory_order_relaxed), trace_queries_.load(std::memory_order_relaxed),
            invocations_.load(std::memory_order_relaxed)};
  }

  std::map<std::string, std::uint64_t> per_sample() const {
    std::lock_guard lock(mu_);
    return per_sample_;
  }

 private:
  std::atomic<std::uint64_t> window_queries_{0};
  std::atomic<std::uint64_t> trace_queries_{0};
  std::atomic<std::uint64_t> invocations_{0};
  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> per_sample_;
};

//============= Models ===============

enum class ModelKind { logistic_regression, ngram_bayes, decision_forest };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic_regression: return "logistic_regression";
    case ModelKind::ngram_bayes: return "ngram_bayes";
    case ModelKind::decision_forest: return "decision_forest";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "logistic_regression" || s == "lr") return ModelKind::logistic_regression;
  if (s == "ngram_bayes" || s == "nb") return ModelKind::ngram_bayes;
  if (s == "decision_forest" || s == "rf") return ModelKind::decision_forest;
  throw ConfigError("unknown model kind: " + std::string(s));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// Hashed unigram and bigram features of a window. Padding is skipped.
struct NgramHash {
  static constexpr std::size_t kBuckets = 1u << 16;

  static std::size_t unigram(TokenId a) { return (a * 0x9e3779b1u) % kBuckets; }
  static std::size_t bigram(TokenId a, TokenId b) {
    std::uint64_t h = (static_cast<std::uint64_t>(a) << 32) ^ (b + 0x7f4a7c15u);
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return h % kBuckets;
  }

  template <class F>
  static void for_each_feature(std::span<const TokenId> window, F&& f) {
    TokenId prev = kNullToken;
    for (TokenId t : window) {
      if (t == kNullToken) continue;
      f(unigram(t));
      if (prev != kNullToken) f(bigram(prev, t));
      prev = t;
    }
  }
};

// Linear model over per-window token counts.
struct LogisticRegression {
  std::vector<float> weights;  // one per vocabulary id
  float bias = 0.0f;

  double logit(std::span<const TokenId> window) const {
    double z = bias;
    for (TokenId t : window)
      if (t != kNullToken) z += weights[t];
    return z;
  }
};

// Multinomial naive Bayes over the same features.
struct NgramBayes {
  static constexpr std::size_t kBuckets = NgramHash::kBuckets;
  double alpha = 1.0;
  std::vector<float> log_ratio;  // per bucket: log P(f|mal) - log P(f|ben)
  double prior_log_odds = 0.0;

  double logit(std::span<const TokenId> window) const {
    double z = prior_log_odds;
    NgramHash::for_each_feature(window, [&](std::size_t b) { z += log_ratio[b]; });
    return z;
  }
};

// Random forest over per-window token counts.
struct DecisionForest {
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    std::uint16_t threshold = 0;  // count <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    float malicious_fraction = 0.0f;
  };
  using Tree = std::vector<Node>;
  std::vector<Tree> trees;

  double score(const std::vector<std::uint8_t>& counts) const {
    if (trees.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& tree : trees) {
      std::int32_t i = 0;
      while (tree[i].feature >= 0) i = counts[tree[i].feature] <= tree[i].threshold ? tree[i].left : tree[i].right;
      sum += tree[i].malicious_fraction;
    }
    return sum / static_cast<double>(trees.size());
  }
};

struct TrainedModel {
  ModelKind kind = ModelKind::logistic_regression;
  std::size_t k = 0;
  std::size_t vocab_size = 0;
  std::uint64_t vocab_hash = 0;
  double threshold = 0.5;
  bool score_capable = true;
  std::variant<LogisticRegression, NgramBayes, DecisionForest> params;

  // Drops unmonitored ids (outside the model vocabulary).
  std::vector<TokenId> monitor(std::span<const TokenId> tokens) const {
    std::vector<TokenId> out;
    out.reserve(tokens.size());
    for (TokenId t : tokens)
      if (t < vocab_size) out.push_back(t);
    return out;
  }

  double window_score(std::span<const TokenId> window) const {
    if (window.size() != k)
      throw EncodingError("window length " + std::to_string(window.size()) + " != model k " + std::to_string(k));
    for (TokenId t : window)
      if (t >= vocab_size) throw EncodingError("token id " + std::to_string(t) + " outside vocabulary");
    return std::visit(
        [&](const auto& p) -> double {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, LogisticRegression>) {
            return sigmoid(p.logit(window));
          } else if constexpr (std::is_same_v<P, NgramBayes>) {
            return sigmoid(p.logit(window));
          } else {
            std::vector<std::uint8_t> counts(vocab_size, 0);
            for (TokenId t : window)
              if (t != kNullToken && counts[t] < 255) ++counts[t];
            return p.score(counts);
          }
        },
        params);
  }
};

inline ClassificationResponse classify_window(const TrainedModel& model, std::span<const TokenId> window) {
  return respond(model.window_score(window), model.threshold);
}

// Per-window breakdown of a trace classification.
struct TraceClassification {
  ClassificationResponse response;
  std::vector<double> window_scores;
};

// Monitors, splits into k-windows and OR-aggregates. An empty trace is
// classified as a single all-padding window.
inline TraceClassification classify_trace_detailed(const TrainedModel& model, std::span<const TokenId> trace) {
  auto monitored = model.monitor(trace);
  auto windows = split_windows(monitored, model.k);
  if (windows.empty()) windows.emplace_back(model.k, kNullToken);
  TraceClassification out;
  out.window_scores.reserve(windows.size());
  double best = 0.0;
  for (const auto& w : windows) {
    double s = model.window_score(w);
    out.window_scores.push_back(s);
    best = std::max(best, s);
  }
  out.response = respond(best, model.threshold);
  return out;
}

inline ClassificationResponse classify_trace(const TrainedModel& model, std::span<const TokenId> trace) {
  return classify_trace_detailed(model, trace).response;
}

inline ClassificationResponse classify_trace(const TrainedModel& model, const Trace& trace) {
  return classify_trace(model, trace.ids());
}

// Number of model windows a trace occupies (the cost of a trace query).
inline std::size_t trace_window_count(const TrainedModel& model, std::span<const TokenId> trace) {
  std::size_t monitored = 0;
  for (TokenId t : trace) monitored += t < model.vocab_size ? 1 : 0;
  return std::max<std::size_t>(1, window_count(monitored, model.k));
}

//============= Training ===============

struct TrainParams {
  std::uint64_t seed = 1;
  double threshold = 0.5;
  bool balance_classes = true;
  // logistic regression
  int epochs = 4;
  double learning_rate = 0.1;
  double l2 = 1e-3;
  // naive Bayes
  double alpha = 1.0;
  // forest
  std::size_t trees = 10;
  std::size_t max_samples_per_tree = 40000;
  std::size_t min_samples_split = 2;
};

struct TrainResult {
  TrainedModel model;
  double heldout_accuracy = 0.0;
  double false_positive_rate = 0.0;
  double false_negative_rate = 0.0;
};

struct EvalStats {
  double accuracy = 0.0;
  double false_positive_rate = 0.0;
  double false_negative_rate = 0.0;
};

template <class Classify>
EvalStats evaluate_traces(const std::vector<Trace>& traces, Classify&& classify) {
  std::size_t correct = 0, pos = 0, neg = 0, fp = 0, fn = 0;
  for (const auto& t : traces) {
    if (t.label == Label::unknown) continue;
    bool mal = classify(t);
    bool truth = t.label == Label::malicious;
    correct += mal == truth;
    if (truth) {
      ++pos;
      fn += !mal;
    } else {
      ++neg;
      fp += mal;
    }
  }
  EvalStats s;
  if (pos + neg) s.accuracy = static_cast<double>(correct) / static_cast<double>(pos + neg);
  if (neg) s.false_positive_rate = static_cast<double>(fp) / static_cast<double>(neg);
  if (pos) s.false_negative_rate = static_cast<double>(fn) / static_cast<double>(pos);
  return s;
}

namespace detail {

struct WindowSet {
  std::vector<Window> windows;
  std::vector<std::uint8_t> labels;  // 1 = malicious
  std::vector<float> weights;
};

// Window labels inherit the trace label.
inline WindowSet build_windows(const std::vector<Trace>& traces, std::size_t k, std::size_t vocab_size,
                               bool balance) {
  WindowSet ws;
  for (const auto& t : traces) {
    if (t.label == Label::unknown) continue;
    std::vector<TokenId> ids;
    ids.reserve(t.size());
    for (const auto& c : t.calls)
      if (c.type < vocab_size) ids.push_back(c.type);
    auto windows = split_windows(ids, k);
    if (windows.empty()) windows.emplace_back(k, kNullToken);
    for (auto& w : windows) {
      ws.windows.push_back(std::move(w));
      ws.labels.push_back(t.label == Label::malicious ? 1 : 0);
    }
  }
  std::size_t n_mal = std::count(ws.labels.begin(), ws.labels.end(), 1);
  std::size_t n_ben = ws.labels.size() - n_mal;
  if (n_mal == 0 || n_ben == 0) throw TrainingError("training data needs both malicious and benign samples");
  double w_mal = 1.0, w_ben = 1.0;
  if (balance) {
    w_mal = static_cast<double>(ws.labels.size()) / (2.0 * static_cast<double>(n_mal));
    w_ben = static_cast<double>(ws.labels.size()) / (2.0 * static_cast<double>(n_ben));
  }
  ws.weights.reserve(ws.labels.size());
  for (auto y : ws.labels) ws.weights.push_back(static_cast<float>(y ? w_mal : w_ben));
  return ws;
}

inline LogisticRegression train_logistic(const WindowSet& ws, std::size_t vocab_size, const TrainParams& p) {
  LogisticRegression lr;
  lr.weights.assign(vocab_size, 0.0f);
  std::vector<std::size_t> order(ws.windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(p.seed);
  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double rate = p.learning_rate / (1.0 + epoch);
    for (std::size_t i : order) {
      const auto& w = ws.windows[i];
      double g = (sigmoid(lr.logit(w)) - ws.labels[i]) * ws.weights[i];
      for (TokenId t : w) {
        if (t == kNullToken) continue;
        lr.weights[t] -= static_cast<float>(rate * (g + p.l2 * lr.weights[t]));
      }
      lr.bias -= static_cast<float>(rate * g);
    }
  }
  return lr;
}

inline NgramBayes train_bayes(const WindowSet& ws, const TrainParams& p) {
  NgramBayes nb;
  nb.alpha = p.alpha;
  std::vector<double> counts[2] = {std::vector<double>(NgramBayes::kBuckets, 0.0),
                                   std::vector<double>(NgramBayes::kBuckets, 0.0)};
  double totals[2] = {0.0, 0.0};
  double class_weight[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < ws.windows.size(); ++i) {
    int y = ws.labels[i];
    double wt = ws.weights[i];
    class_weight[y] += wt;
    NgramHash::for_each_feature(ws.windows[i], [&](std::size_t b) {
      counts[y][b] += wt;
      totals[y] += wt;
    });
  }
  const double a = p.alpha;
  const double denom1 = totals[1] + a * NgramBayes::kBuckets;
  const double denom0 = totals[0] + a * NgramBayes::kBuckets;
  nb.log_ratio.resize(NgramBayes::kBuckets);
  for (std::size_t b = 0; b < NgramBayes::kBuckets; ++b)
    nb.log_ratio[b] = static_cast<float>(std::log((counts[1][b] + a) / denom1) - std::log((counts[0][b] + a) / denom0));
  nb.prior_log_odds = std::log(class_weight[1] / class_weight[0]);
  return nb;
}

class ForestBuilder {
 public:
  ForestBuilder(const WindowSet& ws, std::size_t vocab_size, const TrainParams& p)
      : ws_(ws), vocab_size_(vocab_size), params_(p), rng_(p.seed) {}

  DecisionForest Build() {
    DecisionForest forest;
    for (std::size_t t = 0; t < params_.trees; ++t) forest.trees.push_back(BuildTree());
    return forest;
  }

 private:
  DecisionForest::Tree BuildTree() {
    const std::size_t n = std::min(ws_.windows.size(), params_.max_samples_per_tree);
    std::uniform_int_distribution<std::size_t> pick(0, ws_.windows.size() - 1);
    counts_.assign(n * vocab_size_, 0);
    labels_.resize(n);
    weights_.resize(n);
    max_count_ = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t src = pick(rng_);
      labels_[i] = ws_.labels[src];
      weights_[i] = ws_.weights[src];
      for (TokenId t : ws_.windows[src]) {
        if (t == kNullToken) continue;
        auto& c = counts_[i * vocab_size_ + t];
        if (c < 255) ++c;
        max_count_ = std::max<std::size_t>(max_count_, c);
      }
    }
    std::vector<std::uint32_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);

    DecisionForest::Tree tree;
    tree.emplace_back();
    struct Job {
      std::int32_t node;
      std::size_t begin, end;
    };
    std::vector<Job> stack{{0, 0, n}};
    const std::size_t mtry =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(vocab_size_ - 1))));
    std::vector<TokenId> features(vocab_size_ - 1);
    std::iota(features.begin(), features.end(), 1);
    std::vector<double> hist(2 * (max_count_ + 1));

    while (!stack.empty()) {
      Job job = stack.back();
      stack.pop_back();
      double w[2] = {0.0, 0.0};
      for (std::size_t i = job.begin; i < job.end; ++i) w[labels_[rows[i]]] += weights_[rows[i]];
      const double total = w[0] + w[1];
      tree[job.node].malicious_fraction = total > 0 ? static_cast<float>(w[1] / total) : 0.0f;
      if (job.end - job.begin < params_.min_samples_split || w[0] == 0.0 || w[1] == 0.0) continue;

      const double parent_gini = 1.0 - (w[0] * w[0] + w[1] * w[1]) / (total * total);
      double best_gain = 1e-12;
      std::int32_t best_feature = -1;
      std::uint16_t best_threshold = 0;
      for (std::size_t f = 0; f < mtry; ++f) {
        std::uniform_int_distribution<std::size_t> fp(f, features.size() - 1);
        std::swap(features[f], features[fp(rng_)]);
        const TokenId feat = features[f];
        std::fill(hist.begin(), hist.end(), 0.0);
        std::size_t vmax = 0;
        for (std::size_t i = job.begin; i < job.end; ++i) {
          std::uint32_t r = rows[i];
          std::size_t v = counts_[r * vocab_size_ + feat];
          vmax = std::max(vmax, v);
          hist[2 * v + labels_[r]] += weights_[r];
        }
        double left[2] = {0.0, 0.0};
        for (std::size_t v = 0; v < vmax; ++v) {
          left[0] += hist[2 * v];
          left[1] += hist[2 * v + 1];
          double lt = left[0] + left[1];
          double rt = total - lt;
          if (lt <= 0.0 || rt <= 0.0) continue;
          double r0 = w[0] - left[0], r1 = w[1] - left[1];
          double gini = (lt * (1.0 - (left[0] * left[0] + left[1] * left[1]) / (lt * lt)) +
                         rt * (1.0 - (r0 * r0 + r1 * r1) / (rt * rt))) /
                        total;
          double gain = parent_gini - gini;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<std::int32_t>(feat);
            best_threshold = static_cast<std::uint16_t>(v);
          }
        }
      }
      if (best_feature < 0) continue;
      auto mid = std::partition(rows.begin() + job.begin, rows.begin() + job.end, [&](std::uint32_t r) {
        return counts_[r * vocab_size_ + best_feature] <= best_threshold;
      });
      std::size_t split = static_cast<std::size_t>(mid - rows.begin());
      auto left_id = static_cast<std::int32_t>(tree.size());
      tree.emplace_back();
      tree.emplace_back();
      tree[job.node].feature = best_feature;
      tree[job.node].threshold = best_threshold;
      tree[job.node].left = left_id;
      tree[job.node].right = left_id + 1;
      stack.push_back({left_id, job.begin, split});
      stack.push_back({left_id + 1, split, job.end});
    }
    return tree;
  }

  const WindowSet& ws_;
  std::size_t vocab_size_;
  TrainParams params_;
  std::mt19937_64 rng_;
  std::vector<std::uint8_t> counts_;
  std::vector<std::uint8_t> labels_;
  std::vector<float> weights_;
  std::size_t max_count_ = 0;
};

}  // namespace detail

// Trains a window classifier. `heldout` (may be empty) is used only to report
// trace-level accuracy.
inline TrainResult train(const std::vector<Trace>& dataset, const std::vector<Trace>& heldout,
                         const Vocabulary& vocab, ModelKind kind, std::size_t k, const TrainParams& p = {}) {
  if (k == 0) throw TrainingError("window size k must be >= 1");
  auto ws = detail::build_windows(dataset, k, vocab.size(), p.balance_classes);
  TrainResult result;
  auto& m = result.model;
  m.kind = kind;
  m.k = k;
  m.vocab_size = vocab.size();
  m.vocab_hash = vocab.hash();
  m.threshold = p.threshold;
  m.score_capable = true;
  switch (kind) {
    case ModelKind::logistic_regression:
      m.params = detail::train_logistic(ws, vocab.size(), p);
      break;
    case ModelKind::ngram_bayes:
      m.params = detail::train_bayes(ws, p);
      break;
    case ModelKind::decision_forest:
      m.params = detail::ForestBuilder(ws, vocab.size(), p).Build();
      break;
  }
  if (!heldout.empty()) {
    auto stats = evaluate_traces(heldout, [&](const Trace& t) { return classify_trace(m, t).malicious(); });
    result.heldout_accuracy = stats.accuracy;
    result.false_positive_rate = stats.false_positive_rate;
    result.false_negative_rate = stats.false_negative_rate;
  }
  return result;
}

//============= Static and hybrid models ===============

// Logistic regression over static string-presence bits.
struct StaticModel {
  std::size_t dim = 0;
  std::vector<float> weights;
  float bias = 0.0f;
  double threshold = 0.5;

  double score(const StaticFeatureVector& v) const {
    if (v.dim() != dim) throw EncodingError("static vector dimension mismatch");
    double z = bias;
    v.for_each_one([&](std::uint32_t b) { z += weights[b]; });
    return sigmoid(z);
  }
};

inline ClassificationResponse classify_static(const StaticModel& m, const StaticFeatureVector& v) {
  return respond(m.score(v), m.threshold);
}

inline StaticModel train_static(const std::vector<StaticFeatureVector>& vectors, const std::vector<Label>& labels,
                                const TrainParams& p = {}) {
  if (vectors.empty() || vectors.size() != labels.size()) throw TrainingError("static training set is empty or ragged");
  StaticModel m;
  m.dim = vectors.front().dim();
  m.weights.assign(m.dim, 0.0f);
  m.threshold = p.threshold;
  std::size_t n_mal = std::count(labels.begin(), labels.end(), Label::malicious);
  std::size_t n_ben = std::count(labels.begin(), labels.end(), Label::benign);
  if (!n_mal || !n_ben) throw TrainingError("static training data needs both classes");
  const double n = static_cast<double>(n_mal + n_ben);
  const double w_mal = p.balance_classes ? n / (2.0 * n_mal) : 1.0;
  const double w_ben = p.balance_classes ? n / (2.0 * n_ben) : 1.0;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < vectors.size(); ++i)
    if (labels[i] != Label::unknown) order.push_back(i);
  std::mt19937_64 rng(p.seed ^ 0x5a5a5a5aULL);
  for (int epoch = 0; epoch < p.epochs * 2; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double rate = p.learning_rate / (1.0 + epoch);
    for (std::size_t i : order) {
      const auto& v = vectors[i];
      if (v.dim() != m.dim) throw TrainingError("static vectors differ in dimension");
      int y = labels[i] == Label::malicious;
      double g = (m.score(v) - y) * (y ? w_mal : w_ben);
      v.for_each_one([&](std::uint32_t b) { m.weights[b] -= static_cast<float>(rate * (g + p.l2 * m.weights[b])); });
      m.bias -= static_cast<float>(rate * g);
    }
  }
  return m;
}

enum class Fusion { mean, max, weighted };

inline std::string_view to_string(Fusion f) {
  switch (f) {
    case Fusion::mean: return "mean";
    case Fusion::max: return "max";
    case Fusion::weighted: return "weighted";
  }
  return "?";
}

inline Fusion fusion_from_string(std::string_view s) {
  if (s == "mean") return Fusion::mean;
  if (s == "max") return Fusion::max;
  if (s == "weighted") return Fusion::weighted;
  throw ConfigError("unknown fusion rule: " + std::string(s));
}

struct HybridModel {
  TrainedModel dynamic;
  StaticModel static_model;
  Fusion fusion = Fusion::mean;
  double dynamic_weight = 0.5;  // used by Fusion::weighted
  double threshold = 0.5;

  double fuse(double dynamic_score, double static_score) const {
    switch (fusion) {
      case Fusion::mean: return 0.5 * (dynamic_score + static_score);
      case Fusion::max: return std::max(dynamic_score, static_score);
      case Fusion::weighted: return dynamic_weight * dynamic_score + (1.0 - dynamic_weight) * static_score;
    }
    return 0.0;
  }
};

// Fused decision over a full trace and its static vector.
inline ClassificationResponse classify_hybrid(const HybridModel& m, std::span<const TokenId> trace,
                                              const StaticFeatureVector& s) {
  if (s.dim() != m.static_model.dim) throw EncodingError("static vector dimension mismatch");
  double d = *classify_trace(m.dynamic, trace).score;
  return respond(m.fuse(d, m.static_model.score(s)), m.threshold);
}

//============= Persistence ===============

inline nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "seqevade-model";
  j["version"] = 1;
  j["kind"] = to_string(m.kind);
  j["k"] = m.k;
  j["vocab_size"] = m.vocab_size;
  j["vocab_hash"] = HexDigest(m.vocab_hash);
  j["threshold"] = m.threshold;
  j["score_capable"] = m.score_capable;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LogisticRegression>) {
          j["params"] = {{"bias", p.bias}, {"weights", p.weights}};
        } else if constexpr (std::is_same_v<P, NgramBayes>) {
          j["params"] = {{"alpha", p.alpha}, {"prior_log_odds", p.prior_log_odds}, {"log_ratio", p.log_ratio}};
        } else {
          nlohmann::json trees = nlohmann::json::array();
          for (const auto& tree : p.trees) {
            nlohmann::json nodes = nlohmann::json::array();
            for (const auto& n : tree)
              nodes.push_back({n.feature, n.threshold, n.left, n.right, n.malicious_fraction});
            trees.push_back(std::move(nodes));
          }
          j["params"] = {{"trees", std::move(trees)}};
        }
      },
      m.params);
  return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "seqevade-model" || j.value("version", 0) != 1)
    throw EncodingError("not a seqevade model file (format/version mismatch)");
  TrainedModel m;
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  m.k = j.at("k").get<std::size_t>();
  m.vocab_size = j.at("vocab_size").get<std::size_t>();
  m.vocab_hash = std::stoull(j.at("vocab_hash").get<std::string>(), nullptr, 16);
  m.threshold = j.at("threshold").get<double>();
  m.score_capable = j.value("score_capable", true);
  const auto& p = j.at("params");
  switch (m.kind) {
    case ModelKind::logistic_regression: {
      LogisticRegression lr;
      lr.bias = p.at("bias").get<float>();
      lr.weights = p.at("weights").get<std::vector<float>>();
      if (lr.weights.size() != m.vocab_size) throw EncodingError("logistic weights have the wrong size");
      m.params = std::move(lr);
      break;
    }
    case ModelKind::ngram_bayes: {
      NgramBayes nb;
      nb.alpha = p.at("alpha").get<double>();
      nb.prior_log_odds = p.at("prior_log_odds").get<double>();
      nb.log_ratio = p.at("log_ratio").get<std::vector<float>>();
      if (nb.log_ratio.size() != NgramBayes::kBuckets) throw EncodingError("bayes table has the wrong size");
      m.params = std::move(nb);
      break;
    }
    case ModelKind::decision_forest: {
      DecisionForest f;
      for (const auto& tj : p.at("trees")) {
        DecisionForest::Tree tree;
        for (const auto& nj : tj)
          tree.push_back({nj.at(0).get<std::int32_t>(), nj.at(1).get<std::uint16_t>(), nj.at(2).get<std::int32_t>(),
                          nj.at(3).get<std::int32_t>(), nj.at(4).get<float>()});
        f.trees.push_back(std::move(tree));
      }
      m.params = std::move(f);
      break;
    }
  }
  return m;
}

inline nlohmann::json to_json(const HybridModel& m) {
  nlohmann::json j;
  j["format"] = "seqevade-hybrid";
  j["version"] = 1;
  j["dynamic"] = to_json(m.dynamic);
  j["static"] = {{"dim", m.static_model.dim},
                 {"bias", m.static_model.bias},
                 {"threshold", m.static_model.threshold},
                 {"weights", m.static_model.weights}};
  j["fusion"] = to_string(m.fusion);
  j["dynamic_weight"] = m.dynamic_weight;
  j["threshold"] = m.threshold;
  return j;
}

inline HybridModel hybrid_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "seqevade-hybrid" || j.value("version", 0) != 1)
    throw EncodingError("not a seqevade hybrid model file");
  HybridModel m;
  m.dynamic = model_from_json(j.at("dynamic"));
  const auto& s = j.at("static");
  m.static_model.dim = s.at("dim").get<std::size_t>();
  m.static_model.bias = s.at("bias").get<float>();
  m.static_model.threshold = s.at("threshold").get<double>();
  m.static_model.weights = s.at("weights").get<std::vector<float>>();
  m.fusion = fusion_from_string(j.at("fusion").get<std::string>());
  m.dynamic_weight = j.at("dynamic_weight").get<double>();
  m.threshold = j.at("threshold").get<double>();
  return m;
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model file: " + path);
  out << to_json(m).dump() << '\n';
}

// Loads a model and checks it was trained against `vocab`.
inline TrainedModel load_model(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read model file: " + path);
  auto m = model_from_json(nlohmann::json::parse(in));
  if (m.vocab_hash != vocab.hash() || m.vocab_size != vocab.size())
    throw EncodingError("model " + path + " was trained on a different vocabulary");
  return m;
}

}  // namespace seqevade

#endif  // SEQEVADE_TARGETS_HPP_
