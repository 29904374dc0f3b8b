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

// Sources of benign-looking call sequences and no-op call arguments.

#ifndef SEQEVADE_ATTACK_BENIGN_HPP_
#define SEQEVADE_ATTACK_BENIGN_HPP_

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "seqevade/core.hpp"

namespace seqevade {

// Emits windows of insertable tokens that resemble benign traffic. Either an
// order-m Markov chain fit on benign traces or verbatim replay of benign
// trace segments. Tokens outside `allowed` are never emitted.
class BenignProvider {
 public:
  enum class Kind { markov, corpus_replay };

  static BenignProvider Markov(std::span<const Trace> benign, std::span<const TokenId> allowed,
                               std::size_t order = 1) {
    if (order == 0) throw ConfigError("markov order must be positive");
    BenignProvider p(Kind::markov, allowed);
    p.order_ = order;
    std::unordered_map<std::uint64_t, std::unordered_map<TokenId, std::uint64_t>> counts;
    std::unordered_map<TokenId, std::uint64_t> unigram;
    for (const auto& t : benign) {
      auto ids = t.ids();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!p.allowed_.contains(ids[i])) continue;
        ++unigram[ids[i]];
        if (i >= order) ++counts[ContextKey(std::span(ids).subspan(i - order, order))][ids[i]];
      }
    }
    if (unigram.empty()) throw ConfigError("no benign traces with insertable tokens");
    p.start_ = Table::From(unigram);
    for (auto& [key, next] : counts) p.transitions_.emplace(key, Table::From(next));
    return p;
  }

  static BenignProvider CorpusReplay(std::span<const Trace> benign, std::span<const TokenId> allowed) {
    BenignProvider p(Kind::corpus_replay, allowed);
    for (const auto& t : benign) {
      std::vector<TokenId> kept;
      for (TokenId id : t.ids())
        if (p.allowed_.contains(id)) kept.push_back(id);
      if (!kept.empty()) p.replay_.push_back(std::move(kept));
    }
    if (p.replay_.empty()) throw ConfigError("no benign traces with insertable tokens");
    return p;
  }

  Kind kind() const { return kind_; }
  std::size_t order() const { return order_; }

  template <class Rng>
  Window window(std::size_t n, Rng& rng) const {
    return kind_ == Kind::markov ? MarkovWindow(n, rng) : ReplayWindow(n, rng);
  }

 private:
  struct Table {
    std::vector<TokenId> tokens;
    std::vector<double> weights;

    static Table From(const std::unordered_map<TokenId, std::uint64_t>& counts) {
      Table t;
      for (const auto& [tok, c] : counts) t.tokens.push_back(tok);
      std::sort(t.tokens.begin(), t.tokens.end());
      for (TokenId tok : t.tokens) t.weights.push_back(static_cast<double>(counts.at(tok)));
      return t;
    }

    template <class Rng>
    TokenId Sample(Rng& rng) const {
      std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
      return tokens[d(rng)];
    }
  };

  BenignProvider(Kind kind, std::span<const TokenId> allowed) : kind_(kind), allowed_(allowed.begin(), allowed.end()) {
    if (allowed_.empty()) throw ConfigError("benign provider needs a non-empty insertable set");
  }

  static std::uint64_t ContextKey(std::span<const TokenId> ctx) {
    Fnv1a h;
    for (TokenId t : ctx) h.Update(static_cast<std::uint64_t>(t));
    return h.digest();
  }

  template <class Rng>
  Window MarkovWindow(std::size_t n, Rng& rng) const {
    Window w;
    w.reserve(n);
    while (w.size() < n) {
      const Table* next = &start_;
      if (w.size() >= order_) {
        auto it = transitions_.find(ContextKey(std::span(w).subspan(w.size() - order_, order_)));
        if (it != transitions_.end()) next = &it->second;
      }
      w.push_back(next->Sample(rng));
    }
    return w;
  }

  template <class Rng>
  Window ReplayWindow(std::size_t n, Rng& rng) const {
    const auto& src = replay_[std::uniform_int_distribution<std::size_t>(0, replay_.size() - 1)(rng)];
    std::size_t start = src.size() > n ? std::uniform_int_distribution<std::size_t>(0, src.size() - n)(rng) : 0;
    Window w;
    w.reserve(n);
    for (std::size_t i = 0; w.size() < n; ++i) w.push_back(src[(start + i) % src.size()]);
    return w;
  }

  Kind kind_;
  std::unordered_set<TokenId> allowed_;
  std::size_t order_ = 0;
  Table start_;
  std::unordered_map<std::uint64_t, Table> transitions_;
  std::vector<std::vector<TokenId>> replay_;
};

template <class Rng>
Window benign_window(const BenignProvider& provider, std::size_t n, Rng& rng) {
  return provider.window(n, rng);
}

//============= No-op arguments ===============

// Argument tuples per call type. An inserted call draws one tuple so that it
// has no side effect (nonexistent paths, harmless hosts).
using ArgPools = std::unordered_map<TokenId, std::vector<std::vector<std::string>>>;

inline ArgPools default_arg_pools(const Vocabulary& vocab) {
  static const std::vector<std::vector<std::string>> kFiles = {
      {"C:\\Users\\Public\\AppData\\Local\\Temp\\~sv3a1f.tmp"},
      {"C:\\Users\\Public\\AppData\\Local\\Temp\\~sv9c07.tmp"},
      {"C:\\ProgramData\\sv\\nonexistent.ini"},
  };
  static const std::vector<std::vector<std::string>> kHosts = {
      {"www.google.com", "80"}, {"www.wikipedia.org", "443"}, {"www.bing.com", "443"}};
  static const std::vector<std::vector<std::string>> kKeys = {
      {"HKCU\\Software\\SvNoop", "Value0"}, {"HKCU\\Software\\SvNoop\\Sub", "Value1"}};
  ArgPools pools;
  for (TokenId id : vocab.insertable()) {
    switch (id % 7) {
      case 1: pools[id] = kFiles; break;
      case 3: pools[id] = kHosts; break;
      case 5: pools[id] = kKeys; break;
      default: break;
    }
  }
  return pools;
}

// Types without a pool get no arguments.
template <class Rng>
ApiToken sample_noop_args(TokenId type, const ArgPools& pools, Rng& rng) {
  ApiToken t{type, {}};
  auto it = pools.find(type);
  if (it != pools.end() && !it->second.empty())
    t.args = it->second[std::uniform_int_distribution<std::size_t>(0, it->second.size() - 1)(rng)];
  return t;
}

}  // namespace seqevade

#endif  // SEQEVADE_ATTACK_BENIGN_HPP_
