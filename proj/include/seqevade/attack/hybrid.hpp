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

// Attacks on static bit vectors and on hybrid (sequence + static) targets.

#ifndef SEQEVADE_ATTACK_HYBRID_HPP_
#define SEQEVADE_ATTACK_HYBRID_HPP_

#include <algorithm>
#include <optional>
#include <unordered_map>
#include <span>
#include <vector>

#include "seqevade/attack/attack.hpp"

namespace seqevade {

// Bits set most often in benign vectors, most frequent first.
struct BenignProfile {
  std::vector<std::uint32_t> bits;

  static BenignProfile FromVectors(std::span<const StaticFeatureVector> benign, std::size_t top = 1000) {
    std::unordered_map<std::uint32_t, std::size_t> freq;
    for (const auto& v : benign) v.for_each_one([&](std::uint32_t b) { ++freq[b]; });
    BenignProfile p;
    for (const auto& [b, c] : freq) p.bits.push_back(b);
    std::sort(p.bits.begin(), p.bits.end(), [&](std::uint32_t a, std::uint32_t b) {
      return freq[a] != freq[b] ? freq[a] > freq[b] : a < b;
    });
    if (p.bits.size() > top) p.bits.resize(top);
    return p;
  }
};

struct StaticAttackResult {
  StaticFeatureVector vector;
  bool initially_malicious = false;
  bool evaded = false;
  bool budget_hit = false;
  std::size_t queries = 0;
  std::size_t backtrack_queries = 0;
};

namespace detail {

template <class Rng>
std::vector<std::uint32_t> pick_static_bits(const StaticFeatureVector& v, const BenignProfile* profile,
                                            PerturbType perturb, std::size_t count, Rng& rng) {
  std::vector<std::uint32_t> out;
  if (perturb == PerturbType::benign) {
    std::vector<std::uint32_t> pool;
    for (auto b : profile->bits)
      if (!v.test(b)) pool.push_back(b);
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() > count) pool.resize(count);
    return pool;
  }
  std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(v.dim() - 1));
  for (std::size_t tries = 0; out.size() < count && tries < count * 64; ++tries) {
    auto b = any(rng);
    if (!v.test(b) && std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  }
  return out;
}

}  // namespace detail

// Add-only attack on a static vector. Original bits are never cleared.
// Linear mode flips one bit per query; backtracking mode flips a full set
// per attempt (up to B attempts) and then prunes it.
template <class Rng>
StaticAttackResult static_attack(const StaticOracle& oracle, const StaticFeatureVector& input,
                                 const BenignProfile* profile, const AttackConfig& cfg, QueryBudget& budget, Rng& rng,
                                 std::optional<ClassificationResponse> known_initial = std::nullopt) {
  if (cfg.perturb == PerturbType::benign && !profile)
    throw ConfigError("benign static perturbation requires a benign profile");
  StaticAttackResult r;
  r.vector = input;
  auto query = [&](const StaticFeatureVector& v) {
    budget.charge();
    ++r.queries;
    return oracle(v);
  };
  if (!known_initial) {
    if (!budget.can_query()) {
      r.budget_hit = true;
      return r;
    }
    known_initial = query(r.vector);
  }
  r.initially_malicious = known_initial->malicious();
  if (!r.initially_malicious) {
    r.evaded = true;
    return r;
  }
  const std::size_t cap = cfg.static_flips();

  if (cfg.method == AddingMethod::linear_iteration) {
    auto bits = detail::pick_static_bits(input, profile, cfg.perturb, cap, rng);
    for (auto b : bits) {
      if (!budget.can_query()) {
        r.budget_hit = true;
        return r;
      }
      r.vector.add(b);
      if (!query(r.vector).malicious()) {
        r.evaded = true;
        return r;
      }
    }
    return r;
  }

  std::vector<std::uint32_t> bits;
  for (std::size_t attempt = 0; attempt < cfg.budget_per_window() && !r.evaded; ++attempt) {
    if (!budget.can_query()) {
      r.budget_hit = true;
      break;
    }
    r.vector = input;
    bits = detail::pick_static_bits(input, profile, cfg.perturb, cap, rng);
    for (auto b : bits) r.vector.add(b);
    r.evaded = !query(r.vector).malicious();
  }
  if (!r.evaded || bits.size() < 2) return r;

  std::vector<char> active(bits.size(), 1);
  auto with = [&](std::span<const char> mask) {
    StaticFeatureVector v = input;
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (mask[i]) v.add(bits[i]);
    return v;
  };
  auto evades = [&](std::span<const char> mask) { return !query(with(mask)).malicious(); };
  auto st = log_backtrack(active, evades, [&] { return budget.can_query(); }, rng);
  r.backtrack_queries = st.queries;
  r.budget_hit = st.budget_hit;
  r.vector = with(active);
  return r;
}

enum class FeaturePhase { dynamic, static_features };

// Attacks each feature type in turn until the hybrid input is classified
// benign. Each phase gets its own sample budget.
inline AttackOutcome hybrid_attack(HybridOracle& oracle, const Trace& trace, const StaticFeatureVector& input,
                                   const BenignProvider* provider, const BenignProfile* profile,
                                   const AttackConfig& cfg,
                                   std::vector<FeaturePhase> order = {FeaturePhase::dynamic,
                                                                      FeaturePhase::static_features}) {
  cfg.Validate();
  AttackOutcome out;
  out.sample_id = trace.id;
  out.ledger = PerturbationLedger(std::make_shared<const Trace>(trace), cfg.forbidden, cfg.max_insertions);
  out.final_trace = trace;

  StaticFeatureVector current_static = input;
  std::vector<TokenId> current_ids = trace.ids();
  ClassificationResponse last;
  try {
    last = oracle.classify_trace(current_ids, current_static);
  } catch (const ThrottledError&) {
    out.stop = StopReason::throttled;
    return out;
  } catch (const OracleError&) {
    out.stop = StopReason::oracle_unavailable;
    return out;
  }
  ++out.queries.trace_calls;
  out.originally_malicious = last.malicious();
  if (!out.originally_malicious) {
    out.evaded = true;
    out.stop = StopReason::not_malicious;
    return out;
  }

  Rng rng(cfg.seed ^ 0x5bd1e995ULL);
  for (auto phase : order) {
    if (phase == FeaturePhase::dynamic) {
      FixedStaticOracle view(oracle, current_static);
      auto o = full_sequence_attack(view, trace, provider, cfg, last);
      out.queries += o.queries;
      out.ledger = std::move(o.ledger);
      out.final_trace = std::move(o.final_trace);
      out.per_window = std::move(o.per_window);
      out.overhead = o.overhead;
      out.stop = o.stop;
      current_ids = out.final_trace.ids();
      if (o.stop == StopReason::throttled || o.stop == StopReason::oracle_unavailable) return out;
      last = ClassificationResponse{o.evaded ? Decision::benign : Decision::malicious, std::nullopt};
      if (o.evaded) {
        out.evaded = true;
        break;
      }
    } else {
      QueryBudget budget(cfg.sample_budget);
      std::size_t charged = 0;
      StaticOracle q = [&](const StaticFeatureVector& v) {
        ++charged;
        return oracle.classify_trace(current_ids, v);
      };
      try {
        auto r = static_attack(q, current_static, profile, cfg, budget, rng, last);
        out.queries.trace_calls += charged;
        current_static = r.vector;
        out.stop = r.budget_hit ? StopReason::budget_exhausted : StopReason::completed;
        if (r.evaded) {
          out.evaded = true;
          break;
        }
      } catch (const ThrottledError&) {
        out.queries.trace_calls += charged - 1;
        out.stop = StopReason::throttled;
        break;
      } catch (const OracleError&) {
        out.queries.trace_calls += charged - 1;
        out.stop = StopReason::oracle_unavailable;
        break;
      }
    }
  }
  out.static_added = current_static.added();
  return out;
}

}  // namespace seqevade

#endif  // SEQEVADE_ATTACK_HYBRID_HPP_
