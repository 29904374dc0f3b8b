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

// Sliding-window insertion attack.
//
// The perturbed trace is cut into consecutive windows of n calls. Each window
// is attacked in turn by inserting calls before its original calls; whatever
// the insertions push past the window's end becomes the head of the next
// window, so every original call is seen exactly once.
//
// Three axes select the variant:
//   knowledge      decision (label only) or score (label + malicious score)
//   perturbation   random tokens from D', or tokens of a benign-looking window
//   adding method  linear (query after every insertion) or logarithmic
//                  backtracking (insert M_w at once, then prune by halving)

#ifndef SEQEVADE_ATTACK_ATTACK_HPP_
#define SEQEVADE_ATTACK_ATTACK_HPP_

#include <algorithm>
#include <bit>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqevade/attack/benign.hpp"
#include "seqevade/attack/optimizers.hpp"
#include "seqevade/core.hpp"
#include "seqevade/oracle.hpp"

namespace seqevade {

using Rng = std::mt19937_64;

enum class PerturbType { random, benign };
enum class AddingMethod { linear_iteration, logarithmic_backtracking };
enum class OptimizerKind { ea, ga };

inline std::string_view to_string(PerturbType p) { return p == PerturbType::benign ? "benign" : "random"; }
inline std::string_view to_string(AddingMethod m) {
  return m == AddingMethod::linear_iteration ? "linear" : "logbt";
}
inline std::string_view to_string(OptimizerKind o) { return o == OptimizerKind::ga ? "ga" : "ea"; }

inline PerturbType perturb_type_from_string(std::string_view s) {
  if (s == "benign") return PerturbType::benign;
  if (s == "random") return PerturbType::random;
  throw ConfigError("unknown perturbation type: " + std::string(s));
}

inline AddingMethod adding_method_from_string(std::string_view s) {
  if (s == "linear" || s == "linear_iteration") return AddingMethod::linear_iteration;
  if (s == "logbt" || s == "logarithmic_backtracking") return AddingMethod::logarithmic_backtracking;
  throw ConfigError("unknown adding method: " + std::string(s));
}

inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "ea") return OptimizerKind::ea;
  if (s == "ga") return OptimizerKind::ga;
  throw ConfigError("unknown optimizer: " + std::string(s));
}

inline std::size_t ceil_log2(std::size_t x) { return x <= 1 ? 0 : std::bit_width(x - 1); }

struct AttackConfig {
  Knowledge knowledge = Knowledge::decision;
  PerturbType perturb = PerturbType::benign;
  AddingMethod method = AddingMethod::logarithmic_backtracking;
  std::size_t n = 140;
  std::size_t max_insertions = 70;  // M_w
  std::size_t window_budget = 0;    // B; 0 means M_w
  std::size_t sample_budget = 200;  // 0 means unlimited
  // Total insertions as a fraction of the original length; unset means M_w/n.
  std::optional<double> max_overhead;
  std::vector<TokenId> attacker_vocab;  // D'
  std::vector<TokenId> forbidden;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::ea;
  MinimizerParams minimizer;
  ArgPools arg_pools;
  // Static-feature attack: bits flipped per attempt; 0 means M_w.
  std::size_t static_max_flips = 0;

  // D', forbidden ids and argument pools taken from the target vocabulary.
  static AttackConfig For(const Vocabulary& vocab) {
    AttackConfig c;
    c.attacker_vocab = vocab.insertable();
    c.forbidden = vocab.forbidden_ids();
    c.arg_pools = default_arg_pools(vocab);
    return c;
  }

  std::size_t budget_per_window() const { return window_budget == 0 ? max_insertions : window_budget; }
  std::size_t static_flips() const { return static_max_flips == 0 ? max_insertions : static_max_flips; }
  double overhead_cap() const {
    return max_overhead ? *max_overhead : static_cast<double>(max_insertions) / static_cast<double>(n);
  }

  void Validate() const {
    if (n == 0) throw ConfigError("window size n must be at least 1");
    if (max_insertions == 0) throw ConfigError("M_w must be at least 1");
    if (attacker_vocab.empty()) throw ConfigError("attacker vocabulary is empty");
    if (sample_budget == 1) throw ConfigError("sample budget must allow an initial and a final query");
    if (overhead_cap() < 0) throw ConfigError("max overhead must be non-negative");
    for (TokenId t : attacker_vocab) {
      if (t == kNullToken) throw ConfigError("attacker vocabulary contains the padding token");
      if (std::find(forbidden.begin(), forbidden.end(), t) != forbidden.end())
        throw ConfigError("attacker vocabulary contains forbidden token " + std::to_string(t));
    }
  }
};

inline nlohmann::json to_json(const AttackConfig& c) {
  return {
      {"knowledge", to_string(c.knowledge)},
      {"perturb", to_string(c.perturb)},
      {"method", to_string(c.method)},
      {"n", c.n},
      {"max_insertions", c.max_insertions},
      {"window_budget", c.budget_per_window()},
      {"sample_budget", c.sample_budget},
      {"max_overhead", c.overhead_cap()},
      {"attacker_vocab", c.attacker_vocab},
      {"forbidden", c.forbidden},
      {"seed", c.seed},
      {"optimizer", to_string(c.optimizer)},
      {"population", c.minimizer.population},
      {"low_rate_factor", c.minimizer.low_rate_factor},
      {"high_rate_factor", c.minimizer.high_rate_factor},
      {"switch_probability", c.minimizer.switch_probability},
      {"ga_rate_factor", c.minimizer.ga_rate_factor},
      {"threshold", c.minimizer.stop_below},
      {"static_max_flips", c.static_flips()},
  };
}

// Fields absent from `j` keep their value in `base`.
inline AttackConfig attack_config_from_json(const nlohmann::json& j, AttackConfig base = {}) {
  if (j.contains("knowledge")) base.knowledge = knowledge_from_string(j["knowledge"].get<std::string>());
  if (j.contains("perturb")) base.perturb = perturb_type_from_string(j["perturb"].get<std::string>());
  if (j.contains("method")) base.method = adding_method_from_string(j["method"].get<std::string>());
  if (j.contains("optimizer")) base.optimizer = optimizer_from_string(j["optimizer"].get<std::string>());
  base.n = j.value("n", base.n);
  base.max_insertions = j.value("max_insertions", base.max_insertions);
  base.window_budget = j.value("window_budget", base.window_budget);
  base.sample_budget = j.value("sample_budget", base.sample_budget);
  if (j.contains("max_overhead")) base.max_overhead = j["max_overhead"].get<double>();
  base.attacker_vocab = j.value("attacker_vocab", base.attacker_vocab);
  base.forbidden = j.value("forbidden", base.forbidden);
  base.seed = j.value("seed", base.seed);
  base.minimizer.population = j.value("population", base.minimizer.population);
  base.minimizer.low_rate_factor = j.value("low_rate_factor", base.minimizer.low_rate_factor);
  base.minimizer.high_rate_factor = j.value("high_rate_factor", base.minimizer.high_rate_factor);
  base.minimizer.switch_probability = j.value("switch_probability", base.minimizer.switch_probability);
  base.minimizer.ga_rate_factor = j.value("ga_rate_factor", base.minimizer.ga_rate_factor);
  base.minimizer.stop_below = j.value("threshold", base.minimizer.stop_below);
  base.static_max_flips = j.value("static_max_flips", base.static_max_flips);
  return base;
}

//============= Query accounting ===============

// Per-sample query allowance. One unit is held back for the final
// whole-trace verification.
class QueryBudget {
 public:
  explicit QueryBudget(std::size_t limit, std::size_t reserve = 0) : limit_(limit), reserve_(reserve) {}

  std::size_t used() const { return used_; }
  bool unlimited() const { return limit_ == 0; }

  std::size_t remaining() const {
    if (unlimited()) return std::numeric_limits<std::size_t>::max();
    return used_ + reserve_ >= limit_ ? 0 : limit_ - used_ - reserve_;
  }

  bool can_query() const { return remaining() > 0; }
  void charge() { ++used_; }
  void release_reserve() { reserve_ = 0; }

 private:
  std::size_t limit_;
  std::size_t reserve_;
  std::size_t used_ = 0;
};

struct QueryUsage {
  std::size_t window_calls = 0;
  std::size_t trace_calls = 0;

  std::size_t total() const { return window_calls + trace_calls; }
  QueryUsage& operator+=(const QueryUsage& o) {
    window_calls += o.window_calls;
    trace_calls += o.trace_calls;
    return *this;
  }
  friend bool operator==(const QueryUsage&, const QueryUsage&) = default;
};

// Oracle access for one sample: counts every call and enforces the budget.
class AttackSession {
 public:
  AttackSession(Oracle& oracle, QueryBudget& budget) : oracle_(oracle), budget_(budget) {}

  Knowledge knowledge() const { return oracle_.knowledge(); }
  QueryBudget& budget() { return budget_; }
  const QueryUsage& usage() const { return usage_; }

  ClassificationResponse window(std::span<const TokenId> w) {
    Require();
    auto r = oracle_.classify_window(w);
    budget_.charge();
    ++usage_.window_calls;
    return r;
  }

  ClassificationResponse trace(std::span<const TokenId> t) {
    Require();
    auto r = oracle_.classify_trace(t);
    budget_.charge();
    ++usage_.trace_calls;
    return r;
  }

 private:
  void Require() const {
    if (!budget_.can_query()) throw std::logic_error("attack queried past its budget");
  }

  Oracle& oracle_;
  QueryBudget& budget_;
  QueryUsage usage_;
};

//============= Backtracking ===============

struct BacktrackStats {
  std::size_t queries = 0;
  bool budget_hit = false;
};

namespace detail {

template <class Rng>
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> random_halves(std::vector<std::size_t> set, Rng& rng) {
  std::shuffle(set.begin(), set.end(), rng);
  std::size_t keep = (set.size() + 1) / 2;
  return {std::vector<std::size_t>(set.begin(), set.begin() + keep),
          std::vector<std::size_t>(set.begin() + keep, set.end())};
}

inline void set_mask(std::vector<char>& mask, std::span<const std::size_t> on) {
  std::fill(mask.begin(), mask.end(), 0);
  for (auto i : on) mask[i] = 1;
}

}  // namespace detail

// Prunes a known-evading insertion set. `active` marks the set on entry and
// holds a still-evading subset on return. `evades(mask)` costs one query.
//
// Removal: split the set into a larger half R and smaller half D; keep R if R
// alone evades, else keep D if D alone evades. When neither half evades,
// restore: starting from R, add back random halves of the remaining D until
// evasion returns (adding all of D recreates the known-good set and needs no
// query). At most 2(ceil(log2 |set|) + 1) queries.
template <class Evades, class CanQuery, class Rng>
BacktrackStats log_backtrack(std::vector<char>& active, Evades&& evades, CanQuery&& can_query, Rng& rng) {
  BacktrackStats st;
  std::vector<std::size_t> good;
  for (std::size_t i = 0; i < active.size(); ++i)
    if (active[i]) good.push_back(i);
  std::vector<char> mask(active.size(), 0);
  auto try_set = [&](std::span<const std::size_t> s) {
    detail::set_mask(mask, s);
    ++st.queries;
    return evades(std::span<const char>(mask));
  };

  while (good.size() > 1) {
    if (!can_query()) {
      st.budget_hit = true;
      break;
    }
    auto [keep, drop] = detail::random_halves(good, rng);
    if (try_set(keep)) {
      good = std::move(keep);
      continue;
    }
    if (!can_query()) {
      st.budget_hit = true;
      break;
    }
    if (try_set(drop)) {
      good = std::move(drop);
      continue;
    }
    // Restore from the larger half.
    std::vector<std::size_t> current = keep;
    std::vector<std::size_t> pool = drop;
    while (!pool.empty()) {
      std::shuffle(pool.begin(), pool.end(), rng);
      std::size_t take = (pool.size() + 1) / 2;
      if (take == pool.size() || !can_query()) {
        if (take != pool.size()) st.budget_hit = true;
        break;  // falls back to the known-good set
      }
      current.insert(current.end(), pool.begin(), pool.begin() + take);
      pool.erase(pool.begin(), pool.begin() + take);
      if (try_set(current)) {
        good = std::move(current);
        break;
      }
    }
    break;
  }
  detail::set_mask(active, good);
  return st;
}

//============= Window attack ===============

// A window of the current perturbed trace, with the places an insertion may
// go. Slot s inserts before local position slot_pos[s] and is keyed in the
// ledger to original offset slot_offset[s]. A window that reaches the end of
// the trace with room to spare also has a slot after its last call.
struct WindowBase {
  std::size_t index = 0;
  std::size_t start = 0;
  std::vector<TokenId> tokens;
  std::vector<std::size_t> slot_pos;
  std::vector<std::size_t> slot_offset;
};

inline WindowBase window_base(const PerturbationLedger& ledger, std::span<const Provenance> layout,
                              std::size_t index, std::size_t n) {
  WindowBase b;
  b.index = index;
  b.start = index * n;
  const std::size_t end = std::min(layout.size(), b.start + n);
  const auto& orig = ledger.original();
  for (std::size_t p = b.start; p < end; ++p) {
    const auto& pv = layout[p];
    if (pv.inserted) {
      b.tokens.push_back(ledger.records()[pv.index].token.type);
    } else {
      b.slot_pos.push_back(b.tokens.size());
      b.slot_offset.push_back(pv.index);
      b.tokens.push_back(orig.calls[pv.index].type);
    }
  }
  if (end == layout.size() && b.tokens.size() < n) {
    b.slot_pos.push_back(b.tokens.size());
    b.slot_offset.push_back(orig.size());
  }
  return b;
}

struct PendingInsertion {
  std::size_t slot = 0;
  TokenId token = kNullToken;
};

// The first n calls of `base` with `ins` inserted. Insertions at the same
// slot keep their order in `ins`.
inline Window compose(const WindowBase& base, std::span<const PendingInsertion> ins, std::span<const char> active,
                      std::size_t n) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < ins.size(); ++i)
    if (active.empty() || active[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return base.slot_pos[ins[a].slot] < base.slot_pos[ins[b].slot]; });
  Window out;
  out.reserve(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i <= base.tokens.size() && out.size() < n; ++i) {
    while (k < order.size() && base.slot_pos[ins[order[k]].slot] == i && out.size() < n) out.push_back(ins[order[k++]].token);
    if (i < base.tokens.size() && out.size() < n) out.push_back(base.tokens[i]);
  }
  return out;
}

// First slot at or after base index `b`, i.e. the slot whose insertions land
// just before base token b. The last slot when none follows.
inline std::size_t slot_for_base_index(const WindowBase& base, std::size_t b) {
  auto it = std::lower_bound(base.slot_pos.begin(), base.slot_pos.end(), b);
  return it == base.slot_pos.end() ? base.slot_pos.size() - 1 : static_cast<std::size_t>(it - base.slot_pos.begin());
}

// Slots for a set of insertions meant to occupy window positions
// `positions` (duplicates shift right). Base tokens fill the remaining
// positions in order.
inline std::vector<std::size_t> slots_for_positions(const WindowBase& base, std::span<const std::uint32_t> positions) {
  std::vector<std::size_t> order(positions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return positions[a] < positions[b]; });
  std::vector<std::size_t> slots(positions.size());
  std::size_t out = 0, b = 0;
  for (std::size_t k = 0; k < order.size(); ++out) {
    if (b < base.tokens.size() && positions[order[k]] > out) {
      ++b;
    } else {
      slots[order[k++]] = slot_for_base_index(base, b);
    }
  }
  return slots;
}

// Slot that puts a new insertion at position `pos` of the current window
// (base plus active insertions), or as close after it as the ledger allows.
inline std::size_t slot_for_window_position(const WindowBase& base, std::span<const PendingInsertion> ins,
                                            std::span<const char> active, std::size_t pos) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < ins.size(); ++i)
    if (active[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return base.slot_pos[ins[a].slot] < base.slot_pos[ins[b].slot]; });
  // Walk the composed window; the first base token at or after `pos`
  // determines the slot.
  std::size_t out = 0, k = 0;
  for (std::size_t b = 0; b < base.tokens.size(); ++b) {
    while (k < order.size() && base.slot_pos[ins[order[k]].slot] == b) ++k, ++out;
    if (out >= pos) return slot_for_base_index(base, b);
    ++out;
  }
  return slot_for_base_index(base, base.tokens.size());
}

struct WindowAttackResult {
  std::vector<PendingInsertion> insertions;  // creation order
  std::vector<char> active;
  Window window;
  bool initially_malicious = false;
  bool solved = false;
  bool budget_hit = false;
  std::size_t queries = 0;
  std::size_t insertion_queries = 0;
  std::size_t backtrack_queries = 0;
  std::size_t attempts = 0;

  std::size_t active_count() const { return static_cast<std::size_t>(std::count(active.begin(), active.end(), 1)); }
};

namespace detail {

class WindowAttacker {
 public:
  WindowAttacker(AttackSession& session, const WindowBase& base, std::span<const TokenId> benign,
                 const AttackConfig& cfg, std::size_t cap, Rng& rng)
      : s_(session), base_(base), benign_(benign), cfg_(cfg), cap_(cap), rng_(rng) {
    if (cfg.perturb == PerturbType::benign && benign.size() < cfg.n)
      throw ConfigError("benign perturbation needs a benign window of n calls");
  }

  WindowAttackResult Run() {
    if (!s_.budget().can_query()) {
      r_.budget_hit = true;
      return Finish();
    }
    auto first = Query();
    r_.initially_malicious = first.malicious();
    if (!r_.initially_malicious) {
      r_.solved = true;
      return Finish();
    }
    if (cap_ == 0 || base_.slot_pos.empty()) return Finish();
    if (cfg_.knowledge == Knowledge::decision) {
      DecisionLoop();
    } else {
      if (!first.score) throw ConfigError("score knowledge requires an oracle that returns scores");
      ScoreSearch();
    }
    if (r_.solved && cfg_.method == AddingMethod::logarithmic_backtracking && r_.active_count() > 1) Backtrack();
    return Finish();
  }

  // One round of decision-based insertion. Linear: insert and query until
  // benign or the cap. Backtracking: insert up to the cap without querying.
  void DecisionRound() {
    const bool linear = cfg_.method == AddingMethod::linear_iteration;
    while (r_.active_count() < cap_) {
      if (linear && !s_.budget().can_query()) {
        r_.budget_hit = true;
        return;
      }
      AddDecisionInsertion();
      if (linear) {
        ++r_.insertion_queries;
        if (!Query().malicious()) {
          r_.solved = true;
          return;
        }
      }
    }
  }

  WindowAttackResult& result() { return r_; }

 private:
  ClassificationResponse Query(std::span<const char> mask = {}) {
    auto w = compose(base_, r_.insertions, mask.empty() ? std::span<const char>(r_.active) : mask, cfg_.n);
    ++r_.queries;
    return s_.window(w);
  }

  // Uniform position in the current window; one past the end when the
  // window is the short tail of the trace.
  std::size_t RandomPosition() {
    std::size_t len = base_.tokens.size();
    for (char a : r_.active) len += a ? 1 : 0;
    const std::size_t top = len < cfg_.n ? len : cfg_.n - 1;
    return std::uniform_int_distribution<std::size_t>(0, top)(rng_);
  }

  TokenId RandomToken() {
    const auto& d = cfg_.attacker_vocab;
    return d[std::uniform_int_distribution<std::size_t>(0, d.size() - 1)(rng_)];
  }

  // Inserts at a random window position i: the benign token at i, or a
  // random token from D'.
  void AddDecisionInsertion() {
    std::size_t pos = RandomPosition();
    std::size_t slot = slot_for_window_position(base_, r_.insertions, r_.active, pos);
    TokenId tok = cfg_.perturb == PerturbType::benign ? benign_[std::min(pos, cfg_.n - 1)] : RandomToken();
    r_.insertions.push_back({slot, tok});
    r_.active.push_back(1);
  }

  void DecisionLoop() {
    if (cfg_.method == AddingMethod::linear_iteration) {
      ++r_.attempts;
      DecisionRound();
      return;
    }
    // Each attempt draws a fresh full set and discards the previous one; one
    // query per attempt.
    while (r_.attempts < cfg_.budget_per_window()) {
      if (!s_.budget().can_query()) {
        r_.budget_hit = true;
        return;
      }
      r_.insertions.clear();
      r_.active.clear();
      ++r_.attempts;
      DecisionRound();
      ++r_.insertion_queries;
      if (!Query().malicious()) {
        r_.solved = true;
        return;
      }
    }
  }

  void ScoreSearch() {
    const std::size_t m = cap_;
    std::size_t iterations = cfg_.budget_per_window();
    if (cfg_.method == AddingMethod::logarithmic_backtracking)
      iterations = iterations > ceil_log2(cfg_.n) ? iterations - ceil_log2(cfg_.n) : 1;
    const bool cut = s_.budget().remaining() < iterations;
    iterations = std::min(iterations, s_.budget().remaining());
    if (iterations == 0) {
      r_.budget_hit = true;
      return;
    }
    MinimizerParams p = cfg_.minimizer;
    p.population = std::min(p.population, iterations);

    const bool by_position = cfg_.perturb == PerturbType::benign;
    std::vector<std::size_t> fixed_slots;
    std::vector<std::uint32_t> domain;
    if (by_position) {
      domain.resize(cfg_.n);
      std::iota(domain.begin(), domain.end(), 0u);
    } else {
      // m distinct window positions (with repeats once m exceeds n).
      std::vector<std::uint32_t> all(cfg_.n), positions;
      std::iota(all.begin(), all.end(), 0u);
      while (positions.size() < m) {
        std::shuffle(all.begin(), all.end(), rng_);
        positions.insert(positions.end(), all.begin(), all.begin() + std::min(all.size(), m - positions.size()));
      }
      fixed_slots = slots_for_positions(base_, positions);
      domain.assign(cfg_.attacker_vocab.begin(), cfg_.attacker_vocab.end());
    }
    std::vector<std::uint32_t> initial = detail::random_genes(m, domain, rng_);

    auto decode = [&](std::span<const std::uint32_t> genes) {
      std::vector<PendingInsertion> ins(genes.size());
      auto slots = by_position ? slots_for_positions(base_, genes) : fixed_slots;
      for (std::size_t i = 0; i < genes.size(); ++i)
        ins[i] = {slots[i], by_position ? benign_[genes[i]] : genes[i]};
      return ins;
    };

    std::optional<std::vector<std::uint32_t>> evading;
    auto fitness = [&](std::span<const std::uint32_t> genes) {
      auto ins = decode(genes);
      auto w = compose(base_, ins, {}, cfg_.n);
      ++r_.queries;
      ++r_.insertion_queries;
      auto resp = s_.window(w);
      if (!resp.score) throw ConfigError("score knowledge requires an oracle that returns scores");
      if (!resp.malicious() && !evading) evading.emplace(genes.begin(), genes.end());
      return *resp.score;
    };

    auto res = cfg_.optimizer == OptimizerKind::ea ? ea_minimize(fitness, domain, initial, iterations, p, rng_)
                                                   : ga_minimize(fitness, domain, initial, iterations, p, rng_);
    r_.attempts = res.evaluations;
    r_.insertions = decode(evading ? *evading : res.best.genes);
    r_.active.assign(r_.insertions.size(), 1);
    r_.solved = evading.has_value();
    if (!r_.solved && cut) r_.budget_hit = true;
  }

  void Backtrack() {
    auto evades = [&](std::span<const char> mask) { return !Query(mask).malicious(); };
    auto can_query = [&] { return s_.budget().can_query(); };
    auto st = log_backtrack(r_.active, evades, can_query, rng_);
    r_.backtrack_queries = st.queries;
    r_.budget_hit = r_.budget_hit || st.budget_hit;
  }

  WindowAttackResult Finish() {
    r_.window = compose(base_, r_.insertions, r_.active, cfg_.n);
    return std::move(r_);
  }

  AttackSession& s_;
  const WindowBase& base_;
  std::span<const TokenId> benign_;
  const AttackConfig& cfg_;
  std::size_t cap_;
  Rng& rng_;
  WindowAttackResult r_;
};

}  // namespace detail

// Decision-based insertion round on a window known to be malicious. Linear
// mode queries after each insertion; backtracking mode inserts `cap` tokens
// without any query.
inline WindowAttackResult decision_window_attack(AttackSession& session, const WindowBase& base,
                                                 std::span<const TokenId> benign, const AttackConfig& cfg,
                                                 std::size_t cap, Rng& rng) {
  detail::WindowAttacker a(session, base, benign, cfg, cap, rng);
  auto& r = a.result();
  r.initially_malicious = true;
  if (cap > 0 && !base.slot_pos.empty()) {
    ++r.attempts;
    a.DecisionRound();
  }
  r.window = compose(base, r.insertions, r.active, cfg.n);
  return std::move(r);
}

// Full per-window attack: initial query, insertion search, and (under
// logarithmic backtracking) pruning of a successful insertion set. `cap`
// bounds active insertions and is at most M_w.
inline WindowAttackResult window_attack(AttackSession& session, const WindowBase& base,
                                        std::span<const TokenId> benign, const AttackConfig& cfg, std::size_t cap,
                                        Rng& rng) {
  return detail::WindowAttacker(session, base, benign, cfg, std::min(cap, cfg.max_insertions), rng).Run();
}

//============= Full sequence ===============

enum class StopReason { completed, not_malicious, budget_exhausted, throttled, oracle_unavailable };

inline std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::completed: return "completed";
    case StopReason::not_malicious: return "not_malicious";
    case StopReason::budget_exhausted: return "budget_exhausted";
    case StopReason::throttled: return "throttled";
    case StopReason::oracle_unavailable: return "oracle_unavailable";
  }
  return "?";
}

struct WindowResult {
  std::size_t index = 0;
  std::size_t start = 0;
  bool initially_malicious = false;
  bool solved = false;
  std::size_t insertions = 0;
  std::size_t queries = 0;
  std::size_t insertion_queries = 0;
  std::size_t backtrack_queries = 0;
  std::size_t attempts = 0;
};

struct AttackOutcome {
  std::string sample_id;
  bool originally_malicious = false;
  bool evaded = false;
  StopReason stop = StopReason::completed;
  Trace final_trace;
  PerturbationLedger ledger;
  QueryUsage queries;
  double overhead = 0.0;
  std::vector<WindowResult> per_window;
  // Static bits flipped by a hybrid attack.
  std::vector<std::uint32_t> static_added;
};

inline nlohmann::json to_json(const AttackOutcome& o) {
  return {
      {"id", o.sample_id},
      {"originally_malicious", o.originally_malicious},
      {"evaded", o.evaded},
      {"stop", to_string(o.stop)},
      {"window_queries", o.queries.window_calls},
      {"trace_queries", o.queries.trace_calls},
      {"queries", o.queries.total()},
      {"insertions", o.ledger.active_count()},
      {"overhead", o.overhead},
      {"static_added", o.static_added.size()},
      {"digest", HexDigest(o.ledger.digest())},
  };
}

namespace detail {

inline void commit(PerturbationLedger& ledger, const WindowBase& base, const WindowAttackResult& r,
                   const AttackConfig& cfg, Rng& args_rng) {
  for (std::size_t i = 0; i < r.insertions.size(); ++i) {
    const auto& ins = r.insertions[i];
    ledger.insert(base.slot_offset[ins.slot], sample_noop_args(ins.token, cfg.arg_pools, args_rng), base.index,
                  r.active[i] != 0);
  }
}

// Insertion cap for window j. Besides M_w and the sample allowance, a window
// that is followed by more of the trace may only insert as many calls as
// keeps the overhead of the prefix ending at that window within the cap, so
// early windows cannot starve later ones. With m insertions the prefix loses
// m originals to the next window: used + m <= r * (originals - m).
inline std::size_t window_cap(const AttackConfig& cfg, std::span<const Provenance> layout, std::size_t j,
                              std::size_t used, std::size_t allowance) {
  std::size_t cap = std::min(cfg.max_insertions, allowance > used ? allowance - used : 0);
  const std::size_t end = (j + 1) * cfg.n;
  if (end >= layout.size()) return cap;
  std::size_t originals = 0;
  for (std::size_t p = 0; p < end; ++p) originals += layout[p].inserted ? 0 : 1;
  const double r = cfg.overhead_cap();
  const double prefix = (r * static_cast<double>(originals) - static_cast<double>(used)) / (1.0 + r);
  return prefix <= 0.0 ? 0 : std::min(cap, static_cast<std::size_t>(prefix));
}

}  // namespace detail

// Attacks a whole trace window by window. `known_initial` skips the opening
// trace query when the caller already holds the current classification.
inline AttackOutcome full_sequence_attack(Oracle& oracle, const Trace& trace, const BenignProvider* benign,
                                          const AttackConfig& cfg,
                                          std::optional<ClassificationResponse> known_initial = std::nullopt) {
  cfg.Validate();
  if (cfg.perturb == PerturbType::benign && !benign)
    throw ConfigError("benign perturbation requires a benign provider");
  if (cfg.knowledge == Knowledge::score && oracle.knowledge() != Knowledge::score)
    throw ConfigError("score knowledge requires an oracle that returns scores");

  AttackOutcome out;
  out.sample_id = trace.id;
  out.ledger = PerturbationLedger(std::make_shared<const Trace>(trace), cfg.forbidden, cfg.max_insertions);
  QueryBudget budget(cfg.sample_budget, 1);
  AttackSession session(oracle, budget);
  Rng rng(cfg.seed);
  Rng args_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  try {
    ClassificationResponse current;
    current = known_initial ? *known_initial : session.trace(trace.ids());
    out.originally_malicious = current.malicious();
    if (!out.originally_malicious) {
      out.evaded = true;
      out.stop = StopReason::not_malicious;
    } else {
      const auto allowance = static_cast<std::size_t>(cfg.overhead_cap() * static_cast<double>(trace.size()));
      for (std::size_t j = 0;; ++j) {
        auto layout = out.ledger.layout();
        if (j * cfg.n >= layout.size()) break;
        if (!budget.can_query()) {
          out.stop = StopReason::budget_exhausted;
          break;
        }
        const std::size_t cap = detail::window_cap(cfg, layout, j, out.ledger.active_count(), allowance);
        auto base = window_base(out.ledger, layout, j, cfg.n);
        Window wb = cfg.perturb == PerturbType::benign ? benign->window(cfg.n, rng) : Window{};
        auto r = window_attack(session, base, wb, cfg, cap, rng);
        detail::commit(out.ledger, base, r, cfg, args_rng);
        out.per_window.push_back({j, base.start, r.initially_malicious, r.solved, r.active_count(), r.queries,
                                  r.insertion_queries, r.backtrack_queries, r.attempts});
        if (r.budget_hit) {
          out.stop = StopReason::budget_exhausted;
          break;
        }
      }
      budget.release_reserve();
      auto final_ids = out.ledger.materialize_ids();
      out.evaded = !session.trace(final_ids).malicious();
    }
  } catch (const ThrottledError&) {
    out.stop = StopReason::throttled;
    out.evaded = false;
  } catch (const OracleError&) {
    out.stop = StopReason::oracle_unavailable;
    out.evaded = false;
  }
  out.final_trace = out.ledger.materialize();
  out.overhead = out.ledger.overhead();
  out.queries = session.usage();
  return out;
}

}  // namespace seqevade

#endif  // SEQEVADE_ATTACK_ATTACK_HPP_
