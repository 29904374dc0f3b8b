// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "metric_fixture.hpp"
#include "seqevade/attack.hpp"
#include "seqevade/bench.hpp"
#include "seqevade/datagen.hpp"
#include "seqevade/service.hpp"
#include "seqevade/targets.hpp"
#include "tiny.hpp"

using namespace seqevade;

namespace {

int failures = 0;

// Query-bound violations seen on full runs, folded into the metered C3 line.
std::size_t c3_full_violations = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("%s C%-2d %-34s %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Setup {
  Corpus corpus;
  Partitions parts;
  std::vector<Trace> malicious_test;  // every malicious test trace
  TrainResult trained;
  BenignProvider provider = BenignProvider::CorpusReplay(std::vector<Trace>{}, std::vector<TokenId>{});
  AttackConfig base;

  const TrainedModel& model() const { return trained.model; }
};

Setup make_setup() {
  auto spec = attack_benchmark_spec();
  Corpus corpus = generate_corpus(spec);
  auto parts = holdout_split(corpus);
  auto test = gather(corpus, parts.test);
  auto trained = train(gather(corpus, parts.train), test, corpus.vocab, ModelKind::logistic_regression, 140);
  auto base = AttackConfig::For(corpus.vocab);
  base.n = 140;
  base.max_insertions = 70;
  base.sample_budget = 200;
  auto provider = BenignProvider::Markov(gather(corpus, parts.benign_holdout), base.attacker_vocab, 1);
  Setup s{std::move(corpus), std::move(parts), {}, std::move(trained), std::move(provider), base};
  for (auto& t : test)
    if (t.label == Label::malicious) s.malicious_test.push_back(std::move(t));
  return s;
}

std::vector<AttackConfig> all_configs(const AttackConfig& base) {
  std::vector<AttackConfig> out;
  for (auto k : {Knowledge::decision, Knowledge::score})
    for (auto p : {PerturbType::random, PerturbType::benign})
      for (auto m : {AddingMethod::linear_iteration, AddingMethod::logarithmic_backtracking}) {
        auto c = base;
        c.knowledge = k;
        c.perturb = p;
        c.method = m;
        out.push_back(c);
      }
  return out;
}

// C1-C3 over full-sequence runs.
void structural(const Setup& s) {
  std::size_t runs = 0, subseq_bad = 0, forbidden_bad = 0, window_cap_bad = 0, overhead_bad = 0, meter_bad = 0,
              linear_bad = 0, backtrack_bad = 0;
  double max_overhead = 0.0;
  for (const auto& cfg0 : all_configs(s.base)) {
    for (std::size_t i = 0; i < s.malicious_test.size(); ++i) {
      auto cfg = cfg0;
      cfg.seed = sample_seed(runs, i);
      QueryMeter meter;
      ModelOracle oracle(s.model(), cfg.knowledge, &meter);
      const auto& t = s.malicious_test[i];
      auto o = full_sequence_attack(oracle, t, &s.provider, cfg);
      ++runs;
      subseq_bad += !is_subsequence<TokenId>(t.ids(), o.final_trace.ids());
      std::map<std::size_t, std::size_t> per_window;
      for (const auto& r : o.ledger.records()) {
        forbidden_bad += s.corpus.vocab.is_forbidden(r.token.type);
        per_window[r.window_index] += r.active;
      }
      for (auto [w, n] : per_window) window_cap_bad += n > cfg.max_insertions;
      max_overhead = std::max(max_overhead, o.overhead);
      overhead_bad += o.overhead > 0.5 + 1e-12;
      meter_bad += meter.snapshot().invocations != o.queries.total();
      for (const auto& w : o.per_window) {
        if (cfg.knowledge == Knowledge::decision && cfg.method == AddingMethod::linear_iteration)
          linear_bad += w.queries > cfg.max_insertions + 1;
        backtrack_bad += w.backtrack_queries > 2 * (ceil_log2(cfg.max_insertions) + 1);
      }
    }
  }
  report(1, "subsequence preservation", runs >= 1000 && subseq_bad == 0 && forbidden_bad == 0,
         fmt("runs=%zu subsequence_violations=%zu forbidden_insertions=%zu", runs, subseq_bad, forbidden_bad));
  report(2, "overhead cap", window_cap_bad == 0 && overhead_bad == 0,
         fmt("window_cap_violations=%zu overhead_violations=%zu max_overhead=%.3f (cap 0.5)", window_cap_bad, overhead_bad,
             max_overhead));
  c3_full_violations = linear_bad + backtrack_bad + meter_bad;
}

// C3 (metered, per window) and C4 on windows attacked independently.
void window_level(const Setup& s) {
  std::size_t windows = 0, full_set_evaded = 0, unsound = 0, meter_bad = 0, linear_bad = 0, backtrack_bad = 0;
  std::size_t max_linear = 0, max_backtrack = 0;
  const std::size_t bt_bound = 2 * (ceil_log2(s.base.max_insertions) + 1);
  for (const auto& cfg0 : all_configs(s.base)) {
    auto cfg = cfg0;
    for (std::size_t i = 0; i < s.malicious_test.size(); ++i) {
      const auto& t = s.malicious_test[i];
      PerturbationLedger ledger(std::make_shared<const Trace>(t), cfg.forbidden, cfg.max_insertions);
      auto layout = ledger.layout();
      Rng rng(sample_seed(i, 7));
      for (std::size_t j = 0; j < window_count(t.size(), cfg.n); ++j) {
        auto base = window_base(ledger, layout, j, cfg.n);
        if (!classify_sequence(s.model(), compose(base, {}, {}, cfg.n)).malicious()) continue;
        Window benign = s.provider.window(cfg.n, rng);
        QueryMeter meter;
        ModelOracle oracle(s.model(), cfg.knowledge, &meter);
        QueryBudget budget(0);
        AttackSession session(oracle, budget);
        auto r = window_attack(session, base, benign, cfg, cfg.max_insertions, rng);
        ++windows;
        const auto metered = meter.snapshot().window_queries;
        meter_bad += metered != r.queries;
        const auto bt = metered - 1 - r.insertion_queries;
        if (cfg.knowledge == Knowledge::decision && cfg.method == AddingMethod::linear_iteration) {
          linear_bad += metered > cfg.max_insertions + 1;
          max_linear = std::max<std::size_t>(max_linear, metered);
        }
        if (cfg.method != AddingMethod::logarithmic_backtracking) continue;
        backtrack_bad += bt > bt_bound;
        max_backtrack = std::max<std::size_t>(max_backtrack, bt);
        std::vector<char> all(r.insertions.size(), 1);
        if (r.insertions.empty() || classify_sequence(s.model(), compose(base, r.insertions, all, cfg.n)).malicious())
          continue;
        ++full_set_evaded;
        const bool subset = r.active.size() == r.insertions.size() && r.active_count() >= 1;
        const bool evades = !classify_sequence(s.model(), r.window).malicious() &&
                            r.window == compose(base, r.insertions, r.active, cfg.n);
        unsound += !(subset && evades);
      }
    }
  }
  report(3, "query bounds", meter_bad == 0 && linear_bad == 0 && backtrack_bad == 0 && c3_full_violations == 0,
         fmt("windows=%zu max_linear=%zu (<=%zu) max_backtrack=%zu (<=%zu) meter_mismatches=%zu "
             "full_run_violations=%zu",
             windows, max_linear, s.base.max_insertions + 1, max_backtrack, bt_bound, meter_bad, c3_full_violations));
  report(4, "backtracking soundness", full_set_evaded >= 500 && unsound == 0,
         fmt("evading_full_sets=%zu violations=%zu", full_set_evaded, unsound));
}

void tiny() {
  std::size_t solvable = 0, found = 0;
  for (std::uint64_t seed = 0; solvable < 1000; ++seed) {
    auto t = testing::make_tiny(seed);
    if (t.evading_count() == 0) continue;
    ++solvable;
    Rng rng(seed);
    auto init = detail::random_genes(testing::TinyInstance::kSlots, t.domain, rng);
    auto r = ea_minimize([&](std::span<const std::uint32_t> g) { return t.score(g); }, t.domain, init, 200,
                         MinimizerParams{}, rng);
    found += r.reached_target && t.score(r.best.genes) < 0.5;
  }
  double rate = static_cast<double>(found) / static_cast<double>(solvable);
  report(5, "brute-force oracle equivalence", rate >= 0.95,
         fmt("solvable_instances=%zu ea_found=%zu rate=%.3f (>=0.95)", solvable, found, rate));
}

const BenchRow* find(const BenchmarkReport& r, Knowledge k, PerturbType p, AddingMethod m, std::size_t b) {
  for (const auto& row : r.rows)
    if (row.knowledge == k && row.perturb == p && row.method == m && row.budget == b) return &row;
  return nullptr;
}

void directional(const Setup& s) {
  BenchInputs in;
  in.model = &s.model();
  in.samples = &s.malicious_test;
  in.provider = &s.provider;
  in.base = s.base;
  auto report_ = bench(default_matrix(), in);
  std::printf("     target accuracy %.4f; median effectiveness over seeds 1-5:\n", s.trained.heldout_accuracy);
  for (const auto& row : report_.rows)
    std::printf("       %-8s %-6s %-6s budget %3zu  median %6.2f  mean %6.2f\n", std::string(to_string(row.knowledge)).c_str(),
                std::string(to_string(row.perturb)).c_str(),
                row.method == AddingMethod::linear_iteration ? "linear" : "logbt", row.budget, row.effectiveness_median,
                row.effectiveness);

  bool c6 = s.trained.heldout_accuracy >= 0.90;
  std::string d6 = fmt("accuracy=%.3f", s.trained.heldout_accuracy);
  for (auto k : {Knowledge::score, Knowledge::decision}) {
    auto b = find(report_, k, PerturbType::benign, AddingMethod::logarithmic_backtracking, 200);
    auto r = find(report_, k, PerturbType::random, AddingMethod::logarithmic_backtracking, 200);
    c6 = c6 && b->effectiveness_median > r->effectiveness_median;
    d6 += fmt(" %s: benign %.1f > random %.1f", std::string(to_string(k)).c_str(), b->effectiveness_median,
              r->effectiveness_median);
  }
  report(6, "directional: perturbation type", c6, d6);

  bool c7 = true;
  std::size_t pairs = 0;
  double worst = 1e9;
  for (const auto& row : report_.rows) {
    if (row.knowledge != Knowledge::score) continue;
    auto d = find(report_, Knowledge::decision, row.perturb, row.method, row.budget);
    ++pairs;
    worst = std::min(worst, row.effectiveness_median - d->effectiveness_median);
    c7 = c7 && row.effectiveness_median >= d->effectiveness_median;
  }
  report(7, "directional: knowledge", c7, fmt("pairs=%zu min(score - decision)=%.1f", pairs, worst));

  bool c8 = true;
  std::size_t configs = 0;
  worst = 1e9;
  for (const auto& row : report_.rows) {
    if (row.budget != 200) continue;
    auto lo = find(report_, row.knowledge, row.perturb, row.method, 100);
    ++configs;
    worst = std::min(worst, row.effectiveness_median - lo->effectiveness_median);
    c8 = c8 && row.effectiveness_median >= lo->effectiveness_median;
  }
  report(8, "directional: budget monotonicity", c8, fmt("configs=%zu min(200 - 100)=%.1f", configs, worst));
}

void hybrid(const Setup& s) {
  const auto& c = s.corpus;
  std::vector<StaticFeatureVector> sv;
  std::vector<Label> sl;
  for (auto i : s.parts.train) {
    sv.push_back(c.statics[i]);
    sl.push_back(c.traces[i].label);
  }
  HybridModel hm;
  hm.dynamic = s.model();
  hm.static_model = train_static(sv, sl);
  std::vector<StaticFeatureVector> benign_static;
  for (auto i : s.parts.benign_holdout) benign_static.push_back(c.statics[i]);
  auto profile = BenignProfile::FromVectors(benign_static);

  auto cfg = s.base;
  cfg.knowledge = Knowledge::score;
  cfg.perturb = PerturbType::benign;
  cfg.method = AddingMethod::logarithmic_backtracking;

  enum { kDynDyn, kStatStat, kDynHyb, kStatHyb, kHybrid, kN };
  std::vector<double> eff[kN];
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::size_t n[kN] = {}, ev[kN] = {};
    auto tally = [&](int k, bool initially, bool evaded) {
      n[k] += initially;
      ev[k] += initially && evaded;
    };
    for (std::size_t idx = 0; idx < s.parts.test.size(); ++idx) {
      auto i = s.parts.test[idx];
      const auto& t = c.traces[i];
      if (t.label != Label::malicious) continue;
      const auto& st = c.statics[i];
      cfg.seed = sample_seed(seed, idx);

      ModelOracle dyn(hm.dynamic, cfg.knowledge, nullptr);
      auto o = full_sequence_attack(dyn, t, &s.provider, cfg);
      tally(kDynDyn, o.originally_malicious, o.evaded);

      auto so = make_static_oracle(hm.static_model, cfg.knowledge, nullptr);
      QueryBudget b1(cfg.sample_budget);
      Rng r1(cfg.seed);
      auto s1 = static_attack(so, st, &profile, cfg, b1, r1);
      tally(kStatStat, s1.initially_malicious, s1.evaded);

      LocalHybridOracle ho(hm, cfg.knowledge, nullptr);
      FixedStaticOracle fixed(ho, st);
      auto o2 = full_sequence_attack(fixed, t, &s.provider, cfg);
      tally(kDynHyb, o2.originally_malicious, o2.evaded);

      auto ids = t.ids();
      StaticOracle hs = [&](const StaticFeatureVector& v) { return ho.classify_trace(ids, v); };
      QueryBudget b2(cfg.sample_budget);
      Rng r2(cfg.seed);
      auto s2 = static_attack(hs, st, &profile, cfg, b2, r2);
      tally(kStatHyb, s2.initially_malicious, s2.evaded);

      auto h = hybrid_attack(ho, t, st, &s.provider, &profile, cfg);
      tally(kHybrid, h.originally_malicious, h.evaded);
    }
    for (int k = 0; k < kN; ++k) eff[k].push_back(n[k] ? 100.0 * static_cast<double>(ev[k]) / static_cast<double>(n[k]) : 0.0);
  }
  double m[kN];
  for (int k = 0; k < kN; ++k) m[k] = median_of(eff[k]);
  bool pass = m[kDynHyb] < m[kDynDyn] && m[kStatHyb] < m[kStatStat] && m[kHybrid] >= std::max(m[kDynHyb], m[kStatHyb]);
  report(9, "hybrid mitigation and recovery", pass,
         fmt("dyn->dyn %.1f > dyn->hyb %.1f; stat->stat %.1f > stat->hyb %.1f; hybrid %.1f", m[kDynDyn], m[kDynHyb],
             m[kStatStat], m[kStatHyb], m[kHybrid]));
}

void wire(const Setup& s) {
  std::size_t runs = 0, mismatches = 0;
  auto configs = all_configs(s.base);
  std::vector<std::unique_ptr<ClassificationService>> services;
  for (auto k : {Knowledge::decision, Knowledge::score}) {
    services.push_back(std::make_unique<ClassificationService>(s.model(), BillingPolicy{0.001, std::nullopt, k}));
    services.back()->Start();
  }
  for (std::size_t i = 0; i < 100; ++i) {
    auto cfg = configs[i % configs.size()];
    cfg.seed = sample_seed(2024, i);
    const auto& t = s.malicious_test[i % s.malicious_test.size()];
    auto& svc = *services[cfg.knowledge == Knowledge::score ? 1 : 0];
    ModelOracle local(s.model(), cfg.knowledge, nullptr);
    RemoteOracle remote(svc.endpoint(), "acceptance-" + std::to_string(i));
    auto a = full_sequence_attack(local, t, &s.provider, cfg);
    auto b = full_sequence_attack(remote, t, &s.provider, cfg);
    ++runs;
    mismatches += a.evaded != b.evaded || a.queries.total() != b.queries.total() || a.ledger.digest() != b.ledger.digest();
  }
  for (auto& svc : services) svc->Stop();
  report(10, "wire parity", runs == 100 && mismatches == 0, fmt("runs=%zu mismatches=%zu", runs, mismatches));
}

void metrics() {
  auto f = testing::metric_fixture();
  double e = compute_effectiveness(f);
  double oe = compute_overhead_avg(f);
  double oa = compute_overhead_avg(f, OverheadScope::all);
  // Exact up to the rounding of the decimal overheads.
  bool pass = e == testing::kFixtureEffectiveness && std::abs(oe - testing::kFixtureOverheadEvaded) < 1e-12 &&
              std::abs(oa - testing::kFixtureOverheadAll) < 1e-12;
  report(11, "metric correctness", pass,
         fmt("effectiveness=%.17g (62.5) overhead=%.17g (20) overhead_all=%.17g (17)", e, oe, oa));
}

}  // namespace

int main() {
  auto start = std::chrono::steady_clock::now();
  auto s = make_setup();
  structural(s);
  window_level(s);
  tiny();
  directional(s);
  hybrid(s);
  wire(s);
  metrics();
  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s: %d criterion check(s) failed (%.0fs)\n", failures ? "FAILED" : "ALL PASSED", failures, secs);
  return failures ? 1 : 0;
}
