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

// Attack metrics, benchmark sweeps and report serialization.

#ifndef SEQEVADE_BENCH_HPP_
#define SEQEVADE_BENCH_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "seqevade/attack.hpp"
#include "seqevade/targets.hpp"

namespace seqevade {

inline constexpr std::string_view kToolkitVersion = "0.4.0";

// Compact per-sample record kept by sweeps.
struct SampleResult {
  std::string id;
  bool originally_malicious = false;
  bool evaded = false;
  std::size_t queries = 0;
  double overhead = 0.0;
  std::uint64_t digest = 0;

  static SampleResult From(const AttackOutcome& o) {
    return {o.sample_id, o.originally_malicious, o.evaded, o.queries.total(), o.overhead, o.ledger.digest()};
  }
  friend bool operator==(const SampleResult&, const SampleResult&) = default;
};

// Percentage of originally malicious samples that end up classified benign.
// Samples the target already missed count in neither numerator nor
// denominator.
template <class Range>
double compute_effectiveness(const Range& outcomes) {
  std::size_t denom = 0, evaded = 0;
  for (const auto& o : outcomes) {
    if (!o.originally_malicious) continue;
    ++denom;
    if (o.evaded) ++evaded;
  }
  if (denom == 0) throw Error("effectiveness undefined: no originally malicious samples");
  return 100.0 * static_cast<double>(evaded) / static_cast<double>(denom);
}

enum class OverheadScope { evaded, all };

// Mean per-sample added-call fraction, as a percentage. The evaded scope
// averages over successful adversarial examples only; 0 when there are none.
template <class Range>
double compute_overhead_avg(const Range& outcomes, OverheadScope scope = OverheadScope::evaded) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& o : outcomes) {
    if (scope == OverheadScope::evaded && !(o.originally_malicious && o.evaded)) continue;
    sum += o.overhead;
    ++count;
  }
  return count == 0 ? 0.0 : 100.0 * sum / static_cast<double>(count);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

//============= Sweeps ===============

struct BenchCell {
  Knowledge knowledge = Knowledge::decision;
  PerturbType perturb = PerturbType::benign;
  AddingMethod method = AddingMethod::logarithmic_backtracking;
  std::size_t budget = 200;
};

struct BenchMatrix {
  std::vector<BenchCell> cells;
  std::vector<std::uint64_t> seeds;
};

// Backtracking no/yes x budget 100/200 x score/decision x random/benign.
inline BenchMatrix default_matrix(std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5}) {
  BenchMatrix m;
  m.seeds = std::move(seeds);
  for (auto perturb : {PerturbType::random, PerturbType::benign})
    for (auto knowledge : {Knowledge::score, Knowledge::decision})
      for (auto method : {AddingMethod::linear_iteration, AddingMethod::logarithmic_backtracking})
        for (std::size_t budget : {100, 200}) m.cells.push_back({knowledge, perturb, method, budget});
  return m;
}

struct BenchRow {
  Knowledge knowledge = Knowledge::decision;
  PerturbType perturb = PerturbType::benign;
  AddingMethod method = AddingMethod::logarithmic_backtracking;
  std::size_t budget = 0;
  std::size_t seeds = 0;
  std::size_t samples = 0;  // originally malicious, per seed
  double effectiveness = 0.0;  // mean over seeds, percent
  double effectiveness_std = 0.0;
  double effectiveness_median = 0.0;
  double overhead = 0.0;  // mean over seeds, percent
  double avg_queries = 0.0;
  std::vector<double> per_seed;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct BenchmarkReport {
  std::string corpus;
  std::string model;
  std::string version = std::string(kToolkitVersion);
  std::string generated_at;
  std::vector<BenchRow> rows;

  friend bool operator==(const BenchmarkReport&, const BenchmarkReport&) = default;
};

// Per-sample seed derived from the run seed and the sample position.
inline std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + index + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Runs `attack(i, seed)` for i in [0, count) on `threads` workers; results
// are stored by index so aggregation does not depend on scheduling.
template <class Result, class Fn>
std::vector<Result> parallel_map(std::size_t count, unsigned threads, Fn&& fn) {
  std::vector<Result> out(count);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(std::max(1u, threads));
  auto worker = [&](unsigned w) {
    try {
      for (std::size_t i = next++; i < count; i = next++) out[i] = fn(i);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct BenchInputs {
  const TrainedModel* model = nullptr;
  const std::vector<Trace>* samples = nullptr;
  const BenignProvider* provider = nullptr;
  AttackConfig base;
  unsigned threads = 1;
  std::string corpus_ref;
  std::string model_ref;
};

inline std::vector<SampleResult> run_cell(const BenchInputs& in, const BenchCell& cell, std::uint64_t seed) {
  AttackConfig cfg = in.base;
  cfg.knowledge = cell.knowledge;
  cfg.perturb = cell.perturb;
  cfg.method = cell.method;
  cfg.sample_budget = cell.budget;
  return parallel_map<SampleResult>(in.samples->size(), in.threads, [&](std::size_t i) {
    AttackConfig c = cfg;
    c.seed = sample_seed(seed, i);
    ModelOracle oracle(*in.model, cell.knowledge, nullptr);
    return SampleResult::From(full_sequence_attack(oracle, (*in.samples)[i], in.provider, c));
  });
}

inline BenchmarkReport bench(const BenchMatrix& matrix, const BenchInputs& in) {
  BenchmarkReport report;
  report.corpus = in.corpus_ref;
  report.model = in.model_ref;
  if (matrix.cells.empty()) return report;
  if (!in.model || !in.samples) throw ConfigError("bench needs a model and samples");
  for (const auto& cell : matrix.cells) {
    BenchRow row;
    row.knowledge = cell.knowledge;
    row.perturb = cell.perturb;
    row.method = cell.method;
    row.budget = cell.budget;
    row.seeds = matrix.seeds.size();
    std::vector<double> overheads, queries;
    for (auto seed : matrix.seeds) {
      auto results = run_cell(in, cell, seed);
      row.per_seed.push_back(compute_effectiveness(results));
      overheads.push_back(compute_overhead_avg(results));
      double q = 0.0;
      std::size_t n = 0;
      for (const auto& r : results)
        if (r.originally_malicious) q += static_cast<double>(r.queries), ++n;
      queries.push_back(q / static_cast<double>(n));
      row.samples = n;
    }
    row.effectiveness = mean_of(row.per_seed);
    row.effectiveness_std = stddev_of(row.per_seed);
    row.effectiveness_median = median_of(row.per_seed);
    row.overhead = mean_of(overheads);
    row.avg_queries = mean_of(queries);
    report.rows.push_back(std::move(row));
  }
  return report;
}

//============= Report formats ===============

namespace detail {

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace detail

inline constexpr std::string_view kCsvHeader =
    "knowledge,perturb,method,budget,seeds,samples,effectiveness,effectiveness_std,effectiveness_median,overhead,"
    "avg_queries,per_seed";

// Metadata lines start with '#'. Values contain no commas.
inline std::string report_to_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out << "# corpus=" << r.corpus << '\n'
      << "# model=" << r.model << '\n'
      << "# version=" << r.version << '\n'
      << "# generated_at=" << r.generated_at << '\n'
      << kCsvHeader << '\n';
  for (const auto& row : r.rows) {
    out << to_string(row.knowledge) << ',' << to_string(row.perturb) << ',' << to_string(row.method) << ','
        << row.budget << ',' << row.seeds << ',' << row.samples << ',' << detail::fmt_double(row.effectiveness) << ','
        << detail::fmt_double(row.effectiveness_std) << ',' << detail::fmt_double(row.effectiveness_median) << ','
        << detail::fmt_double(row.overhead) << ',' << detail::fmt_double(row.avg_queries) << ',';
    for (std::size_t i = 0; i < row.per_seed.size(); ++i)
      out << (i ? ";" : "") << detail::fmt_double(row.per_seed[i]);
    out << '\n';
  }
  return out.str();
}

inline BenchmarkReport report_from_csv(const std::string& csv) {
  BenchmarkReport r;
  std::istringstream in(csv);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      if (key == "corpus") r.corpus = value;
      else if (key == "model") r.model = value;
      else if (key == "version") r.version = value;
      else if (key == "generated_at") r.generated_at = value;
      continue;
    }
    if (!header) {
      if (line != kCsvHeader) throw Error("unexpected report header: " + line);
      header = true;
      continue;
    }
    auto f = detail::split(line, ',');
    if (f.size() != 12) throw Error("malformed report row: " + line);
    BenchRow row;
    row.knowledge = knowledge_from_string(f[0]);
    row.perturb = perturb_type_from_string(f[1]);
    row.method = adding_method_from_string(f[2]);
    row.budget = std::stoull(f[3]);
    row.seeds = std::stoull(f[4]);
    row.samples = std::stoull(f[5]);
    row.effectiveness = std::stod(f[6]);
    row.effectiveness_std = std::stod(f[7]);
    row.effectiveness_median = std::stod(f[8]);
    row.overhead = std::stod(f[9]);
    row.avg_queries = std::stod(f[10]);
    if (!f[11].empty())
      for (const auto& s : detail::split(f[11], ';')) row.per_seed.push_back(std::stod(s));
    r.rows.push_back(std::move(row));
  }
  if (!header) throw Error("report has no header row");
  return r;
}

// One block per perturbation type; rows are attacks, columns are
// (backtracking, budget) pairs with linear iteration first.
inline std::string report_to_table(const BenchmarkReport& r) {
  std::ostringstream out;
  char buf[64];
  for (auto perturb : {PerturbType::random, PerturbType::benign}) {
    std::vector<std::pair<AddingMethod, std::size_t>> cols;
    for (const auto& row : r.rows)
      if (row.perturb == perturb) cols.emplace_back(row.method, row.budget);
    if (cols.empty()) continue;
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    out << (perturb == PerturbType::random ? "Random" : "Benign") << " perturbation: effectiveness % (mean +- std)\n";
    std::snprintf(buf, sizeof buf, "%-24s", "Logarithmic backtracking");
    out << buf;
    for (auto& c : cols) {
      std::snprintf(buf, sizeof buf, " | %15s", c.first == AddingMethod::linear_iteration ? "No" : "Yes");
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "\n%-24s", "Number of queries");
    out << buf;
    for (auto& c : cols) {
      std::snprintf(buf, sizeof buf, " | %15zu", c.second);
      out << buf;
    }
    out << '\n';
    for (auto knowledge : {Knowledge::score, Knowledge::decision}) {
      bool any = false;
      std::ostringstream line;
      std::snprintf(buf, sizeof buf, "%-24s", knowledge == Knowledge::score ? "Score-based" : "Decision-based");
      line << buf;
      for (auto& c : cols) {
        auto it = std::find_if(r.rows.begin(), r.rows.end(), [&](const BenchRow& row) {
          return row.perturb == perturb && row.knowledge == knowledge && row.method == c.first && row.budget == c.second;
        });
        if (it == r.rows.end()) {
          std::snprintf(buf, sizeof buf, " | %15s", "-");
        } else {
          any = true;
          std::snprintf(buf, sizeof buf, " | %7.2f +- %5.2f", it->effectiveness, it->effectiveness_std);
        }
        line << buf;
      }
      if (any) out << line.str() << '\n';
    }
    out << '\n';
  }
  return out.str();
}

inline void write_report(const BenchmarkReport& r, const std::string& dir) {
  std::ofstream csv(dir + "/report.csv");
  std::ofstream table(dir + "/report.txt");
  if (!csv || !table) throw Error("cannot write report into " + dir);
  csv << report_to_csv(r);
  table << report_to_table(r);
}

}  // namespace seqevade

#endif  // SEQEVADE_BENCH_HPP_
