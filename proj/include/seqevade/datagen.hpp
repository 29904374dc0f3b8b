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

// Synthetic API-trace corpus with planted malicious motifs.
//
// Token space layout for a vocabulary of V ids:
//   0                      padding
//   [1, band_start)        "common" tokens walked by the benign Markov chain;
//                          the first `marker_fraction` of them are benign
//                          markers that malicious background under-emits
//                          (only when motifs are planted at all)
//   [band_start, V)        malicious band: motif tokens, rare in benign
//                          traces and never emitted back to back there
// The two non-insertable calls live in the malicious band so motifs may use
// them.

#ifndef SEQEVADE_DATAGEN_HPP_
#define SEQEVADE_DATAGEN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqevade/core.hpp"
#include "seqevade/io.hpp"

namespace seqevade {

inline const std::vector<std::string>& default_forbidden_names() {
  static const std::vector<std::string> names = {"ExitWindowsEx", "NtTerminateProcess"};
  return names;
}

struct CorpusSpec {
  std::size_t vocab_size = 314;
  std::size_t min_length = 200;
  std::size_t max_length = 2000;
  std::size_t samples_per_class = 2000;

  std::size_t motif_count = 16;
  std::size_t motif_length = 4;
  // Expected motifs per malicious window of `plant_window` tokens.
  double motif_density = 1.0;
  std::size_t plant_window = 20;
  // Explicit motifs override the generated ones.
  std::vector<std::vector<TokenId>> motifs;

  // Benign Markov chain.
  std::size_t branching = 6;
  double band_fraction = 0.25;
  double band_noise = 0.01;
  double marker_fraction = 0.05;
  double marker_suppression = 1.0;

  // Static string-presence features. Index sets are generated when empty.
  std::size_t static_dim = 20000;
  std::size_t static_bits_per_class = 300;
  std::vector<std::uint32_t> static_malicious_bits;
  std::vector<std::uint32_t> static_benign_bits;
  double static_on = 0.1;
  double static_cross = 0.05;
  std::size_t static_background = 20;

  std::uint64_t seed = 7;
};

// Corpus used by the attack benchmark and the acceptance suite: shorter
// traces and sparser motifs, so that k = n = 140 windows are attackable
// within M_w = 70 insertions while the target still exceeds 90% accuracy.
inline CorpusSpec attack_benchmark_spec() {
  CorpusSpec s;
  s.min_length = 140;
  s.max_length = 420;
  s.motif_density = 0.3;
  return s;
}

inline nlohmann::json to_json(const CorpusSpec& s) {
  return {{"vocab_size", s.vocab_size},
          {"min_length", s.min_length},
          {"max_length", s.max_length},
          {"samples_per_class", s.samples_per_class},
          {"motif_count", s.motif_count},
          {"motif_length", s.motif_length},
          {"motif_density", s.motif_density},
          {"plant_window", s.plant_window},
          {"motifs", s.motifs},
          {"branching", s.branching},
          {"band_fraction", s.band_fraction},
          {"band_noise", s.band_noise},
          {"marker_fraction", s.marker_fraction},
          {"marker_suppression", s.marker_suppression},
          {"static_dim", s.static_dim},
          {"static_bits_per_class", s.static_bits_per_class},
          {"static_malicious_bits", s.static_malicious_bits},
          {"static_benign_bits", s.static_benign_bits},
          {"static_on", s.static_on},
          {"static_cross", s.static_cross},
          {"static_background", s.static_background},
          {"seed", s.seed}};
}

// Missing keys keep their defaults.
inline CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
  CorpusSpec s;
#define SEQEVADE_FIELD(name) \
  if (j.contains(#name)) j.at(#name).get_to(s.name);
  SEQEVADE_FIELD(vocab_size)
  SEQEVADE_FIELD(min_length)
  SEQEVADE_FIELD(max_length)
  SEQEVADE_FIELD(samples_per_class)
  SEQEVADE_FIELD(motif_count)
  SEQEVADE_FIELD(motif_length)
  SEQEVADE_FIELD(motif_density)
  SEQEVADE_FIELD(plant_window)
  SEQEVADE_FIELD(motifs)
  SEQEVADE_FIELD(branching)
  SEQEVADE_FIELD(band_fraction)
  SEQEVADE_FIELD(band_noise)
  SEQEVADE_FIELD(marker_fraction)
  SEQEVADE_FIELD(marker_suppression)
  SEQEVADE_FIELD(static_dim)
  SEQEVADE_FIELD(static_bits_per_class)
  SEQEVADE_FIELD(static_malicious_bits)
  SEQEVADE_FIELD(static_benign_bits)
  SEQEVADE_FIELD(static_on)
  SEQEVADE_FIELD(static_cross)
  SEQEVADE_FIELD(static_background)
  SEQEVADE_FIELD(seed)
#undef SEQEVADE_FIELD
  return s;
}

// Everything derived from a spec before sampling traces: vocabulary, chain,
// motifs and static bit sets. Deterministic in spec.seed.
class CorpusModel {
 public:
  explicit CorpusModel(CorpusSpec spec) : spec_(std::move(spec)) {
    Validate();
    const std::size_t v = spec_.vocab_size;
    band_start_ = v - std::max<std::size_t>(spec_.motif_length + 2,
                                            static_cast<std::size_t>(std::lround(spec_.band_fraction * v)));
    marker_end_ = 1 + static_cast<std::size_t>(std::lround(spec_.marker_fraction * (band_start_ - 1)));

    std::vector<std::string> names(v);
    names[0] = "<null>";
    for (std::size_t i = 1; i < v; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "api_%03zu", i);
      names[i] = buf;
    }
    const auto& forbidden = default_forbidden_names();
    for (std::size_t f = 0; f < forbidden.size(); ++f) names[v - 1 - f] = forbidden[f];
    vocab_ = Vocabulary(std::move(names), forbidden);

    std::mt19937_64 rng(spec_.seed);
    std::uniform_int_distribution<TokenId> common(1, static_cast<TokenId>(band_start_ - 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    successors_.resize(band_start_);
    for (TokenId s = 1; s < band_start_; ++s) {
      auto& row = successors_[s];
      double total = 0.0;
      for (std::size_t b = 0; b < spec_.branching; ++b) {
        double w = unit(rng) + 0.05;
        row.push_back({common(rng), w});
        total += w;
      }
      double acc = 0.0;
      for (auto& e : row) {
        acc += e.weight / total;
        e.weight = acc;
      }
      row.back().weight = 1.0;
    }

    if (!spec_.motifs.empty()) {
      motifs_ = spec_.motifs;
    } else {
      std::uniform_int_distribution<TokenId> band(static_cast<TokenId>(band_start_), static_cast<TokenId>(v - 1));
      for (std::size_t m = 0; m < spec_.motif_count; ++m) {
        std::vector<TokenId> motif(spec_.motif_length);
        for (auto& t : motif) t = band(rng);
        motifs_.push_back(std::move(motif));
      }
    }

    malicious_bits_ = spec_.static_malicious_bits;
    benign_bits_ = spec_.static_benign_bits;
    if (spec_.static_dim > 0 && (malicious_bits_.empty() || benign_bits_.empty())) {
      std::vector<std::uint32_t> perm(spec_.static_dim);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const std::size_t per = std::min(spec_.static_bits_per_class, spec_.static_dim / 2);
      if (malicious_bits_.empty()) malicious_bits_.assign(perm.begin(), perm.begin() + per);
      if (benign_bits_.empty()) benign_bits_.assign(perm.begin() + per, perm.begin() + 2 * per);
    }
  }

  const CorpusSpec& spec() const { return spec_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<std::vector<TokenId>>& motifs() const { return motifs_; }
  TokenId band_start() const { return static_cast<TokenId>(band_start_); }
  bool is_marker(TokenId t) const { return t >= 1 && t < marker_end_; }
  bool in_band(TokenId t) const { return t >= band_start_; }
  const std::vector<std::uint32_t>& static_malicious_bits() const { return malicious_bits_; }
  const std::vector<std::uint32_t>& static_benign_bits() const { return benign_bits_; }

  // Sample `index` of class `label`; independent of every other sample.
  Trace GenerateTrace(Label label, std::size_t index) const {
    std::seed_seq seq{static_cast<std::uint32_t>(spec_.seed), static_cast<std::uint32_t>(spec_.seed >> 32),
                      static_cast<std::uint32_t>(label), static_cast<std::uint32_t>(index)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> len_dist(spec_.min_length, spec_.max_length);
    const std::size_t len = len_dist(rng);
    const bool mal = label == Label::malicious;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<TokenId> common(1, static_cast<TokenId>(band_start_ - 1));
    std::uniform_int_distribution<TokenId> non_marker(static_cast<TokenId>(marker_end_),
                                                      static_cast<TokenId>(band_start_ - 1));
    std::uniform_int_distribution<TokenId> band(static_cast<TokenId>(band_start_),
                                                static_cast<TokenId>(spec_.vocab_size - 1));
    std::vector<TokenId> ids;
    ids.reserve(len);
    TokenId state = common(rng);
    bool last_noise = false;
    while (ids.size() < len) {
      if (!last_noise && unit(rng) < spec_.band_noise) {
        ids.push_back(band(rng));
        last_noise = true;
        continue;
      }
      last_noise = false;
      double u = unit(rng);
      const auto& row = successors_[state];
      std::size_t e = 0;
      while (row[e].weight < u) ++e;
      state = row[e].next;
      TokenId emit = state;
      if (mal && spec_.motif_density > 0.0 && is_marker(emit) && unit(rng) < spec_.marker_suppression) emit = non_marker(rng);
      ids.push_back(emit);
    }

    if (mal && spec_.motif_density > 0.0) PlantMotifs(ids, rng);

    char name[48];
    std::snprintf(name, sizeof name, "%s-%06zu", mal ? "mal" : "ben", index);
    return Trace::FromIds(name, label, ids);
  }

  StaticFeatureVector GenerateStatic(Label label, std::size_t index) const {
    std::seed_seq seq{static_cast<std::uint32_t>(spec_.seed), static_cast<std::uint32_t>(spec_.seed >> 32),
                      static_cast<std::uint32_t>(label), static_cast<std::uint32_t>(index), 0x57a71cu};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool mal = label == Label::malicious;
    std::vector<std::uint32_t> ones;
    for (auto b : malicious_bits_)
      if (unit(rng) < (mal ? spec_.static_on : spec_.static_cross)) ones.push_back(b);
    for (auto b : benign_bits_)
      if (unit(rng) < (mal ? spec_.static_cross : spec_.static_on)) ones.push_back(b);
    std::uniform_int_distribution<std::uint32_t> any(0, static_cast<std::uint32_t>(spec_.static_dim - 1));
    for (std::size_t i = 0; i < spec_.static_background; ++i) ones.push_back(any(rng));
    return StaticFeatureVector(spec_.static_dim, std::move(ones));
  }

  // Number of planted-motif occurrences (contiguous) in a trace.
  std::size_t CountMotifs(std::span<const TokenId> ids) const {
    std::size_t count = 0;
    for (const auto& m : motifs_) {
      if (m.size() > ids.size()) continue;
      for (std::size_t i = 0; i + m.size() <= ids.size(); ++i)
        if (std::equal(m.begin(), m.end(), ids.begin() + static_cast<std::ptrdiff_t>(i))) ++count;
    }
    return count;
  }

 private:
  struct Edge {
    TokenId next;
    double weight;  // cumulative
  };

  void Validate() const {
    const auto& s = spec_;
    if (s.vocab_size < 16) throw ConfigError("vocab_size must be >= 16");
    if (s.min_length == 0 || s.min_length > s.max_length) throw ConfigError("invalid trace length range");
    if (s.motif_length == 0) throw ConfigError("motif_length must be >= 1");
    if (s.motif_density > 0.0 && s.motif_length > s.min_length) throw ConfigError("motif longer than trace");
    for (const auto& m : s.motifs) {
      if (m.size() > s.min_length) throw ConfigError("motif longer than trace");
      for (auto t : m)
        if (t == kNullToken || t >= s.vocab_size) throw ConfigError("motif token outside vocabulary");
    }
    if (s.plant_window < s.motif_length) throw ConfigError("plant_window shorter than motif");
    if (s.branching == 0) throw ConfigError("branching must be >= 1");
    if (s.motif_density < 0.0) throw ConfigError("motif_density must be >= 0");
  }

  template <class Rng>
  void PlantMotifs(std::vector<TokenId>& ids, Rng& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> which(0, motifs_.size() - 1);
    const double whole = std::floor(spec_.motif_density);
    const double frac = spec_.motif_density - whole;
    const std::size_t pw = spec_.plant_window;
    std::size_t planted = 0;
    auto plant_in = [&](std::size_t begin, std::size_t end) {
      const auto& m = motifs_[which(rng)];
      if (end - begin < m.size()) return;
      std::uniform_int_distribution<std::size_t> at(begin, end - m.size());
      std::copy(m.begin(), m.end(), ids.begin() + static_cast<std::ptrdiff_t>(at(rng)));
      ++planted;
    };
    for (std::size_t w = 0; w * pw < ids.size(); ++w) {
      std::size_t begin = w * pw, end = std::min(ids.size(), begin + pw);
      std::size_t count = static_cast<std::size_t>(whole) + (unit(rng) < frac ? 1 : 0);
      for (std::size_t c = 0; c < count; ++c) plant_in(begin, end);
    }
    if (planted == 0) {
      const auto& m = motifs_[which(rng)];
      std::uniform_int_distribution<std::size_t> at(0, ids.size() - m.size());
      std::copy(m.begin(), m.end(), ids.begin() + static_cast<std::ptrdiff_t>(at(rng)));
    }
  }

  CorpusSpec spec_;
  Vocabulary vocab_;
  std::size_t band_start_ = 0;
  std::size_t marker_end_ = 0;
  std::vector<std::vector<Edge>> successors_;
  std::vector<std::vector<TokenId>> motifs_;
  std::vector<std::uint32_t> malicious_bits_;
  std::vector<std::uint32_t> benign_bits_;
};

// Benign samples first, then malicious, each in index order.
inline Corpus generate_corpus(const CorpusSpec& spec) {
  CorpusModel model(spec);
  Corpus c;
  c.vocab = model.vocab();
  for (Label label : {Label::benign, Label::malicious}) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      c.traces.push_back(model.GenerateTrace(label, i));
      if (spec.static_dim > 0) c.statics.push_back(model.GenerateStatic(label, i));
    }
  }
  return c;
}

//============= Partitions ===============

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

// Indices into a corpus. `benign_holdout` (the validation benign samples) is
// reserved for benign-sequence providers and never overlaps `train`.
struct Partitions {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<std::size_t> benign_holdout;
};

inline Partitions holdout_split(const Corpus& corpus, SplitFractions f = {}, std::uint64_t seed = 11) {
  if (corpus.traces.empty()) throw ConfigError("cannot split an empty corpus");
  if (f.train < 0 || f.validation < 0 || f.test < 0 || std::abs(f.train + f.validation + f.test - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < corpus.traces.size(); ++i) {
    auto l = corpus.traces[i].label;
    if (l == Label::unknown) continue;
    by_class[l == Label::malicious].push_back(i);
  }
  Partitions p;
  std::mt19937_64 rng(seed);
  for (int cls = 0; cls < 2; ++cls) {
    auto& ids = by_class[cls];
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n = ids.size();
    const auto n_train = static_cast<std::size_t>(std::llround(f.train * n));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(f.validation * n)));
    p.train.insert(p.train.end(), ids.begin(), ids.begin() + n_train);
    p.validation.insert(p.validation.end(), ids.begin() + n_train, ids.begin() + n_train + n_val);
    p.test.insert(p.test.end(), ids.begin() + n_train + n_val, ids.end());
    if (cls == 0) p.benign_holdout.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  }
  for (auto* v : {&p.train, &p.validation, &p.test, &p.benign_holdout}) std::sort(v->begin(), v->end());
  return p;
}

inline std::vector<Trace> gather(const Corpus& c, const std::vector<std::size_t>& idx) {
  std::vector<Trace> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(c.traces.at(i));
  return out;
}

}  // namespace seqevade

#endif  // SEQEVADE_DATAGEN_HPP_
