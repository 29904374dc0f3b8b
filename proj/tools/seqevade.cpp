// seqevade command-line tool.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "seqevade/attack.hpp"
#include "seqevade/bench.hpp"
#include "seqevade/datagen.hpp"
#include "seqevade/service.hpp"
#include "seqevade/targets.hpp"

using namespace seqevade;
namespace fs = std::filesystem;

namespace {

struct UsageError : Error {
  using Error::Error;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("invalid JSON in " + path);
  return j;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw Error("cannot write " + path.string());
}

// Options shared by attack and bench.
struct AttackFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget, mw, window;
  std::optional<std::string> knowledge, perturb, method;

  void add(CLI::App* cmd, bool filters) {
    cmd->add_option("--config", config, "Attack configuration JSON")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, filters ? "Number of seeds (runs use seeds 1..N)" : "Attack seed");
    cmd->add_option("--budget", budget, "Query budget per sample")->check(CLI::PositiveNumber);
    cmd->add_option("--knowledge", knowledge, "Oracle knowledge")->check(CLI::IsMember({"decision", "score"}));
    cmd->add_option("--perturb", perturb, "Perturbation type")->check(CLI::IsMember({"random", "benign"}));
    cmd->add_option("--method", method, "Adding method")->check(CLI::IsMember({"linear", "logbt"}));
    cmd->add_option("--mw", mw, "Maximum insertions per window")->check(CLI::PositiveNumber);
    cmd->add_option("--window", window, "Attacker window size n")->check(CLI::PositiveNumber);
  }

  AttackConfig build(const Vocabulary& vocab) const {
    auto cfg = AttackConfig::For(vocab);
    if (!config.empty()) cfg = attack_config_from_json(read_json(config), cfg);
    if (seed) cfg.seed = *seed;
    if (budget) cfg.sample_budget = *budget;
    if (knowledge) cfg.knowledge = knowledge_from_string(*knowledge);
    if (perturb) cfg.perturb = perturb_type_from_string(*perturb);
    if (method) cfg.method = *method == "linear" ? AddingMethod::linear_iteration : AddingMethod::logarithmic_backtracking;
    if (window) {
      cfg.n = *window;
      if (!mw) cfg.max_insertions = *window / 2;
    }
    if (mw) cfg.max_insertions = *mw;
    cfg.Validate();
    return cfg;
  }
};

struct Loaded {
  Corpus corpus;
  Partitions parts;
};

Loaded load_corpus(const std::string& dir) {
  if (dir.empty()) throw UsageError("--corpus is required");
  Loaded l{read_corpus(dir), {}};
  l.parts = holdout_split(l.corpus);
  return l;
}

TrainedModel load_target(const std::string& path, const Vocabulary& vocab) {
  if (path.empty()) throw UsageError("--model is required");
  return load_model(fs::is_directory(path) ? (fs::path(path) / "model.json").string() : path, vocab);
}

std::vector<Trace> malicious_test(const Loaded& l) {
  std::vector<Trace> out;
  for (auto i : l.parts.test)
    if (l.corpus.traces[i].label == Label::malicious) out.push_back(l.corpus.traces[i]);
  return out;
}

std::string timestamp() {
  auto t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box evasion attacks on sliding-window API-call sequence classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  // gen-corpus
  std::string out, corpus_dir, model_path, endpoint, config;
  std::optional<std::uint64_t> seed;
  std::string preset = "default";
  std::optional<std::size_t> per_class;
  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic labelled corpus");
  gen->add_option("--config", config, "Corpus specification JSON")->check(CLI::ExistingFile);
  gen->add_option("--preset", preset, "Base specification")->check(CLI::IsMember({"default", "benchmark"}));
  gen->add_option("--samples-per-class", per_class)->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out, "Output directory")->required();

  // train
  std::size_t k = 140;
  std::string kind = "lr";
  auto* tr = app.add_subcommand("train", "Train a target classifier on the corpus training split");
  tr->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  tr->add_option("--window", k, "Model window size k")->check(CLI::PositiveNumber);
  tr->add_option("--kind", kind, "Model family")->check(CLI::IsMember({"lr", "rf", "nb"}));
  tr->add_option("--seed", seed, "Training seed");
  tr->add_option("--out", out, "Output directory (model.json)")->required();

  // attack
  AttackFlags attack_flags;
  std::string sample;
  auto* at = app.add_subcommand("attack", "Attack one sample");
  attack_flags.add(at, false);
  at->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  at->add_option("--model", model_path, "Model file or directory (in-process target)");
  at->add_option("--endpoint", endpoint, "Classification service URL (remote target)");
  at->add_option("--sample", sample, "Trace id, or index into the malicious test split")->default_val("0");
  at->add_option("--out", out, "Output directory (outcome.json)");

  // bench
  AttackFlags bench_flags;
  unsigned threads = 1;
  std::size_t limit = 0;
  bool dump = false;
  auto* be = app.add_subcommand("bench", "Run the effectiveness matrix");
  bench_flags.add(be, true);
  be->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  be->add_option("--model", model_path, "Model file or directory")->required();
  be->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  be->add_option("--limit", limit, "Attack only the first N malicious test samples");
  be->add_flag("--dump-samples", dump, "Also write per-sample results (samples.jsonl)");
  be->add_option("--out", out, "Output directory (report.csv, report.txt)")->required();

  // serve
  std::string host = "127.0.0.1", port_file, serve_knowledge = "decision";
  int port = 8080;
  double cost = 0.001;
  std::uint64_t throttle = 0;
  std::uint64_t throttle_ms = 60000;
  auto* sv = app.add_subcommand("serve", "Serve a model as a metered classification endpoint");
  sv->add_option("--corpus", corpus_dir, "Corpus directory (vocabulary)")->required();
  sv->add_option("--model", model_path, "Model file or directory")->required();
  sv->add_option("--knowledge", serve_knowledge, "Exposed knowledge")->check(CLI::IsMember({"decision", "score"}));
  sv->add_option("--host", host);
  sv->add_option("--port", port, "Port; 0 picks a free port")->check(CLI::Range(0, 65535));
  sv->add_option("--port-file", port_file, "Write the bound port to this file");
  sv->add_option("--cost", cost, "Billed cost per query");
  sv->add_option("--throttle", throttle, "Max queries per client per throttle window (0 = off)");
  sv->add_option("--throttle-window-ms", throttle_ms);

  // stats
  auto* st = app.add_subcommand("stats", "Print per-client usage of a classification service");
  st->add_option("--endpoint", endpoint, "Classification service URL")->required();

  // report
  std::string in;
  auto* rp = app.add_subcommand("report", "Render a benchmark CSV as a table");
  rp->add_option("--in", in, "report.csv, or a directory containing it")->required();
  rp->add_option("--out", out, "Output directory (report.txt); stdout when absent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      CorpusSpec spec = preset == "benchmark" ? attack_benchmark_spec() : CorpusSpec{};
      if (!config.empty()) spec = corpus_spec_from_json(read_json(config));
      if (per_class) spec.samples_per_class = *per_class;
      if (seed) spec.seed = *seed;
      auto corpus = generate_corpus(spec);
      ensure_dir(out);
      write_corpus(corpus, out);
      write_text(fs::path(out) / "spec.json", to_json(spec).dump(2) + "\n");
      std::printf("wrote %zu traces (%zu per class) to %s\n", corpus.traces.size(), spec.samples_per_class, out.c_str());
    } else if (*tr) {
      auto l = load_corpus(corpus_dir);
      TrainParams p;
      if (seed) p.seed = *seed;
      auto mk = kind == "rf" ? ModelKind::decision_forest : kind == "nb" ? ModelKind::ngram_bayes : ModelKind::logistic_regression;
      auto r = train(gather(l.corpus, l.parts.train), gather(l.corpus, l.parts.test), l.corpus.vocab, mk, k, p);
      ensure_dir(out);
      save_model(r.model, (fs::path(out) / "model.json").string());
      std::printf("model %s k=%zu heldout_accuracy=%.4f fpr=%.4f fnr=%.4f\n", std::string(to_string(mk)).c_str(), k,
                  r.heldout_accuracy, r.false_positive_rate, r.false_negative_rate);
    } else if (*at) {
      if (model_path.empty() == endpoint.empty()) throw UsageError("give exactly one of --model or --endpoint");
      auto l = load_corpus(corpus_dir);
      auto cfg = attack_flags.build(l.corpus.vocab);
      const Trace* target = nullptr;
      for (const auto& t : l.corpus.traces)
        if (t.id == sample) target = &t;
      auto pool = malicious_test(l);
      if (!target) {
        std::size_t idx = 0;
        try {
          idx = std::stoull(sample);
        } catch (const std::exception&) {
          throw UsageError("unknown sample " + sample);
        }
        if (idx >= pool.size()) throw UsageError("sample index out of range (" + std::to_string(pool.size()) + " malicious test traces)");
        target = &pool[idx];
      }
      auto provider = BenignProvider::Markov(gather(l.corpus, l.parts.benign_holdout), cfg.attacker_vocab, 1);
      std::unique_ptr<Oracle> oracle;
      TrainedModel model;
      QueryMeter meter;
      if (!model_path.empty()) {
        model = load_target(model_path, l.corpus.vocab);
        oracle = std::make_unique<ModelOracle>(model, cfg.knowledge, &meter);
      } else {
        oracle = remote_oracle(endpoint, "seqevade-cli", &meter);
        if (oracle->knowledge() != cfg.knowledge && cfg.knowledge == Knowledge::score)
          throw ConfigError("endpoint exposes decision knowledge only");
      }
      auto o = full_sequence_attack(*oracle, *target, &provider, cfg);
      auto j = to_json(o);
      j["config"] = to_json(cfg);
      std::printf("sample=%s evaded=%s stop=%s queries=%zu overhead=%.4f insertions=%zu\n", o.sample_id.c_str(),
                  o.evaded ? "yes" : "no", std::string(to_string(o.stop)).c_str(), o.queries.total(), o.overhead,
                  o.ledger.active_count());
      if (!out.empty()) {
        ensure_dir(out);
        write_text(fs::path(out) / "outcome.json", j.dump(2) + "\n");
        write_text(fs::path(out) / "adversarial.json", trace_to_json(o.final_trace).dump() + "\n");
      }
    } else if (*be) {
      auto l = load_corpus(corpus_dir);
      auto model = load_target(model_path, l.corpus.vocab);
      auto base = bench_flags.build(l.corpus.vocab);
      auto samples = malicious_test(l);
      if (limit && samples.size() > limit) samples.resize(limit);
      auto provider = BenignProvider::Markov(gather(l.corpus, l.parts.benign_holdout), base.attacker_vocab, 1);
      std::vector<std::uint64_t> seeds;
      for (std::uint64_t s = 1; s <= bench_flags.seed.value_or(5); ++s) seeds.push_back(s);
      auto matrix = default_matrix(seeds);
      std::erase_if(matrix.cells, [&](const BenchCell& c) {
        return (bench_flags.budget && c.budget != *bench_flags.budget) ||
               (bench_flags.knowledge && c.knowledge != base.knowledge) ||
               (bench_flags.perturb && c.perturb != base.perturb) || (bench_flags.method && c.method != base.method);
      });
      if (bench_flags.budget && matrix.cells.empty()) {
        // A budget outside the default axis still runs the other axes.
        for (auto c : default_matrix(seeds).cells)
          if (c.budget == 100) {
            c.budget = *bench_flags.budget;
            if ((!bench_flags.knowledge || c.knowledge == base.knowledge) &&
                (!bench_flags.perturb || c.perturb == base.perturb) && (!bench_flags.method || c.method == base.method))
              matrix.cells.push_back(c);
          }
      }
      BenchInputs inputs{&model, &samples, &provider, base, threads, fs::absolute(corpus_dir).string(),
                         fs::absolute(model_path).string()};
      auto report = bench(matrix, inputs);
      report.generated_at = timestamp();
      ensure_dir(out);
      write_report(report, out);
      if (dump) {
        std::ostringstream lines;
        for (const auto& cell : matrix.cells)
          for (auto s : matrix.seeds)
            for (const auto& r : run_cell(inputs, cell, s))
              lines << nlohmann::json{{"knowledge", to_string(cell.knowledge)},
                                      {"perturb", to_string(cell.perturb)},
                                      {"method", to_string(cell.method)},
                                      {"budget", cell.budget},
                                      {"seed", s},
                                      {"sample_id", r.id},
                                      {"originally_malicious", r.originally_malicious},
                                      {"evaded", r.evaded},
                                      {"queries", r.queries},
                                      {"overhead", r.overhead},
                                      {"ledger_digest", r.digest}}
                           .dump()
                    << '\n';
        write_text(fs::path(out) / "samples.jsonl", lines.str());
      }
      std::cout << report_to_table(report);
    } else if (*sv) {
      auto l = load_corpus(corpus_dir);
      auto model = load_target(model_path, l.corpus.vocab);
      std::optional<Throttle> th;
      if (throttle) th = Throttle{throttle, std::chrono::milliseconds(throttle_ms)};
      sigset_t sigs;
      sigemptyset(&sigs);
      sigaddset(&sigs, SIGINT);
      sigaddset(&sigs, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
      ClassificationService svc(std::move(model), BillingPolicy{cost, th, knowledge_from_string(serve_knowledge)});
      svc.Start(host, port);
      if (!port_file.empty()) write_text(port_file, std::to_string(svc.port()) + "\n");
      std::printf("serving on http://%s:%d\n", host.c_str(), svc.port());
      std::fflush(stdout);
      int sig = 0;
      sigwait(&sigs, &sig);
      svc.Stop();
    } else if (*st) {
      RemoteOracle client(endpoint, "seqevade-cli-stats");
      std::cout << client.stats().dump(2) << '\n';
    } else if (*rp) {
      fs::path path = fs::is_directory(in) ? fs::path(in) / "report.csv" : fs::path(in);
      std::ifstream f(path);
      if (!f) throw Error("cannot read " + path.string());
      std::stringstream buf;
      buf << f.rdbuf();
      auto table = report_to_table(report_from_csv(buf.str()));
      if (out.empty()) {
        std::cout << table;
      } else {
        ensure_dir(out);
        write_text(fs::path(out) / "report.txt", table);
      }
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
