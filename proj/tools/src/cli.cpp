#include "teachctl/cli.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "teach/service.hpp"
#include "teach/stats.hpp"
#include "teach/version.hpp"

namespace teach::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void usage(const std::string& message) {
  throw TeachError(ErrorKind::InvalidInput, message);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw TeachError(ErrorKind::Io, "cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TeachError(ErrorKind::Io, "missing file " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string strategy_list_text(const std::vector<StrategyKind>& kinds) {
  std::string s;
  for (auto k : kinds) s += (s.empty() ? "" : ",") + std::string(strategy_name(k));
  return s;
}

const std::string kCurveNote =
    "teaching-phase correctness per 10% of teaching progress; not the same as the "
    "student's true learning curve";

// Process-wide server handle for SIGINT/SIGTERM.
HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

struct SourceFlags {
  std::vector<std::string> manifests;
  bool unimodal = false;
};

void add_source_options(CLI::App* sub, DataSource& src, SourceFlags& flags, bool many) {
  if (many) {
    sub->add_option("--dataset", flags.manifests, "Dataset manifest (repeatable)");
  } else {
    sub->add_option("--dataset", flags.manifests, "Dataset manifest")->expected(0, 1);
  }
  auto& m = src.mixture;
  sub->add_option("--classes", m.classes, "Synthetic: number of classes")->capture_default_str();
  sub->add_option("--per-class", m.per_class, "Synthetic: items per class")->capture_default_str();
  sub->add_option("--dims", m.dims, "Synthetic: feature dimension")->capture_default_str();
  sub->add_option("--spread", m.spread, "Synthetic: distance between class means")
      ->capture_default_str();
  sub->add_option("--mode-separation", m.mode_separation,
                  "Synthetic: distance between the two modes of a class")
      ->capture_default_str();
  sub->add_flag("--unimodal", flags.unimodal, "Synthetic: one mode per class");
  sub->add_option("--data-seed", m.seed, "Synthetic: generator seed")->capture_default_str();
  sub->add_option("--gamma", src.prepare.gamma, "RBF length scale")->capture_default_str();
  sub->add_option("--pca-dim", src.prepare.pca_dim, "PCA target dimension (0 = none)")
      ->capture_default_str();
  sub->add_option("--neighbors", src.prepare.neighbors, "Top-k graph sparsification (0 = dense)")
      ->capture_default_str();
}

void finish_source(DataSource& src, const SourceFlags& flags) {
  if (!flags.manifests.empty()) src.manifest = fs::path(flags.manifests.front());
  src.mixture.multimodal = !flags.unimodal;
  if (src.prepare.gamma <= 0.0) usage("--gamma must be > 0");
  if (src.prepare.pca_dim < 0) usage("--pca-dim must be >= 0");
  if (src.prepare.neighbors < 0) usage("--neighbors must be >= 0");
}

std::unique_ptr<ArtifactCache> open_cache(const std::string& dir) {
  if (dir.empty()) return nullptr;
  return std::make_unique<ArtifactCache>(dir);
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  DataSource source;
  SourceFlags flags;
  std::string strategies = "rnd,cc,wp,batch,eer";
  std::string seeds = "0..199";
  std::uint64_t base_seed = 0;
  std::string student = "grf";
  StudentProfile profile;
  int memory_limit = 0;
  TrialOptions trial;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out;
  std::string cache;
  std::string reference = "eer";
};

int do_simulate(SimulateArgs& a, std::ostream& out) {
  finish_source(a.source, a.flags);
  ExperimentSpec spec;
  spec.strategies = parse_strategy_list(a.strategies);
  spec.seeds = parse_seed_range(a.seeds);
  spec.student = a.profile;
  spec.student.kind = parse_student_kind(a.student);
  if (a.memory_limit > 0) spec.student.memory_limit = a.memory_limit;
  validate_profile(spec.student);
  spec.trial = a.trial;
  spec.trial.base_seed = a.base_seed;
  spec.jobs = a.jobs;
  const StrategyKind reference = parse_strategy(a.reference);

  const auto cache = open_cache(a.cache);
  auto prepared = prepare_dataset(load_source(a.source), a.source.prepare, cache.get());
  // Resolve C-dependent defaults once so the embedded config is complete.
  SessionConfig probe;
  probe.dataset = prepared->name();
  probe.teach_rounds = spec.trial.teach_rounds;
  probe.test_rounds = spec.trial.test_rounds;
  probe = resolve_config(probe, *prepared);
  spec.trial.teach_rounds = probe.teach_rounds;
  spec.trial.test_rounds = probe.test_rounds;

  json config = {{"command", "simulate"},
                 {"source", source_to_json(a.source)},
                 {"strategies", strategy_list_text(spec.strategies)},
                 {"seeds", a.seeds},
                 {"base_seed", a.base_seed},
                 {"student", profile_to_json(spec.student)},
                 {"teach_rounds", spec.trial.teach_rounds},
                 {"test_rounds", spec.trial.test_rounds},
                 {"max_candidates", spec.trial.max_candidates},
                 {"reference", a.reference}};

  const auto results = run_experiment(prepared, spec, cache.get());
  const SimulateOutputs outputs = render_simulation(results, reference, config);
  fs::create_directories(a.out);
  write_file(fs::path(a.out) / "trials.csv", outputs.trials_csv);
  write_file(fs::path(a.out) / "curves.json", outputs.curves.dump(2) + "\n");
  write_file(fs::path(a.out) / "summary.json", outputs.summary.dump(2) + "\n");
  out << outputs.table;
  return 0;
}

// --- prepare ----------------------------------------------------------------

struct PrepareArgs {
  DataSource source;
  SourceFlags flags;
  std::string cache;
  std::string batch_seeds;
  std::uint64_t base_seed = 0;
  int teach_rounds = 0;
  int test_rounds = 0;
  std::string write_dataset;
};

int do_prepare(PrepareArgs& a, std::ostream& out) {
  finish_source(a.source, a.flags);
  Dataset dataset = load_source(a.source);
  if (!a.write_dataset.empty()) {
    save_dataset(dataset, a.write_dataset);
    out << "dataset: wrote " << a.write_dataset << "\n";
  }
  if (a.cache.empty()) {
    if (a.write_dataset.empty()) usage("prepare needs --cache or --write-dataset");
    return 0;
  }
  const auto cache = open_cache(a.cache);
  PrepareReport report;
  const auto prepared = prepare_dataset(std::move(dataset), a.source.prepare, cache.get(), &report);
  out << "pca: " << cache_status_name(report.pca) << "\n";
  out << "graph: " << cache_status_name(report.graph) << "\n";
  if (a.batch_seeds.empty()) return 0;

  SessionConfig config;
  config.dataset = prepared->name();
  config.strategy = StrategyKind::Random;
  config.teach_rounds = a.teach_rounds;
  config.test_rounds = a.test_rounds;
  int hits = 0;
  int computed = 0;
  for (std::uint64_t seed : parse_seed_range(a.batch_seeds)) {
    // Same test set as the batch trial with this seed in `simulate`.
    config.seed = trial_seed(a.base_seed, StrategyKind::Batch, seed);
    const Session s = Session::create("prepare", config, prepared);
    CacheStatus status = CacheStatus::Disabled;
    cached_batch_order(*prepared, s.teaching_pool(), s.config().teach_rounds, cache.get(), &status);
    (status == CacheStatus::Hit ? hits : computed) += 1;
  }
  out << "batch orders: " << hits << " hit, " << computed << " computed\n";
  return 0;
}

// --- serve ------------------------------------------------------------------

struct ServeArgs {
  DataSource source;
  SourceFlags flags;
  std::string sessions = "sessions";
  std::string listen;
  std::string static_dir;
  std::string cache;
};

int do_serve(ServeArgs& a, std::ostream& out, std::ostream& err) {
  finish_source(a.source, a.flags);
  const auto cache = open_cache(a.cache);
  auto registry = std::make_shared<DatasetRegistry>();
  if (a.flags.manifests.empty()) {
    registry->add(prepare_dataset(load_source(a.source), a.source.prepare, cache.get()));
  }
  for (const auto& m : a.flags.manifests) {
    registry->add(prepare_dataset(load_dataset(m), a.source.prepare, cache.get()));
  }
  ServiceOptions options;
  options.sessions_dir = a.sessions;
  options.cache = cache.get();
  options.version = version_string();
  TeachingService service(registry, options);
  const int restored = service.restore_sessions([&](const std::string& e) {
    err << "warning: could not restore " << e << "\n";
  });

  const auto [host, port] = a.listen.empty() ? listen_address() : parse_listen_address(a.listen);
  HttpServer server(service);
  if (!a.static_dir.empty()) server.mount_static(a.static_dir);
  const int bound = server.bind(host, port);
  out << "teachctl " << version_string() << " listening on http://" << host << ":" << bound
      << " (" << registry->names().size() << " datasets, " << restored << " sessions restored)"
      << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.run();
  g_server = nullptr;
  return 0;
}

// --- report -----------------------------------------------------------------

struct ReportArgs {
  std::string dir;
  std::string out;
  std::string reference = "eer";
};

int do_report(ReportArgs& a, std::ostream& out) {
  const ReportOutputs r = render_report(a.dir, parse_strategy(a.reference));
  const fs::path dest = a.out.empty() ? fs::path(a.dir) : fs::path(a.out);
  fs::create_directories(dest);
  write_file(dest / "curves.csv", r.curves_csv);
  write_file(dest / "report.json", r.summary.dump(2) + "\n");
  out << r.table;
  return 0;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
  auto parse_one = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      usage("bad seed range '" + text + "' (expected a..b)");
    }
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      usage("seed out of range in '" + text + "'");
    }
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) return {parse_one(text)};
  const std::uint64_t a = parse_one(text.substr(0, dots));
  const std::uint64_t b = parse_one(text.substr(dots + 2));
  if (b < a) usage("empty seed range '" + text + "'");
  if (b - a >= 10'000'000) usage("seed range '" + text + "' is too large");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = a;; ++s) {
    seeds.push_back(s);
    if (s == b) break;
  }
  return seeds;
}

std::vector<StrategyKind> parse_strategy_list(const std::string& text) {
  std::vector<StrategyKind> kinds;
  std::stringstream in(text);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (name.empty()) continue;
    const StrategyKind k = parse_strategy(name);
    if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) {
      usage("strategy '" + name + "' listed twice");
    }
    kinds.push_back(k);
  }
  if (kinds.empty()) usage("empty strategy list");
  return kinds;
}

Dataset load_source(const DataSource& source) {
  if (source.manifest) return load_dataset(*source.manifest);
  return make_gaussian_mixture(source.mixture);
}

json source_to_json(const DataSource& s) {
  json prep = {{"gamma", s.prepare.gamma},
               {"pca_dim", s.prepare.pca_dim},
               {"neighbors", s.prepare.neighbors}};
  if (s.manifest) return {{"manifest", s.manifest->string()}, {"prepare", prep}};
  const auto& m = s.mixture;
  return {{"synthetic",
           {{"classes", m.classes},
            {"per_class", m.per_class},
            {"dims", m.dims},
            {"spread", m.spread},
            {"multimodal", m.multimodal},
            {"mode_separation", m.mode_separation},
            {"seed", m.seed}}},
          {"prepare", prep}};
}

std::string version_string() {
  return std::string(kVersion) + " (" + kGitDescribe + ")";
}

std::string format_table(const json& summary) {
  const std::string reference = summary.value("reference", "eer");
  std::ostringstream t;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %7s %14s %10s %12s\n", "strategy", "trials",
                "ave_time_ms", "ave_score", ("p_vs_" + reference).c_str());
  t << line;
  for (StrategyKind k : kAllStrategies) {
    const std::string name(strategy_name(k));
    if (!summary.at("strategies").contains(name)) continue;
    const json& s = summary.at("strategies").at(name);
    std::string p = "-";
    if (summary.contains("p_values") && summary.at("p_values").contains(name)) {
      const json& v = summary.at("p_values").at(name);
      if (v.is_number()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", v.get<double>());
        p = buf;
      } else {
        p = "n/a";
      }
    }
    std::snprintf(line, sizeof line, "%-8s %7d %14.1f %10.4f %12s\n", name.c_str(),
                  s.at("trials").get<int>(), s.at("mean_ms").get<double>(),
                  s.at("mean_score").get<double>(), p.c_str());
    t << line;
  }
  return t.str();
}

SimulateOutputs render_simulation(std::span<const TrialResult> results, StrategyKind reference,
                                  const json& config) {
  SimulateOutputs o;
  const std::string version = version_string();
  std::ostringstream csv;
  csv << "# teachctl " << version << " config=" << config.dump() << "\n";
  csv << "strategy,seed,score,mean_ms\n";
  for (const auto& r : results) {
    csv << strategy_name(r.strategy) << "," << r.seed << "," << num(r.score) << ","
        << num(r.mean_ms) << "\n";
  }
  o.trials_csv = csv.str();

  const ComparisonReport report = compare_strategies(results, reference);
  json curves = json::object();
  for (const auto& [kind, s] : report.strategies) {
    curves[std::string(strategy_name(kind))] = curve_to_json(s.curve);
  }
  o.curves = {{"version", version}, {"config", config}, {"note", kCurveNote}, {"curves", curves}};
  o.summary = report_to_json(report);
  o.summary["version"] = version;
  o.summary["config"] = config;
  o.table = format_table(o.summary);
  return o;
}

std::vector<TrialRow> read_trials_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<TrialRow> rows;
  std::string line;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "strategy,seed,score,mean_ms") {
        throw TeachError(ErrorKind::InvalidInput, path.string() + ": unexpected header '" + line + "'");
      }
      header = true;
      continue;
    }
    std::stringstream fields(line);
    std::string strategy, seed, score, ms;
    if (!std::getline(fields, strategy, ',') || !std::getline(fields, seed, ',') ||
        !std::getline(fields, score, ',') || !std::getline(fields, ms)) {
      throw TeachError(ErrorKind::InvalidInput,
                       path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    try {
      parse_strategy(strategy);
      rows.push_back({strategy, std::stoull(seed), std::stod(score), std::stod(ms)});
    } catch (const std::logic_error&) {
      throw TeachError(ErrorKind::InvalidInput,
                       path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  if (!header) throw TeachError(ErrorKind::InvalidInput, path.string() + ": no header");
  if (rows.empty()) throw TeachError(ErrorKind::InvalidInput, path.string() + ": no trials");
  return rows;
}

ReportOutputs render_report(const fs::path& dir, StrategyKind reference) {
  if (!fs::is_directory(dir)) throw TeachError(ErrorKind::Io, "no results directory " + dir.string());
  const fs::path trials_path = dir / "trials.csv";
  if (!fs::exists(trials_path)) throw TeachError(ErrorKind::Io, "missing file " + trials_path.string());
  const auto rows = read_trials_csv(trials_path);

  std::map<StrategyKind, std::vector<double>> scores;
  std::map<StrategyKind, double> ms;
  for (const auto& r : rows) {
    const StrategyKind k = parse_strategy(r.strategy);
    scores[k].push_back(r.score);
    ms[k] += r.mean_ms;
  }
  json strategies = json::object();
  json p_values = json::object();
  for (const auto& [k, sc] : scores) {
    strategies[std::string(strategy_name(k))] = {
        {"trials", sc.size()},
        {"mean_score", mean(sc)},
        {"sd_score", sc.size() > 1 ? std::sqrt(sample_variance(sc)) : 0.0},
        {"mean_ms", ms[k] / static_cast<double>(sc.size())}};
  }
  if (scores.count(reference)) {
    for (const auto& [k, sc] : scores) {
      if (k == reference) continue;
      json p;
      try {
        p = welch_t_test(scores[reference], sc).p_value;
      } catch (const TeachError&) {
      }
      p_values[std::string(strategy_name(k))] = p;
    }
  }

  ReportOutputs o;
  o.summary = {{"reference", strategy_name(reference)},
               {"test", "welch two-tailed"},
               {"strategies", strategies},
               {"p_values", p_values},
               {"version", version_string()},
               {"results_dir", dir.string()}};
  const fs::path summary_path = dir / "summary.json";
  if (fs::exists(summary_path)) {
    const json prior = json::parse(read_file(summary_path), nullptr, false);
    if (!prior.is_discarded() && prior.contains("config")) o.summary["config"] = prior["config"];
  }

  std::ostringstream csv;
  csv << "strategy,bin,from_pct,to_pct,mean,count\n";
  const fs::path curves_path = dir / "curves.json";
  if (fs::exists(curves_path)) {
    const json curves = json::parse(read_file(curves_path), nullptr, false);
    if (curves.is_discarded() || !curves.contains("curves")) {
      throw TeachError(ErrorKind::InvalidInput, curves_path.string() + ": malformed");
    }
    for (StrategyKind k : kAllStrategies) {
      const std::string name(strategy_name(k));
      if (!curves["curves"].contains(name)) continue;
      for (const auto& bin : curves["curves"][name]) {
        csv << name << "," << bin.at("bin").get<int>() << "," << bin.at("from_pct").get<int>()
            << "," << bin.at("to_pct").get<int>() << "," << num(bin.at("mean").get<double>())
            << "," << bin.at("count").get<int>() << "\n";
      }
    }
  }
  o.curves_csv = csv.str();
  o.table = format_table(o.summary);
  return o;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interactive machine teaching: simulate, prepare, serve, report"};
  app.set_version_flag("--version", version_string());
  app.set_config("--config", "", "TOML file with option values ([simulate], [serve], ...)");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run simulated students over a strategy grid");
  add_source_options(simulate, sim.source, sim.flags, false);
  simulate->add_option("--strategies", sim.strategies, "Comma list of rnd,cc,wp,batch,eer")
      ->capture_default_str();
  simulate->add_option("--seeds", sim.seeds, "Trial indices, inclusive a..b")->capture_default_str();
  simulate->add_option("--base-seed", sim.base_seed, "Mixed into every per-trial seed")
      ->capture_default_str();
  simulate->add_option("--student", sim.student, "grf|noisy-grf|guesser")->capture_default_str();
  sim.profile.guess_noise = 0.1;
  simulate->add_option("--own-gamma", sim.profile.own_gamma, "Student length scale (0 = 2x teacher)")
      ->capture_default_str();
  simulate->add_option("--guess-noise", sim.profile.guess_noise, "Probability of a random answer")
      ->capture_default_str();
  simulate->add_option("--memory-limit", sim.memory_limit, "Student remembers the last m reveals (0 = all)")
      ->capture_default_str();
  simulate->add_option("--teach-rounds", sim.trial.teach_rounds, "0 = 3C")->capture_default_str();
  simulate->add_option("--test-rounds", sim.trial.test_rounds, "0 = 10C")->capture_default_str();
  simulate->add_option("--max-candidates", sim.trial.max_candidates, "Subsample wp/eer candidates (0 = all)")
      ->capture_default_str();
  simulate->add_option("--jobs", sim.jobs, "Parallel trials")->capture_default_str();
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--cache", sim.cache, "Artifact cache directory");
  simulate->add_option("--reference", sim.reference, "Strategy the p-values compare against")
      ->capture_default_str();

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Precompute PCA, graph and batch orders into a cache");
  add_source_options(prepare, prep.source, prep.flags, false);
  prepare->add_option("--cache", prep.cache, "Artifact cache directory");
  prepare->add_option("--batch-seeds", prep.batch_seeds, "Also precompute batch orders for these trials");
  prepare->add_option("--base-seed", prep.base_seed, "As in simulate")->capture_default_str();
  prepare->add_option("--teach-rounds", prep.teach_rounds, "0 = 3C")->capture_default_str();
  prepare->add_option("--test-rounds", prep.test_rounds, "0 = 10C")->capture_default_str();
  prepare->add_option("--write-dataset", prep.write_dataset,
                      "Write the dataset as manifest + feature file to this manifest path");

  ServeArgs srv;
  auto* serve = app.add_subcommand("serve", "Serve the teaching API");
  add_source_options(serve, srv.source, srv.flags, true);
  serve->add_option("--sessions", srv.sessions, "Event log directory")->capture_default_str();
  serve->add_option("--listen", srv.listen, "host:port (default: $TEACH_LISTEN or 127.0.0.1:8080)");
  serve->add_option("--static", srv.static_dir, "Serve the web client from this directory");
  serve->add_option("--cache", srv.cache, "Artifact cache directory");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Summarize a simulate output directory");
  report->add_option("dir", rep.dir, "Results directory")->required();
  report->add_option("--out", rep.out, "Where to write curves.csv (default: the results dir)");
  report->add_option("--reference", rep.reference, "Strategy the p-values compare against")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << version_string() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*simulate) return do_simulate(sim, out);
    if (*prepare) return do_prepare(prep, out);
    if (*serve) return do_serve(srv, out, err);
    if (*report) return do_report(rep, out);
  } catch (const TeachError& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::InvalidInput ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace teach::cli
