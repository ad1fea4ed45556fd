#include "teach/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

#include "teach/stats.hpp"

namespace teach {

namespace {

[[noreturn]] void invalid(const std::string& message) {
  throw TeachError(ErrorKind::InvalidInput, message);
}

Eigen::VectorXd unit_gaussian(int dims, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dims);
  for (int d = 0; d < dims; ++d) v(d) = normal(rng);
  return v;
}

/// Ids must not give the class away during testing.
std::string opaque_id(std::uint64_t seed, int index) {
  const std::uint64_t v =
      mix_seed(mix_seed(seed, tag_hash("mixture-id")), static_cast<std::uint64_t>(index));
  static const char* hex = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 0; i < 16; ++i) s[i] = hex[(v >> (60 - 4 * i)) & 15];
  return s;
}

}  // namespace

Dataset make_gaussian_mixture(const MixtureOptions& o) {
  if (o.classes < 2) invalid("mixture: classes must be >= 2");
  if (o.per_class < 1) invalid("mixture: per_class must be >= 1");
  if (o.dims < 1) invalid("mixture: dims must be >= 1");
  if (!(o.spread >= 0.0) || !(o.mode_separation >= 0.0)) {
    invalid("mixture: spread and mode_separation must be >= 0");
  }

  Rng means_rng = stream_rng(o.seed, "mixture-means");
  Rng noise_rng = stream_rng(o.seed, "mixture-noise");

  std::vector<Eigen::VectorXd> means(o.classes);
  for (int c = 0; c < o.classes; ++c) {
    if (o.dims >= o.classes) {
      // Scaled basis vectors: every pair of means is `spread` apart.
      means[c] = Eigen::VectorXd::Zero(o.dims);
      means[c](c) = o.spread / std::sqrt(2.0);
    } else {
      means[c] = unit_gaussian(o.dims, means_rng) * (o.spread / std::sqrt(2.0 * o.dims));
    }
  }
  std::vector<Eigen::VectorXd> mode_axis(o.classes);
  for (int c = 0; c < o.classes; ++c) {
    if (o.dims > o.classes) {
      mode_axis[c] = Eigen::VectorXd::Unit(o.dims, o.classes + c % (o.dims - o.classes));
    } else {
      mode_axis[c] = unit_gaussian(o.dims, means_rng).normalized();
    }
  }

  Dataset ds;
  const int n = o.classes * o.per_class;
  ds.features.resize(n, o.dims);
  ds.labels.resize(n);
  ds.manifest.name = o.name;
  ds.manifest.feature_file = o.name + ".f32";
  ds.manifest.feature_dim = o.dims;
  for (int c = 0; c < o.classes; ++c) ds.manifest.classes.push_back("class" + std::to_string(c));

  const int first_mode = (o.per_class + 1) / 2;
  for (int c = 0; c < o.classes; ++c) {
    for (int k = 0; k < o.per_class; ++k) {
      const int i = c * o.per_class + k;
      Eigen::VectorXd x = means[c] + unit_gaussian(o.dims, noise_rng);
      if (o.multimodal) {
        x += mode_axis[c] * (k < first_mode ? 0.5 : -0.5) * o.mode_separation;
      }
      ds.features.row(i) = x.transpose();
      ds.labels[i] = c;
      const std::string id = opaque_id(o.seed, i);
      ds.manifest.items.push_back({id, c, "synthetic:" + id});
    }
  }
  return ds;
}

MixtureOptions default_benchmark(std::uint64_t seed) {
  MixtureOptions o;
  o.classes = 4;
  o.per_class = 100;
  o.dims = 10;
  o.spread = 6.0;
  o.multimodal = true;
  o.mode_separation = 12.0;
  o.seed = seed;
  o.name = "benchmark";
  return o;
}

std::string_view student_kind_name(StudentKind kind) {
  switch (kind) {
    case StudentKind::GrfLearner: return "grf";
    case StudentKind::NoisyGrfLearner: return "noisy-grf";
    case StudentKind::RandomGuesser: return "guesser";
  }
  return "?";
}

StudentKind parse_student_kind(std::string_view name) {
  for (auto kind : {StudentKind::GrfLearner, StudentKind::NoisyGrfLearner,
                    StudentKind::RandomGuesser}) {
    if (student_kind_name(kind) == name) return kind;
  }
  invalid("unknown student kind '" + std::string(name) + "' (expected grf|noisy-grf|guesser)");
}

nlohmann::json profile_to_json(const StudentProfile& p) {
  nlohmann::json j = {{"kind", student_kind_name(p.kind)},
                      {"own_gamma", p.own_gamma},
                      {"guess_noise", p.guess_noise},
                      {"memory_limit", nullptr},
                      {"response_mean_ms", p.response_mean_ms},
                      {"response_sd_ms", p.response_sd_ms},
                      {"response_min_ms", p.response_min_ms}};
  if (p.memory_limit) j["memory_limit"] = *p.memory_limit;
  return j;
}

void validate_profile(const StudentProfile& p) {
  if (!(p.own_gamma >= 0.0)) invalid("student own_gamma must be >= 0");
  if (!(p.guess_noise >= 0.0 && p.guess_noise <= 1.0)) invalid("student guess_noise must lie in [0,1]");
  if (p.memory_limit && *p.memory_limit < 1) invalid("student memory_limit must be >= 1");
  if (!(p.response_sd_ms >= 0.0) || p.response_min_ms < 0) {
    invalid("student response time parameters must be >= 0");
  }
}

Eigen::MatrixXd student_beliefs(const SimilarityGraph& graph,
                                std::span<const std::pair<ItemIndex, ClassIndex>> labels,
                                int num_classes) {
  const int n = graph.size();
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, num_classes, 1.0 / num_classes);
  if (labels.empty()) return out;

  std::vector<ClassIndex> label_of(n, -1);
  for (const auto& [item, c] : labels) label_of.at(item) = c;
  std::vector<int> lab;
  std::vector<int> unl;
  for (int i = 0; i < n; ++i) (label_of[i] >= 0 ? lab : unl).push_back(i);

  Eigen::MatrixXd ft = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(lab.size()), num_classes);
  for (std::size_t j = 0; j < lab.size(); ++j) ft(j, label_of[lab[j]]) = 1.0;
  for (std::size_t j = 0; j < lab.size(); ++j) out.row(lab[j]) = ft.row(j);
  if (unl.empty()) return out;

  const Eigen::MatrixXd& w = graph.weights();
  Eigen::MatrixXd lap = -w(unl, unl);
  for (std::size_t p = 0; p < unl.size(); ++p) {
    lap(p, p) = graph.degrees()(unl[p]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(lap);
  if (llt.info() != Eigen::Success) {
    lap.diagonal().array() += kDiagonalJitter;
    llt.compute(lap);
  }
  if (llt.info() != Eigen::Success) {
    throw TeachError(ErrorKind::Numerical, "student graph: factorization failed");
  }
  const Eigen::MatrixXd fu = llt.solve(w(unl, lab) * ft);
  for (std::size_t p = 0; p < unl.size(); ++p) out.row(unl[p]) = fu.row(p);
  return out;
}

SimulatedStudent::SimulatedStudent(StudentProfile profile,
                                   std::shared_ptr<const SimilarityGraph> own_graph,
                                   int num_classes, std::uint64_t seed)
    : profile_(std::move(profile)),
      graph_(std::move(own_graph)),
      num_classes_(num_classes),
      rng_(seed) {
  validate_profile(profile_);
  if (num_classes_ < 2) invalid("student needs at least two classes");
  if (profile_.kind != StudentKind::RandomGuesser && !graph_) {
    invalid("a learning student needs its own graph");
  }
}

std::vector<std::pair<ItemIndex, ClassIndex>> SimulatedStudent::memory() const {
  if (!profile_.memory_limit || static_cast<int>(history_.size()) <= *profile_.memory_limit) {
    return history_;
  }
  return {history_.end() - *profile_.memory_limit, history_.end()};
}

const Eigen::MatrixXd& SimulatedStudent::beliefs() {
  if (stale_) {
    const auto remembered = memory();
    if (graph_) {
      beliefs_ = student_beliefs(*graph_, remembered, num_classes_);
    } else {
      beliefs_.resize(0, num_classes_);
    }
    stale_ = false;
  }
  return beliefs_;
}

ClassIndex SimulatedStudent::answer(ItemIndex item) {
  std::uniform_int_distribution<ClassIndex> uniform(0, num_classes_ - 1);
  std::bernoulli_distribution noisy(profile_.guess_noise);
  const bool guess = noisy(rng_);
  if (guess || history_.empty() || profile_.kind == StudentKind::RandomGuesser) {
    return uniform(rng_);
  }
  const Eigen::RowVectorXd row = beliefs().row(item);
  if (profile_.kind == StudentKind::NoisyGrfLearner) {
    std::discrete_distribution<ClassIndex> draw(row.data(), row.data() + row.size());
    return draw(rng_);
  }
  return argmax_class(row);
}

void SimulatedStudent::observe_reveal(ItemIndex item, ClassIndex true_class) {
  if (true_class < 0 || true_class >= num_classes_) invalid("reveal class out of range");
  history_.emplace_back(item, true_class);
  stale_ = true;
}

int SimulatedStudent::response_ms() {
  std::normal_distribution<double> draw(profile_.response_mean_ms, profile_.response_sd_ms);
  const double ms = std::round(draw(rng_));
  return std::max(profile_.response_min_ms, static_cast<int>(ms));
}

std::uint64_t trial_seed(std::uint64_t base_seed, StrategyKind strategy, std::uint64_t trial) {
  return mix_seed(mix_seed(base_seed, tag_hash(strategy_name(strategy))), trial);
}

std::shared_ptr<const SimilarityGraph> student_graph(const PreparedDataset& dataset,
                                                     const StudentProfile& profile) {
  validate_profile(profile);
  if (profile.kind == StudentKind::RandomGuesser) return nullptr;
  const double gamma = profile.own_gamma > 0.0 ? profile.own_gamma : 2.0 * dataset.options.gamma;
  return std::make_shared<const SimilarityGraph>(
      SimilarityGraph::build(dataset.features, gamma, dataset.options.neighbors));
}

TrialResult run_trial(std::shared_ptr<const PreparedDataset> dataset, StrategyKind strategy,
                      const StudentProfile& profile, std::uint64_t trial,
                      const TrialOptions& options,
                      std::shared_ptr<const SimilarityGraph> own_graph,
                      const ArtifactCache* cache) {
  if (!dataset) invalid("run_trial: null dataset");
  if (!own_graph) own_graph = student_graph(*dataset, profile);

  SessionConfig config;
  config.dataset = dataset->name();
  config.strategy = strategy;
  config.seed = trial_seed(options.base_seed, strategy, trial);
  config.teach_rounds = options.teach_rounds;
  config.test_rounds = options.test_rounds;
  config.max_candidates = options.max_candidates;

  SessionOptions session_options;
  session_options.cache = cache;
  session_options.clock = [] { return std::int64_t{0}; };
  Session session = Session::create(std::string(strategy_name(strategy)) + "-" +
                                        std::to_string(trial),
                                    config, dataset, std::move(session_options));

  SimulatedStudent student(profile, std::move(own_graph), dataset->num_classes(),
                           mix_seed(config.seed, tag_hash("student")));

  TrialResult result;
  result.strategy = strategy;
  result.seed = trial;
  result.dataset = dataset->name();
  while (session.phase() == Phase::Teaching) {
    const ShownItem shown = session.next_teaching_item();
    const ClassIndex guess = student.answer(shown.item);
    const ClassIndex truth =
        session.submit_teaching_answer(shown.item_id, guess, student.response_ms());
    student.observe_reveal(shown.item, truth);
    result.teaching_correct.push_back(guess == truth);
    result.teaching_items.push_back(shown.item);
  }
  while (session.phase() == Phase::Testing) {
    const ShownItem shown = session.next_test_item();
    const ClassIndex guess = student.answer(shown.item);
    session.submit_test_answer(shown.item_id, guess, student.response_ms());
  }
  const SessionResult final = session.finalize();
  result.score = final.score;
  result.mean_ms = final.mean_test_response_ms;
  result.rejected = final.rejected;
  return result;
}

std::vector<TrialResult> run_experiment(std::shared_ptr<const PreparedDataset> dataset,
                                        const ExperimentSpec& spec, const ArtifactCache* cache) {
  if (!dataset) invalid("run_experiment: null dataset");
  if (spec.strategies.empty()) invalid("run_experiment: no strategies");
  if (spec.seeds.empty()) invalid("run_experiment: no seeds");
  if (spec.jobs < 1) invalid("run_experiment: jobs must be >= 1");

  const auto own_graph = student_graph(*dataset, spec.student);
  const std::size_t total = spec.strategies.size() * spec.seeds.size();
  std::vector<TrialResult> results(total);
  std::vector<std::exception_ptr> errors(total);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t t = next++; t < total; t = next++) {
      const StrategyKind kind = spec.strategies[t / spec.seeds.size()];
      const std::uint64_t seed = spec.seeds[t % spec.seeds.size()];
      try {
        results[t] = run_trial(dataset, kind, spec.student, seed, spec.trial, own_graph, cache);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(spec.jobs, total));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

LearningCurve learning_curve(std::span<const TrialResult> results) {
  if (results.empty()) invalid("learning_curve: no results");
  const std::size_t rounds = results.front().teaching_correct.size();
  if (rounds == 0) invalid("learning_curve: no teaching rounds");
  LearningCurve curve;
  std::array<double, LearningCurve::kBins> hits{};
  for (const auto& r : results) {
    if (r.teaching_correct.size() != rounds) {
      invalid("learning_curve: mixed round counts (" + std::to_string(rounds) + " vs " +
              std::to_string(r.teaching_correct.size()) + ")");
    }
    for (std::size_t k = 0; k < rounds; ++k) {
      const std::size_t bin = LearningCurve::kBins * k / rounds;
      hits[bin] += r.teaching_correct[k] ? 1.0 : 0.0;
      ++curve.count[bin];
    }
  }
  for (int b = 0; b < LearningCurve::kBins; ++b) {
    curve.mean[b] = curve.count[b] > 0 ? hits[b] / curve.count[b] : 0.0;
  }
  return curve;
}

ComparisonReport compare_strategies(std::span<const TrialResult> results,
                                    StrategyKind reference) {
  if (results.empty()) invalid("compare_strategies: no results");
  std::map<StrategyKind, std::vector<TrialResult>> groups;
  for (const auto& r : results) groups[r.strategy].push_back(r);

  ComparisonReport report;
  report.reference = reference;
  std::map<StrategyKind, std::vector<double>> scores;
  for (const auto& [kind, trials] : groups) {
    auto& s = report.strategies[kind];
    auto& sc = scores[kind];
    double ms = 0.0;
    for (const auto& t : trials) {
      sc.push_back(t.score);
      ms += t.mean_ms;
    }
    s.trials = static_cast<int>(trials.size());
    s.mean_score = mean(sc);
    s.sd_score = sc.size() > 1 ? std::sqrt(sample_variance(sc)) : 0.0;
    s.mean_ms = ms / s.trials;
    s.curve = learning_curve(trials);
  }
  if (scores.count(reference)) {
    for (const auto& [kind, sc] : scores) {
      if (kind == reference) continue;
      std::optional<double> p;
      if (sc.size() >= 2 && scores[reference].size() >= 2) {
        try {
          p = welch_t_test(scores[reference], sc).p_value;
        } catch (const TeachError&) {
          p.reset();
        }
      }
      report.p_values[kind] = p;
    }
  }
  return report;
}

nlohmann::json curve_to_json(const LearningCurve& curve) {
  nlohmann::json bins = nlohmann::json::array();
  for (int b = 0; b < LearningCurve::kBins; ++b) {
    bins.push_back({{"bin", b},
                    {"from_pct", 10 * b},
                    {"to_pct", 10 * (b + 1)},
                    {"mean", curve.mean[b]},
                    {"count", curve.count[b]}});
  }
  return bins;
}

nlohmann::json report_to_json(const ComparisonReport& report) {
  nlohmann::json strategies = nlohmann::json::object();
  for (const auto& [kind, s] : report.strategies) {
    strategies[std::string(strategy_name(kind))] = {{"trials", s.trials},
                                                   {"mean_score", s.mean_score},
                                                   {"sd_score", s.sd_score},
                                                   {"mean_ms", s.mean_ms}};
  }
  nlohmann::json p = nlohmann::json::object();
  for (const auto& [kind, value] : report.p_values) {
    p[std::string(strategy_name(kind))] = value ? nlohmann::json(*value) : nlohmann::json();
  }
  return {{"reference", strategy_name(report.reference)},
          {"test", "welch two-tailed"},
          {"strategies", strategies},
          {"p_values", p}};
}

}  // namespace teach
