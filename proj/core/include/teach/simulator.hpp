#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "teach/pipeline.hpp"
#include "teach/session.hpp"

namespace teach {

struct MixtureOptions {
  int classes = 4;
  int per_class = 100;
  int dims = 10;
  /// Distance between any two class means.
  double spread = 6.0;
  /// Two sub-clusters per class instead of one.
  bool multimodal = false;
  /// Distance between the two sub-cluster means of a class.
  double mode_separation = 6.0;
  std::uint64_t seed = 0;
  std::string name = "mixture";
};

/// Seeded isotropic unit-variance Gaussian blobs. Class means sit on a
/// regular simplex when dims >= classes and are drawn at random otherwise.
/// Items are ordered by class; ids are 16 opaque hex digits and image URIs
/// use the "synthetic:" scheme, which the service renders from the features.
Dataset make_gaussian_mixture(const MixtureOptions& options);

/// The benchmark used for strategy comparisons: 4 classes, 100 per class,
/// 10 dimensions, class means 6 apart, two modes per class 12 apart.
MixtureOptions default_benchmark(std::uint64_t seed = 0);

enum class StudentKind { GrfLearner, NoisyGrfLearner, RandomGuesser };
std::string_view student_kind_name(StudentKind kind);
StudentKind parse_student_kind(std::string_view name);

struct StudentProfile {
  StudentKind kind = StudentKind::GrfLearner;
  /// The student's own RBF length scale; 0 means twice the teacher's.
  double own_gamma = 0.0;
  /// Probability of answering uniformly at random.
  double guess_noise = 0.0;
  /// Keep only the most recent reveals.
  std::optional<int> memory_limit;
  double response_mean_ms = 4500.0;
  double response_sd_ms = 1200.0;
  int response_min_ms = 500;
};

nlohmann::json profile_to_json(const StudentProfile& profile);
void validate_profile(const StudentProfile& profile);

/// A simulated participant. It sees the same reduced features as the
/// teacher but runs its own harmonic learner over the reveals it has been
/// shown. The GRF learner answers with the argmax of its beliefs, the noisy
/// one samples an answer from them, the guesser ignores them.
class SimulatedStudent {
 public:
  SimulatedStudent(StudentProfile profile, std::shared_ptr<const SimilarityGraph> own_graph,
                   int num_classes, std::uint64_t seed);

  const StudentProfile& profile() const { return profile_; }

  ClassIndex answer(ItemIndex item);
  /// The true class shown after a teaching answer.
  void observe_reveal(ItemIndex item, ClassIndex true_class);
  int response_ms();

  /// (item, class) pairs the student currently remembers, oldest first.
  std::vector<std::pair<ItemIndex, ClassIndex>> memory() const;
  /// N x C beliefs of the student's learner; uniform with nothing learned.
  const Eigen::MatrixXd& beliefs();

 private:
  StudentProfile profile_;
  std::shared_ptr<const SimilarityGraph> graph_;
  int num_classes_;
  Rng rng_;
  std::vector<std::pair<ItemIndex, ClassIndex>> history_;
  Eigen::MatrixXd beliefs_;
  bool stale_ = true;
};

/// Student-side harmonic beliefs for a set of remembered labels: one-hot on
/// the labeled items, harmonic elsewhere, uniform with no labels. Later
/// entries for the same item win.
Eigen::MatrixXd student_beliefs(const SimilarityGraph& graph,
                                std::span<const std::pair<ItemIndex, ClassIndex>> labels,
                                int num_classes);

struct TrialResult {
  StrategyKind strategy = StrategyKind::Random;
  std::uint64_t seed = 0;
  std::string dataset;
  double score = 0.0;
  double mean_ms = 0.0;
  std::vector<bool> teaching_correct;
  std::vector<ItemIndex> teaching_items;
  bool rejected = false;
};

/// Per-trial seed, independent of which other strategies are in the grid.
std::uint64_t trial_seed(std::uint64_t base_seed, StrategyKind strategy, std::uint64_t trial);

struct TrialOptions {
  int teach_rounds = 0;
  int test_rounds = 0;
  int max_candidates = 0;
  std::uint64_t base_seed = 0;
};

/// One complete session driven by a simulated student.
TrialResult run_trial(std::shared_ptr<const PreparedDataset> dataset, StrategyKind strategy,
                      const StudentProfile& profile, std::uint64_t trial,
                      const TrialOptions& options = {},
                      std::shared_ptr<const SimilarityGraph> student_graph = nullptr,
                      const ArtifactCache* cache = nullptr);

struct ExperimentSpec {
  std::vector<StrategyKind> strategies;
  std::vector<std::uint64_t> seeds;
  StudentProfile student;
  TrialOptions trial;
  int jobs = 1;
};

/// Every (strategy, seed) pair, in strategy-major grid order whatever the
/// number of jobs.
std::vector<TrialResult> run_experiment(std::shared_ptr<const PreparedDataset> dataset,
                                        const ExperimentSpec& spec,
                                        const ArtifactCache* cache = nullptr);

/// Graph the simulated students learn on.
std::shared_ptr<const SimilarityGraph> student_graph(const PreparedDataset& dataset,
                                                     const StudentProfile& profile);

struct LearningCurve {
  static constexpr int kBins = 10;
  std::array<double, kBins> mean{};
  std::array<int, kBins> count{};
};

/// Teaching-phase correctness per decile of progress; round r of T (from 0)
/// falls in bin floor(10 r / T). Empty bins have count 0 and mean 0.
LearningCurve learning_curve(std::span<const TrialResult> results);

struct StrategySummary {
  int trials = 0;
  double mean_score = 0.0;
  double sd_score = 0.0;
  double mean_ms = 0.0;
  LearningCurve curve;
};

struct ComparisonReport {
  StrategyKind reference = StrategyKind::Eer;
  std::map<StrategyKind, StrategySummary> strategies;
  /// Welch two-tailed p-value of each other strategy against the reference;
  /// empty when both samples have zero variance.
  std::map<StrategyKind, std::optional<double>> p_values;
};

ComparisonReport compare_strategies(std::span<const TrialResult> results,
                                    StrategyKind reference = StrategyKind::Eer);

nlohmann::json curve_to_json(const LearningCurve& curve);
nlohmann::json report_to_json(const ComparisonReport& report);

}  // namespace teach
