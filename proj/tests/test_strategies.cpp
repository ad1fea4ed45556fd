#include <map>
#include <set>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "teach/strategies.hpp"

using namespace teach;
using namespace teach::testing;

namespace {

std::vector<int> random_truth(int n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::vector<int> truth(n);
  for (int& t : truth) t = cls(rng);
  // Every class present.
  for (int c = 0; c < classes && c < n; ++c) truth[c] = c;
  return truth;
}

std::vector<int> all_items(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST(StrategyNames, RoundTrip) {
  for (StrategyKind k : kAllStrategies) EXPECT_EQ(parse_strategy(strategy_name(k)), k);
  EXPECT_EQ(strategy_name(StrategyKind::Eer), "eer");
  EXPECT_EQ(strategy_name(StrategyKind::Centroids), "cc");
  EXPECT_THROW(parse_strategy("greedy"), TeachError);
}

TEST(Random, CoversThePoolUniformly) {
  const std::vector<int> pool = {3, 8, 11, 20};
  Rng rng(42);
  std::map<int, int> counts;
  const int draws = 40000;
  for (int i = 0; i < draws; ++i) ++counts[select_random(pool, rng).item_index];
  ASSERT_EQ(counts.size(), 4u);
  double chi2 = 0.0;
  for (auto [item, count] : counts) {
    const double expected = draws / 4.0;
    chi2 += (count - expected) * (count - expected) / expected;
  }
  // 3 degrees of freedom, 0.999 quantile is 16.27.
  EXPECT_LT(chi2, 16.27);
  EXPECT_THROW(select_random(std::vector<int>{}, rng), TeachError);
}

TEST(Centroids, MatchBruteForceNearestToMean) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  const int n = 60;
  FeatureMatrix x(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) x(i, j) = normal(rng);
  const std::vector<int> truth = random_truth(n, 3, rng);
  const auto centroids = compute_class_centroids(x, truth, 3);
  for (int c = 0; c < 3; ++c) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(3);
    int count = 0;
    for (int i = 0; i < n; ++i)
      if (truth[i] == c) {
        mean += x.row(i);
        ++count;
      }
    mean /= count;
    int best = -1;
    double best_d = 1e300;
    for (int i = 0; i < n; ++i) {
      if (truth[i] != c) continue;
      const double d = (x.row(i) - mean).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    EXPECT_EQ(centroids[c], best);
  }
}

TEST(Centroids, MaskKeepsTheMeanButRestrictsCandidates) {
  FeatureMatrix x(5, 1);
  x << 0, 1, 2, 10, 11;
  const std::vector<int> truth = {0, 0, 0, 1, 1};
  EXPECT_EQ(compute_class_centroids(x, truth, 2), (std::vector<int>{1, 3}));
  std::vector<bool> allowed = {true, false, true, true, true};
  // Mean of class 0 is still 1: items 0 and 2 tie, the first one wins.
  EXPECT_EQ(compute_class_centroids(x, truth, 2, allowed)[0], 0);
  allowed = {false, false, false, true, true};
  EXPECT_THROW(compute_class_centroids(x, truth, 2, allowed), TeachError);
}

TEST(Centroids, SelectionIsUniformOverCentroids) {
  const std::vector<int> centroids = {4, 9, 17};
  Rng rng(5);
  std::map<int, int> counts;
  for (int i = 0; i < 3000; ++i) ++counts[select_centroid(centroids, rng).item_index];
  EXPECT_EQ(counts.size(), 3u);
  for (auto [item, count] : counts) EXPECT_NEAR(count, 1000, 150);
}

TEST(WorstPredicted, PicksLowestTrueClassBelief) {
  BeliefMatrix f(4, 2);
  f << 0.9, 0.1, 0.3, 0.7, 0.6, 0.4, 0.2, 0.8;
  const std::vector<int> truth = {0, 1, 0, 1};
  // True-class beliefs: 0.9, 0.7, 0.6, 0.8.
  auto pick = select_worst_predicted(f, truth, std::vector<int>{0, 1, 2, 3});
  EXPECT_EQ(pick.item_index, 2);
  EXPECT_DOUBLE_EQ(pick.strategy_score, 0.6);
  pick = select_worst_predicted(f, truth, std::vector<int>{0, 1, 3});
  EXPECT_EQ(pick.item_index, 1);
}

TEST(WorstPredicted, TiesGoToLowestItemIndex) {
  BeliefMatrix f(4, 2);
  f << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5 + 1e-12, 0.5;
  const std::vector<int> truth = {0, 0, 0, 0};
  const auto pick = select_worst_predicted(f, truth, std::vector<int>{3, 2, 1});
  EXPECT_EQ(pick.item_index, 1);
}

TEST(Eer, BatchedMatchesPerCandidateMatchesResolve) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 8 + 3 * trial;
    const int classes = 2 + trial % 3;
    const auto g = random_graph(n, 0.3, rng);
    const std::vector<int> truth = random_truth(n, classes, rng);
    std::vector<int> labeled = {0, n - 1};
    std::vector<int> answers = {truth[0], (truth[n - 1] + 1) % classes};  // one wrong answer
    const auto state = harmonic_solve(g, labeled, answers, classes);
    const auto& u = state.partition().unlabeled();
    const auto batched = eer_objectives(state, truth, u);
    for (std::size_t j = 0; j < u.size(); ++j) {
      const double single = eer_objective(state, truth, u[j]);
      const double oracle = brute_force_eer(g->weights(), labeled, answers, truth, u[j], classes);
      ASSERT_NEAR(batched[j], oracle, 1e-7) << "trial " << trial << " k " << u[j];
      ASSERT_NEAR(single, oracle, 1e-7);
    }
  }
}

TEST(Eer, FirstRoundClosedForm) {
  std::mt19937_64 rng(3);
  const int n = 20;
  HarmonicSolverState state(random_graph(n, 0.3, rng), 3);
  const std::vector<int> truth = random_truth(n, 3, rng);
  std::array<int, 3> per_class{};
  for (int t : truth) ++per_class[t];
  const auto values = eer_objectives(state, truth, all_items(n));
  for (int k = 0; k < n; ++k) {
    EXPECT_EQ(values[k], n - per_class[truth[k]]);
    EXPECT_NEAR(eer_objective(state, truth, k), values[k], 1e-12);
    EXPECT_NEAR(brute_force_eer(state.graph().weights(), {}, {}, truth, k, 3), values[k], 1e-9);
  }
  // Picks the lowest-index item of the largest class.
  const auto pick = select_eer(state, truth, all_items(n));
  const int largest = *std::max_element(per_class.begin(), per_class.end());
  int first_of_largest = 0;
  while (per_class[truth[first_of_largest]] != largest) ++first_of_largest;
  EXPECT_EQ(pick.item_index, first_of_largest);
}

TEST(Eer, PickIsTheBruteForceArgmin) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 15;
    const auto g = random_graph(n, 0.4, rng);
    const std::vector<int> truth = random_truth(n, 2, rng);
    const auto state = harmonic_solve(g, {1}, {truth[1]}, 2);
    const auto& u = state.partition().unlabeled();
    const auto pick = select_eer(state, truth, u);
    double best = 1e300;
    for (int k : u) best = std::min(best, brute_force_eer(g->weights(), {1}, {truth[1]}, truth, k, 2));
    const double picked = brute_force_eer(g->weights(), {1}, {truth[1]}, truth, pick.item_index, 2);
    EXPECT_NEAR(picked, best, 1e-7);
    EXPECT_NEAR(pick.strategy_score, picked, 1e-7);
    EXPECT_EQ(pick.candidates_evaluated, static_cast<int>(u.size()));
  }
}

TEST(Eer, RejectsLabeledCandidates) {
  std::mt19937_64 rng(4);
  const auto state = harmonic_solve(random_graph(6, 0.5, rng), {2}, {0}, 2);
  const std::vector<int> truth = {0, 1, 0, 1, 0, 1};
  EXPECT_THROW(eer_objectives(state, truth, std::vector<int>{2}), TeachError);
  EXPECT_THROW(eer_objectives(state, std::vector<int>{0, 1}, std::vector<int>{3}), TeachError);
}

TEST(Batch, MatchesGreedyBruteForce) {
  std::mt19937_64 rng(55);
  const int n = 14;
  const auto g = random_graph(n, 0.35, rng);
  const std::vector<int> truth = random_truth(n, 3, rng);
  const std::vector<int> pool = {0, 2, 3, 5, 7, 8, 10, 11, 13};
  const auto order = compute_batch_order(g, truth, 3, pool, 5);
  ASSERT_EQ(order.size(), 5u);

  std::vector<int> labeled, answers;
  std::vector<int> remaining = pool;
  for (int r = 0; r < 5; ++r) {
    int best_k = -1;
    double best = 1e300;
    for (int k : remaining) {
      const double v = brute_force_eer(g->weights(), labeled, answers, truth, k, 3);
      if (v < best - 1e-9 * std::max(1.0, std::abs(best))) {
        best = v;
        best_k = k;
      }
    }
    EXPECT_EQ(order[r], best_k) << "round " << r;
    labeled.push_back(order[r]);
    answers.push_back(truth[order[r]]);
    remaining.erase(std::find(remaining.begin(), remaining.end(), order[r]));
  }
  EXPECT_THROW(compute_batch_order(g, truth, 3, pool, 10), TeachError);
}

TEST(NextPick, DispatchAndMissingContext) {
  std::mt19937_64 gen(8);
  const int n = 12;
  const auto g = random_graph(n, 0.4, gen);
  const std::vector<int> truth = random_truth(n, 2, gen);
  const auto state = harmonic_solve(g, {0}, {truth[0]}, 2);
  const std::vector<int> pool = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const std::vector<int> centroids = {4, 6};
  const std::vector<int> batch = {5, 9, 2};
  Rng rng(1);

  StrategyContext ctx;
  ctx.pool = pool;
  EXPECT_THROW(next_pick(StrategyKind::Random, ctx), TeachError);
  EXPECT_THROW(next_pick(StrategyKind::Eer, ctx), TeachError);
  EXPECT_THROW(next_pick(StrategyKind::Batch, ctx), TeachError);
  ctx.rng = &rng;
  EXPECT_THROW(next_pick(StrategyKind::Centroids, ctx), TeachError);

  ctx.state = &state;
  ctx.truth = truth;
  ctx.centroids = centroids;
  ctx.batch_order = batch;
  ctx.batch_cursor = 1;
  EXPECT_EQ(next_pick(StrategyKind::Batch, ctx).item_index, 9);
  EXPECT_EQ(next_pick(StrategyKind::Eer, ctx).item_index, select_eer(state, truth, pool).item_index);
  EXPECT_EQ(next_pick(StrategyKind::WorstPredicted, ctx).item_index,
            select_worst_predicted(state.beliefs(), truth, pool).item_index);
  const int c = next_pick(StrategyKind::Centroids, ctx).item_index;
  EXPECT_TRUE(c == 4 || c == 6);
  ctx.batch_cursor = 3;
  EXPECT_THROW(next_pick(StrategyKind::Batch, ctx), TeachError);
}

TEST(NextPick, CandidateSubsampleIsASubsetOfThePool) {
  std::mt19937_64 gen(9);
  const int n = 40;
  const auto g = random_graph(n, 0.3, gen);
  const std::vector<int> truth = random_truth(n, 2, gen);
  const auto state = harmonic_solve(g, {0}, {truth[0]}, 2);
  std::vector<int> pool = all_items(n);
  pool.erase(pool.begin());
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    StrategyContext ctx;
    ctx.pool = pool;
    ctx.state = &state;
    ctx.truth = truth;
    ctx.rng = &rng;
    ctx.max_candidates = 5;
    const auto pick = next_pick(StrategyKind::Eer, ctx);
    EXPECT_EQ(pick.candidates_evaluated, 5);
    EXPECT_NE(std::find(pool.begin(), pool.end(), pick.item_index), pool.end());
    Rng again(s);
    ctx.rng = &again;
    EXPECT_EQ(next_pick(StrategyKind::Eer, ctx).item_index, pick.item_index);
  }
}

namespace {

/// Points of `clusters` tight blobs, `per` points each, centers 10 apart on
/// a line; class = blob.
struct Blobs {
  FeatureMatrix x;
  std::vector<int> truth;
};

Blobs blobs(int clusters, int per, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.3);
  Blobs b;
  b.x.resize(clusters * per, 2);
  for (int c = 0; c < clusters; ++c) {
    for (int k = 0; k < per; ++k) {
      b.x.row(c * per + k) << 10.0 * c + jitter(rng), jitter(rng);
      b.truth.push_back(c);
    }
  }
  return b;
}

std::shared_ptr<const SimilarityGraph> rbf(const FeatureMatrix& x, double gamma) {
  return std::make_shared<const SimilarityGraph>(SimilarityGraph::build(x, gamma));
}

}  // namespace

TEST(Random, SinglePoolAndDeterminism) {
  Rng rng(1);
  EXPECT_EQ(select_random(std::vector<int>{7}, rng).item_index, 7);
  const std::vector<int> pool = all_items(10);
  Rng a(42), b(42);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(select_random(pool, a).item_index, select_random(pool, b).item_index);
}

TEST(Random, FrequenciesWithinFiveSigma) {
  const std::vector<int> pool = {0, 1, 2, 3};
  Rng rng(2);
  std::array<int, 4> counts{};
  for (int i = 0; i < 10000; ++i) ++counts[select_random(pool, rng).item_index];
  const double sigma = std::sqrt(10000 * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - 2500.0), 5 * sigma);
}

TEST(Centroids, TrivialShapes) {
  FeatureMatrix x(4, 1);
  x << -1, 0, 1, 7;
  const std::vector<int> truth = {0, 0, 0, 1};
  EXPECT_EQ(compute_class_centroids(x, truth, 2), (std::vector<int>{1, 3}));
  Rng rng(3);
  EXPECT_EQ(select_centroid(std::vector<int>{5}, rng).item_index, 5);
}

TEST(WorstPredicted, UniformBeliefsPickLowestIndex) {
  BeliefMatrix f = BeliefMatrix::Constant(6, 3, 1.0 / 3.0);
  const std::vector<int> truth = {0, 1, 2, 0, 1, 2};
  EXPECT_EQ(select_worst_predicted(f, truth, std::vector<int>{5, 2, 4}).item_index, 2);
}

TEST(WorstPredicted, ProposesTheOutlier) {
  Blobs b = blobs(2, 6, 4);
  const int outlier = static_cast<int>(b.x.rows());
  b.x.conservativeResize(outlier + 1, 2);
  b.x.row(outlier) << 5.0, 20.0;
  b.truth.push_back(0);
  const auto g = rbf(b.x, 0.01);
  const auto state = harmonic_solve(g, {0, 6}, {0, 1}, 2);
  const auto& u = state.partition().unlabeled();
  EXPECT_EQ(select_worst_predicted(state.beliefs(), b.truth, u).item_index, outlier);
}

TEST(WorstPredicted, GlobalArgminOnSeededInstances) {
  std::mt19937_64 rng(404);
  for (int seed = 0; seed < 50; ++seed) {
    const int n = 20 + seed;
    const auto g = random_graph(n, 0.2, rng);
    const std::vector<int> truth = random_truth(n, 3, rng);
    const auto state = harmonic_solve(g, {0, 1, 2}, {truth[0], truth[2], truth[1]}, 3);
    const auto f = state.beliefs();
    const auto& u = state.partition().unlabeled();
    const auto pick = select_worst_predicted(f, truth, u);
    for (int i : u) ASSERT_LE(f(pick.item_index, truth[pick.item_index]), f(i, truth[i]));
  }
}

TEST(Eer, TrivialObjectives) {
  std::mt19937_64 rng(5);
  const auto g = random_graph(4, 0.6, rng);
  const std::vector<int> truth = {0, 1, 0, 1};
  // Only k left unlabeled: empty sum.
  const auto last = harmonic_solve(g, {0, 1, 2}, {0, 1, 0}, 2);
  EXPECT_EQ(eer_objective(last, truth, 3), 0.0);
  EXPECT_EQ(eer_objectives(last, truth, std::vector<int>{3})[0], 0.0);
  // One class everywhere and taught: nothing left to fix.
  const std::vector<int> same = {1, 1, 1, 1};
  const auto done = harmonic_solve(g, {0}, {1}, 2);
  for (int k : {1, 2, 3}) EXPECT_NEAR(eer_objective(done, same, k), 0.0, 1e-9);
}

TEST(Eer, ObjectiveIsBoundedByRemainingItems) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 10 + trial;
    const auto g = random_graph(n, 0.3, rng);
    const std::vector<int> truth = random_truth(n, 3, rng);
    const auto state = harmonic_solve(g, {0, 1}, {2, 0}, 3);
    const auto& u = state.partition().unlabeled();
    for (double v : eer_objectives(state, truth, u)) {
      EXPECT_GE(v, -1e-9);
      EXPECT_LE(v, static_cast<double>(u.size() - 1) + 1e-9);
    }
  }
}

TEST(Eer, PicksTheUntaughtCluster) {
  const Blobs b = blobs(2, 8, 7);
  const auto g = rbf(b.x, 0.1);
  const auto state = harmonic_solve(g, {2}, {0}, 2);
  const auto pick = select_eer(state, b.truth, state.partition().unlabeled());
  EXPECT_EQ(b.truth[pick.item_index], 1);
}

TEST(Eer, SymmetricOptimaTieToLowerIndex) {
  // Path 0-1-2-3-4 with the middle taught: items 0/4 and 1/3 mirror each other.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(5, 5);
  for (int i = 0; i + 1 < 5; ++i) w(i, i + 1) = w(i + 1, i) = 0.5;
  const auto g = std::make_shared<const SimilarityGraph>(SimilarityGraph::from_weights(w));
  const std::vector<int> truth = {1, 0, 0, 0, 1};
  const auto state = harmonic_solve(g, {2}, {0}, 2);
  const auto values = eer_objectives(state, truth, std::vector<int>{0, 1, 3, 4});
  EXPECT_NEAR(values[0], values[3], 1e-12);
  const auto pick = select_eer(state, truth, std::vector<int>{4, 3, 1, 0});
  EXPECT_EQ(pick.item_index, 0);
}

TEST(Eer, PermutationInvariance) {
  std::mt19937_64 rng(88);
  const int n = 18;
  const Eigen::MatrixXd w = random_weights(n, 0.3, rng);
  const std::vector<int> truth = random_truth(n, 3, rng);
  std::vector<int> perm = all_items(n);  // new index of old item i is perm[i]
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd wp(n, n);
  std::vector<int> truth_p(n);
  for (int i = 0; i < n; ++i) {
    truth_p[perm[i]] = truth[i];
    for (int j = 0; j < n; ++j) wp(perm[i], perm[j]) = w(i, j);
  }
  const auto g = std::make_shared<const SimilarityGraph>(SimilarityGraph::from_weights(w));
  const auto gp = std::make_shared<const SimilarityGraph>(SimilarityGraph::from_weights(wp));
  const std::vector<int> labeled = {3, 9};
  const std::vector<int> answers = {truth[3], truth[9]};
  const auto s = harmonic_solve(g, labeled, answers, 3);
  const auto sp = harmonic_solve(gp, {perm[3], perm[9]}, answers, 3);
  for (int k : s.partition().unlabeled()) {
    EXPECT_NEAR(eer_objective(s, truth, k), eer_objective(sp, truth_p, perm[k]), 1e-9);
  }
}

TEST(Eer, WrongAnswerDrawsAttentionToThatRegion) {
  // One correct answer per class plus one wrong answer: the model now
  // misclassifies the region around the wrong one, and EER goes there.
  const auto prepared = prepared_mixture(small_mixture(3, 16, 21));
  const auto labels = prepared->labels();
  int misclassified_picks = 0;
  int trials = 0;
  for (int first = 1; first < prepared->size(); first += 5) {
    if (first % 16 == 0) continue;
    HarmonicSolverState state(prepared->graph, 3);
    for (int c = 0; c < 3; ++c) state.refresh_after_answer(16 * c, c);
    state.refresh_after_answer(first, (labels[first] + 1) % 3);
    const auto pick = select_eer(state, labels, state.partition().unlabeled());
    misclassified_picks += predict_class(state.beliefs(), pick.item_index) != labels[pick.item_index];
    ++trials;
  }
  EXPECT_EQ(misclassified_picks, trials);
}

TEST(Batch, LengthOneIsFirstRoundEer) {
  std::mt19937_64 rng(10);
  const auto g = random_graph(12, 0.4, rng);
  const std::vector<int> truth = random_truth(12, 3, rng);
  HarmonicSolverState empty(g, 3);
  const auto order = compute_batch_order(g, truth, 3, all_items(12), 1);
  EXPECT_EQ(order, std::vector<int>{select_eer(empty, truth, all_items(12)).item_index});
  EXPECT_EQ(compute_batch_order(g, truth, 3, all_items(12), 6),
            compute_batch_order(g, truth, 3, all_items(12), 6));
}

TEST(Batch, FirstPicksCoverEveryCluster) {
  const Blobs b = blobs(3, 6, 12);
  const auto order = compute_batch_order(rbf(b.x, 0.1), b.truth, 3, all_items(18), 3);
  std::set<int> clusters;
  for (int i : order) clusters.insert(b.truth[i]);
  EXPECT_EQ(clusters.size(), 3u);
}
