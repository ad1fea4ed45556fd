#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "teach/propagation.hpp"
#include "teach/seeding.hpp"

namespace teach {

enum class StrategyKind { Random, Centroids, WorstPredicted, Batch, Eer };

inline constexpr StrategyKind kAllStrategies[] = {
    StrategyKind::Random, StrategyKind::Centroids, StrategyKind::WorstPredicted,
    StrategyKind::Batch, StrategyKind::Eer};

/// "rnd", "cc", "wp", "batch", "eer".
std::string_view strategy_name(StrategyKind kind);
StrategyKind parse_strategy(std::string_view name);

struct TeachingPick {
  ItemIndex item_index = -1;
  /// Objective at the pick (lower is preferred) for wp and eer; 0 otherwise.
  double strategy_score = 0.0;
  int candidates_evaluated = 0;
};

/// Two objective values closer than this (relative to max(1, |v|)) are
/// treated as tied, and ties go to the lowest item index.
inline constexpr double kTieTolerance = 1e-9;

TeachingPick select_random(std::span<const ItemIndex> pool, Rng& rng);

/// For every class, the item closest (Euclidean) to the mean of all items of
/// that class. When `allowed` is non-empty only items with allowed[i] are
/// eligible; the class mean is still taken over the whole class.
std::vector<ItemIndex> compute_class_centroids(const FeatureMatrix& features,
                                               std::span<const ClassIndex> labels,
                                               int num_classes,
                                               const std::vector<bool>& allowed = {});

/// Uniform over the centroid items; the same item may come up again.
TeachingPick select_centroid(std::span<const ItemIndex> centroids, Rng& rng);

/// argmin over the pool of the believed probability of the true class.
TeachingPick select_worst_predicted(const BeliefMatrix& beliefs,
                                    std::span<const ClassIndex> truth,
                                    std::span<const ItemIndex> pool);

/// Sum over D_u \ {k} of (1 - belief in the true class) after hypothetically
/// teaching k with its true label. Evaluated through hypothetical_update().
double eer_objective(const HarmonicSolverState& state, std::span<const ClassIndex> truth,
                     ItemIndex k);

/// eer_objective() for every item of `candidates` at once. Uses
///   obj(k) = B - [(GY)_{k,y_k} - <F_u(k,.), (GY)_{k,.}>] / G_kk
/// where B is the current summed error and Y the one-hot truth of D_u,
/// which is the same rank-one update folded into one G*Y product.
std::vector<double> eer_objectives(const HarmonicSolverState& state,
                                   std::span<const ClassIndex> truth,
                                   std::span<const ItemIndex> candidates);

TeachingPick select_eer(const HarmonicSolverState& state, std::span<const ClassIndex> truth,
                        std::span<const ItemIndex> pool);

/// Offline EER ordering that assumes every shown item is answered correctly.
/// Picks come from `pool`; the error sum runs over every unlabeled node.
std::vector<ItemIndex> compute_batch_order(std::shared_ptr<const SimilarityGraph> graph,
                                           std::span<const ClassIndex> truth, int num_classes,
                                           std::span<const ItemIndex> pool, int length);

/// Everything a strategy may need for one pick. Unused members stay empty.
struct StrategyContext {
  std::span<const ItemIndex> pool;
  const HarmonicSolverState* state = nullptr;
  std::span<const ClassIndex> truth;
  std::span<const ItemIndex> centroids;
  std::span<const ItemIndex> batch_order;
  std::size_t batch_cursor = 0;
  Rng* rng = nullptr;
  /// Uniform subsample of the pool for wp/eer when the pool is larger.
  std::optional<int> max_candidates;
};

TeachingPick next_pick(StrategyKind kind, const StrategyContext& context);

}  // namespace teach
