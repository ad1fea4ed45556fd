#include "teach/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace teach {

namespace {

[[noreturn]] void invalid(const std::string& message) {
  throw TeachError(ErrorKind::InvalidInput, message);
}

/// Lowest item whose value is within tolerance of the minimum.
std::size_t argmin_lowest_item(std::span<const double> values, std::span<const ItemIndex> items) {
  const double best = *std::min_element(values.begin(), values.end());
  const double limit = best + kTieTolerance * std::max(1.0, std::abs(best));
  std::size_t chosen = values.size();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] <= limit && (chosen == values.size() || items[i] < items[chosen])) chosen = i;
  }
  return chosen;
}

void check_truth(std::span<const ClassIndex> truth, int n) {
  if (static_cast<int>(truth.size()) != n) {
    invalid("ground truth has " + std::to_string(truth.size()) + " labels for " +
            std::to_string(n) + " items");
  }
}

}  // namespace

std::string_view strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Random: return "rnd";
    case StrategyKind::Centroids: return "cc";
    case StrategyKind::WorstPredicted: return "wp";
    case StrategyKind::Batch: return "batch";
    case StrategyKind::Eer: return "eer";
  }
  return "?";
}

StrategyKind parse_strategy(std::string_view name) {
  for (StrategyKind kind : kAllStrategies) {
    if (strategy_name(kind) == name) return kind;
  }
  invalid("unknown strategy '" + std::string(name) + "' (expected rnd|cc|wp|batch|eer)");
}

TeachingPick select_random(std::span<const ItemIndex> pool, Rng& rng) {
  if (pool.empty()) invalid("select_random: empty pool");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return {pool[pick(rng)], 0.0, static_cast<int>(pool.size())};
}

std::vector<ItemIndex> compute_class_centroids(const FeatureMatrix& features,
                                               std::span<const ClassIndex> labels,
                                               int num_classes,
                                               const std::vector<bool>& allowed) {
  const auto n = features.rows();
  check_truth(labels, static_cast<int>(n));
  if (!allowed.empty() && static_cast<Eigen::Index>(allowed.size()) != n) {
    invalid("compute_class_centroids: mask size mismatch");
  }
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(num_classes, features.cols());
  std::vector<int> counts(num_classes, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    sums.row(labels[i]) += features.row(i);
    ++counts[labels[i]];
  }
  std::vector<ItemIndex> centroids(num_classes, -1);
  std::vector<double> best(num_classes, std::numeric_limits<double>::infinity());
  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) invalid("compute_class_centroids: class " + std::to_string(c) + " is empty");
    sums.row(c) /= counts[c];
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!allowed.empty() && !allowed[i]) continue;
    const ClassIndex c = labels[i];
    const double d = (features.row(i) - sums.row(c)).squaredNorm();
    if (d < best[c]) {
      best[c] = d;
      centroids[c] = static_cast<ItemIndex>(i);
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    if (centroids[c] < 0) {
      invalid("compute_class_centroids: class " + std::to_string(c) + " has no eligible item");
    }
  }
  return centroids;
}

TeachingPick select_centroid(std::span<const ItemIndex> centroids, Rng& rng) {
  if (centroids.empty()) invalid("select_centroid: no centroids");
  std::uniform_int_distribution<std::size_t> pick(0, centroids.size() - 1);
  return {centroids[pick(rng)], 0.0, static_cast<int>(centroids.size())};
}

TeachingPick select_worst_predicted(const BeliefMatrix& beliefs,
                                    std::span<const ClassIndex> truth,
                                    std::span<const ItemIndex> pool) {
  if (pool.empty()) invalid("select_worst_predicted: empty pool");
  check_truth(truth, static_cast<int>(beliefs.rows()));
  std::vector<double> values(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) values[i] = beliefs(pool[i], truth[pool[i]]);
  const std::size_t at = argmin_lowest_item(values, pool);
  return {pool[at], values[at], static_cast<int>(pool.size())};
}

double eer_objective(const HarmonicSolverState& state, std::span<const ClassIndex> truth,
                     ItemIndex k) {
  check_truth(truth, state.graph().size());
  const Eigen::MatrixXd updated = state.hypothetical_update(k, truth[k]);
  const auto& u = state.partition().unlabeled();
  double total = 0.0;
  Eigen::Index row = 0;
  for (ItemIndex i : u) {
    if (i == k) continue;
    total += 1.0 - updated(row++, truth[i]);
  }
  return total;
}

std::vector<double> eer_objectives(const HarmonicSolverState& state,
                                   std::span<const ClassIndex> truth,
                                   std::span<const ItemIndex> candidates) {
  check_truth(truth, state.graph().size());
  const auto& part = state.partition();
  const auto& u = part.unlabeled();
  const auto n = static_cast<Eigen::Index>(u.size());
  const int num_classes = state.num_classes();
  for (ItemIndex k : candidates) {
    if (k < 0 || k >= part.size() || part.unlabeled_position(k) < 0) {
      invalid("eer: candidate " + std::to_string(k) + " is not unlabeled");
    }
  }

  std::vector<double> out(candidates.size());
  if (!state.has_labels()) {
    // One labeled node pins its component; see hypothetical_update().
    const auto& comp = state.graph().components();
    std::vector<int> per_class(num_classes, 0);
    for (ItemIndex i : u) ++per_class[truth[i]];
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const ItemIndex k = candidates[j];
      for (ItemIndex i : u) {
        if (comp[i] != comp[k]) {
          throw TeachError(ErrorKind::Numerical,
                           "disconnected unlabeled node " + std::to_string(i) +
                               " (no path to any labeled item)");
        }
      }
      out[j] = static_cast<double>(n - per_class[truth[k]]);
    }
    return out;
  }

  const Eigen::MatrixXd& f = state.unlabeled_beliefs();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, num_classes);
  double total_error = 0.0;
  for (Eigen::Index p = 0; p < n; ++p) {
    y(p, truth[u[p]]) = 1.0;
    total_error += 1.0 - f(p, truth[u[p]]);
  }
  const Eigen::MatrixXd gy = state.inverse_times(y);
  const Eigen::VectorXd& gdiag = state.inverse_diagonal();

  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const int p = part.unlabeled_position(candidates[j]);
    const double gkk = gdiag(p);
    if (!(gkk > 0.0)) {
      throw TeachError(ErrorKind::Numerical, "internal consistency: G_kk <= 0 for item " +
                                                 std::to_string(candidates[j]));
    }
    const double gain = gy(p, truth[candidates[j]]) - f.row(p).dot(gy.row(p));
    out[j] = total_error - gain / gkk;
  }
  return out;
}

TeachingPick select_eer(const HarmonicSolverState& state, std::span<const ClassIndex> truth,
                        std::span<const ItemIndex> pool) {
  if (pool.empty()) invalid("select_eer: empty pool");
  const std::vector<double> values = eer_objectives(state, truth, pool);
  const std::size_t at = argmin_lowest_item(values, pool);
  return {pool[at], values[at], static_cast<int>(pool.size())};
}

std::vector<ItemIndex> compute_batch_order(std::shared_ptr<const SimilarityGraph> graph,
                                           std::span<const ClassIndex> truth, int num_classes,
                                           std::span<const ItemIndex> pool, int length) {
  if (length < 0 || length > static_cast<int>(pool.size())) {
    invalid("compute_batch_order: length " + std::to_string(length) + " exceeds pool of " +
            std::to_string(pool.size()));
  }
  HarmonicSolverState state(std::move(graph), num_classes);
  std::vector<ItemIndex> remaining(pool.begin(), pool.end());
  std::vector<ItemIndex> order;
  order.reserve(length);
  for (int r = 0; r < length; ++r) {
    const ItemIndex pick = select_eer(state, truth, remaining).item_index;
    order.push_back(pick);
    state.refresh_after_answer(pick, truth[pick]);
    remaining.erase(std::find(remaining.begin(), remaining.end(), pick));
  }
  return order;
}

TeachingPick next_pick(StrategyKind kind, const StrategyContext& ctx) {
  auto candidates = [&]() -> std::vector<ItemIndex> {
    if (ctx.pool.empty()) invalid(std::string(strategy_name(kind)) + ": empty pool");
    std::vector<ItemIndex> pool(ctx.pool.begin(), ctx.pool.end());
    if (ctx.max_candidates && *ctx.max_candidates > 0 &&
        static_cast<int>(pool.size()) > *ctx.max_candidates) {
      if (!ctx.rng) invalid("missing context: rng (needed to subsample candidates)");
      std::vector<ItemIndex> sub;
      sub.reserve(*ctx.max_candidates);
      std::sample(pool.begin(), pool.end(), std::back_inserter(sub), *ctx.max_candidates,
                  *ctx.rng);
      return sub;
    }
    return pool;
  };

  switch (kind) {
    case StrategyKind::Random:
      if (!ctx.rng) invalid("missing context: rng");
      return select_random(ctx.pool, *ctx.rng);
    case StrategyKind::Centroids:
      if (!ctx.rng) invalid("missing context: rng");
      if (ctx.centroids.empty()) invalid("missing context: centroids");
      return select_centroid(ctx.centroids, *ctx.rng);
    case StrategyKind::WorstPredicted: {
      if (!ctx.state) invalid("missing context: solver state");
      const auto pool = candidates();
      return select_worst_predicted(ctx.state->beliefs(), ctx.truth, pool);
    }
    case StrategyKind::Batch:
      if (ctx.batch_order.empty()) invalid("missing context: batch order");
      if (ctx.batch_cursor >= ctx.batch_order.size()) invalid("batch order exhausted");
      return {ctx.batch_order[ctx.batch_cursor], 0.0, 1};
    case StrategyKind::Eer: {
      if (!ctx.state) invalid("missing context: solver state");
      const auto pool = candidates();
      return select_eer(*ctx.state, ctx.truth, pool);
    }
  }
  invalid("unknown strategy kind");
}

}  // namespace teach
