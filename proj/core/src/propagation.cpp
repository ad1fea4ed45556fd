#include "teach/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace teach {

namespace {

[[noreturn]] void disconnected(ItemIndex i) {
  throw TeachError(ErrorKind::Numerical,
                   "disconnected unlabeled node " + std::to_string(i) +
                       " (no path to any labeled item)");
}

}  // namespace

// ---------------------------------------------------------------------------
// SimilarityGraph

SimilarityGraph::SimilarityGraph(Eigen::MatrixXd weights, double gamma)
    : weights_(std::move(weights)), gamma_(gamma) {
  const int n = size();
  weights_.diagonal().setOnes();
  degrees_ = weights_.rowwise().sum() - Eigen::VectorXd::Ones(n);

  fully_dense_ = true;
  for (int j = 0; j < n && fully_dense_; ++j) {
    for (int i = 0; i < n; ++i) {
      if (i != j && !(weights_(i, j) > 0.0)) {
        fully_dense_ = false;
        break;
      }
    }
  }

  components_.assign(n, -1);
  num_components_ = 0;
  std::vector<int> stack;
  for (int root = 0; root < n; ++root) {
    if (components_[root] >= 0) continue;
    components_[root] = num_components_;
    stack.push_back(root);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int u = 0; u < n; ++u) {
        if (u != v && components_[u] < 0 && weights_(u, v) > 0.0) {
          components_[u] = num_components_;
          stack.push_back(u);
        }
      }
    }
    ++num_components_;
  }
}

SimilarityGraph SimilarityGraph::build(const FeatureMatrix& features, double gamma,
                                       int neighbors) {
  const auto n = features.rows();
  if (n < 2) throw TeachError(ErrorKind::InvalidInput, "build_similarity: need N >= 2");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw TeachError(ErrorKind::InvalidInput, "build_similarity: gamma must be positive");
  }
  if (neighbors < 0) {
    throw TeachError(ErrorKind::InvalidInput, "build_similarity: negative neighbor count");
  }

  // Column-major transpose keeps every item contiguous.
  const Eigen::MatrixXd xt = features.transpose();
  Eigen::MatrixXd w(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    w(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double d2 = (xt.col(i) - xt.col(j)).squaredNorm();
      if (!std::isfinite(d2)) {
        throw TeachError(ErrorKind::InvalidInput,
                         "build_similarity: non-finite distance between items " +
                             std::to_string(i) + " and " + std::to_string(j));
      }
      const double v = std::exp(-gamma * d2);
      w(i, j) = v;
      w(j, i) = v;
    }
  }

  if (neighbors > 0 && neighbors < n - 1) {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> keep =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, n, false);
    std::vector<Eigen::Index> order;
    order.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      order.clear();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j != i) order.push_back(j);
      }
      std::nth_element(order.begin(), order.begin() + (neighbors - 1), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) {
                         return w(a, i) > w(b, i) || (w(a, i) == w(b, i) && a < b);
                       });
      for (int r = 0; r < neighbors; ++r) {
        keep(order[r], i) = true;
        keep(i, order[r]) = true;
      }
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != j && !keep(i, j)) w(i, j) = 0.0;
      }
    }
  }
  return SimilarityGraph(std::move(w), gamma);
}

SimilarityGraph SimilarityGraph::from_weights(Eigen::MatrixXd weights, double gamma) {
  if (weights.rows() != weights.cols() || weights.rows() < 2) {
    throw TeachError(ErrorKind::InvalidInput, "from_weights: need a square matrix, N >= 2");
  }
  if (!weights.allFinite()) {
    throw TeachError(ErrorKind::InvalidInput, "from_weights: non-finite weight");
  }
  for (Eigen::Index j = 0; j < weights.cols(); ++j) {
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
      if (i == j) continue;
      if (weights(i, j) < 0.0 || weights(i, j) > 1.0) {
        throw TeachError(ErrorKind::InvalidInput, "from_weights: weight outside [0,1]");
      }
      if (std::abs(weights(i, j) - weights(j, i)) > 1e-12) {
        throw TeachError(ErrorKind::InvalidInput, "from_weights: matrix is not symmetric");
      }
    }
  }
  return SimilarityGraph(std::move(weights), gamma);
}

// ---------------------------------------------------------------------------
// Partition

Partition::Partition(int n) : position_(n) {
  unlabeled_.resize(n);
  std::iota(unlabeled_.begin(), unlabeled_.end(), 0);
  std::iota(position_.begin(), position_.end(), 0);
}

Partition::Partition(int n, const std::vector<ItemIndex>& labeled) : labeled_(labeled) {
  std::vector<bool> taken(n, false);
  for (ItemIndex i : labeled_) {
    if (i < 0 || i >= n) {
      throw TeachError(ErrorKind::InvalidInput, "partition: item " + std::to_string(i) +
                                                    " out of range");
    }
    if (taken[i]) {
      throw TeachError(ErrorKind::InvalidInput,
                       "partition: item " + std::to_string(i) + " labeled twice");
    }
    taken[i] = true;
  }
  for (int i = 0; i < n; ++i) {
    if (!taken[i]) unlabeled_.push_back(i);
  }
  position_.assign(n, -1);
  reindex();
}

int Partition::labeled_position(ItemIndex i) const {
  auto it = std::find(labeled_.begin(), labeled_.end(), i);
  return it == labeled_.end() ? -1 : static_cast<int>(it - labeled_.begin());
}

void Partition::move_to_labeled(ItemIndex i) {
  auto it = std::lower_bound(unlabeled_.begin(), unlabeled_.end(), i);
  if (it == unlabeled_.end() || *it != i) {
    throw TeachError(ErrorKind::InvalidInput,
                     "item " + std::to_string(i) + " already labeled");
  }
  unlabeled_.erase(it);
  labeled_.push_back(i);
  reindex();
}

void Partition::reindex() {
  std::fill(position_.begin(), position_.end(), -1);
  for (std::size_t p = 0; p < unlabeled_.size(); ++p) {
    position_[unlabeled_[p]] = static_cast<int>(p);
  }
}

// ---------------------------------------------------------------------------
// HarmonicSolverState

HarmonicSolverState::HarmonicSolverState(std::shared_ptr<const SimilarityGraph> graph,
                                         int num_classes)
    : graph_(std::move(graph)), num_classes_(num_classes) {
  if (!graph_) throw TeachError(ErrorKind::InvalidInput, "solver: null graph");
  if (num_classes_ < 1) throw TeachError(ErrorKind::InvalidInput, "solver: need C >= 1");
  partition_ = Partition(graph_->size());
  f_unlabeled_ = Eigen::MatrixXd::Constant(graph_->size(), num_classes_, 1.0 / num_classes_);
}

void HarmonicSolverState::check_class(ClassIndex c) const {
  if (c < 0 || c >= num_classes_) {
    throw TeachError(ErrorKind::InvalidInput, "class index out of range (" +
                                                  std::to_string(c) + " not in [0," +
                                                  std::to_string(num_classes_) + "))");
  }
}

void HarmonicSolverState::check_reachable() const {
  if (graph_->fully_dense() || graph_->connected()) return;
  const auto& comp = graph_->components();
  std::vector<bool> anchored(graph_->size(), false);
  for (ItemIndex l : partition_.labeled()) anchored[comp[l]] = true;
  for (ItemIndex u : partition_.unlabeled()) {
    if (!anchored[comp[u]]) disconnected(u);
  }
}

void HarmonicSolverState::factorize() {
  explicit_inverse_ = false;
  inverse_.resize(0, 0);
  inverse_diag_.resize(0);
  const auto& u = partition_.unlabeled();
  const auto n = static_cast<Eigen::Index>(u.size());
  if (!has_labels() || n == 0) return;
  check_reachable();

  const auto& w = graph_->weights();
  Eigen::MatrixXd a = -w(u, u);
  a.diagonal() = graph_->degrees()(u);
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) {
    a.diagonal().array() += kDiagonalJitter;
    llt_.compute(a);
  }
  if (llt_.info() != Eigen::Success) {
    throw TeachError(ErrorKind::Numerical,
                     "factorization of (S_uu - W_uu) failed; graph must be connected to the "
                     "teaching set");
  }

  if (n <= kExplicitInverseLimit) {
    inverse_ = llt_.solve(Eigen::MatrixXd::Identity(n, n));
    inverse_diag_ = inverse_.diagonal();
    explicit_inverse_ = true;
  } else {
    // diag(A^{-1}) = squared column norms of L^{-1} when A = L L^T.
    const Eigen::MatrixXd l_inv = llt_.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
    inverse_diag_ = l_inv.colwise().squaredNorm().transpose();
  }
}

void HarmonicSolverState::solve_beliefs() {
  const auto& u = partition_.unlabeled();
  const auto& l = partition_.labeled();
  if (!has_labels()) {
    f_unlabeled_ = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(u.size()), num_classes_,
                                             1.0 / num_classes_);
    return;
  }
  if (u.empty()) {
    f_unlabeled_.resize(0, num_classes_);
    return;
  }
  Eigen::MatrixXd ft = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l.size()), num_classes_);
  for (std::size_t r = 0; r < l.size(); ++r) {
    if (answers_[r] >= 0) ft(static_cast<Eigen::Index>(r), answers_[r]) = 1.0;
  }
  const Eigen::MatrixXd rhs = graph_->weights()(u, l) * ft;
  // The exact solution lies in [0, 1]; round-off can leave it by a few ulps.
  f_unlabeled_ = llt_.solve(rhs).cwiseMax(0.0).cwiseMin(1.0);
}

BeliefMatrix HarmonicSolverState::beliefs() const {
  const int n = graph_->size();
  BeliefMatrix out = BeliefMatrix::Zero(n, num_classes_);
  const auto& u = partition_.unlabeled();
  for (std::size_t p = 0; p < u.size(); ++p) {
    out.row(u[p]) = f_unlabeled_.row(static_cast<Eigen::Index>(p));
  }
  const auto& l = partition_.labeled();
  for (std::size_t r = 0; r < l.size(); ++r) {
    if (answers_[r] >= 0) out(l[r], answers_[r]) = 1.0;
  }
  return out;
}

Eigen::RowVectorXd HarmonicSolverState::belief_row(ItemIndex i) const {
  const int pos = partition_.unlabeled_position(i);
  if (pos >= 0) return f_unlabeled_.row(pos);
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(num_classes_);
  const ClassIndex c = answers_[partition_.labeled_position(i)];
  if (c >= 0) row(c) = 1.0;
  return row;
}

Eigen::VectorXd HarmonicSolverState::inverse_column(int pos) const {
  if (!has_labels()) {
    throw TeachError(ErrorKind::Numerical, "inverse requested with an empty teaching set");
  }
  if (explicit_inverse_) return inverse_.col(pos);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(partition_.unlabeled().size()));
  e(pos) = 1.0;
  return llt_.solve(e);
}

Eigen::MatrixXd HarmonicSolverState::inverse_times(const Eigen::MatrixXd& rhs) const {
  if (!has_labels()) {
    throw TeachError(ErrorKind::Numerical, "inverse requested with an empty teaching set");
  }
  if (explicit_inverse_) return inverse_ * rhs;
  return llt_.solve(rhs);
}

Eigen::MatrixXd HarmonicSolverState::hypothetical_update(ItemIndex k, ClassIndex c) const {
  check_class(c);
  const int pos = partition_.unlabeled_position(k);
  if (pos < 0) {
    throw TeachError(ErrorKind::InvalidInput,
                     "hypothetical_update: item " + std::to_string(k) + " is not unlabeled");
  }
  const auto n = static_cast<Eigen::Index>(partition_.unlabeled().size());
  Eigen::MatrixXd updated(n - 1, num_classes_);

  if (!has_labels()) {
    // A single labeled node pins its whole component to its class.
    const auto& comp = graph_->components();
    for (ItemIndex u : partition_.unlabeled()) {
      if (comp[u] != comp[k]) disconnected(u);
    }
    updated.setZero();
    updated.col(c).setOnes();
    return updated;
  }

  const Eigen::VectorXd g = inverse_column(pos);
  const double gkk = g(pos);
  if (!(gkk > 0.0)) {
    throw TeachError(ErrorKind::Numerical,
                     "internal consistency: G_kk <= 0 for item " + std::to_string(k));
  }
  Eigen::RowVectorXd delta = -f_unlabeled_.row(pos);
  delta(c) += 1.0;
  const Eigen::MatrixXd full = f_unlabeled_ + (g / gkk) * delta;
  updated.topRows(pos) = full.topRows(pos);
  updated.bottomRows(n - pos - 1) = full.bottomRows(n - pos - 1);
  return updated;
}

void HarmonicSolverState::refresh_after_answer(ItemIndex k, ClassIndex c) {
  check_class(c);
  if (k < 0 || k >= graph_->size()) {
    throw TeachError(ErrorKind::InvalidInput, "item " + std::to_string(k) + " out of range");
  }
  partition_.move_to_labeled(k);
  answers_.push_back(c);
  factorize();
  solve_beliefs();
}

void HarmonicSolverState::overwrite_answer(ItemIndex k, ClassIndex c) {
  check_class(c);
  const int lp = partition_.labeled_position(k);
  if (lp < 0) {
    throw TeachError(ErrorKind::InvalidInput,
                     "overwrite_answer: item " + std::to_string(k) + " is not labeled");
  }
  answers_[lp] = c;
  solve_beliefs();
}

HarmonicSolverState harmonic_solve(std::shared_ptr<const SimilarityGraph> graph,
                                   const std::vector<ItemIndex>& labeled,
                                   const std::vector<ClassIndex>& answers, int num_classes) {
  if (labeled.size() != answers.size()) {
    throw TeachError(ErrorKind::InvalidInput, "harmonic_solve: one answer per labeled item");
  }
  HarmonicSolverState state(std::move(graph), num_classes);
  for (ClassIndex c : answers) {
    if (c != -1) state.check_class(c);
  }
  state.partition_ = Partition(state.graph_->size(), labeled);
  state.answers_ = answers;
  state.factorize();
  state.solve_beliefs();
  return state;
}

ClassIndex argmax_class(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  ClassIndex best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row(c) > row(best)) best = static_cast<ClassIndex>(c);
  }
  return best;
}

ClassIndex predict_class(const BeliefMatrix& beliefs, ItemIndex i) {
  return argmax_class(beliefs.row(i));
}

}  // namespace teach
