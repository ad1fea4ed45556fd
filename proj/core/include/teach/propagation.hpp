#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "teach/dataset.hpp"

namespace teach {

/// Added to the diagonal of (S_uu - W_uu) only when the plain Cholesky
/// factorization fails. A jitter on every solve would bias row sums.
inline constexpr double kDiagonalJitter = 1e-10;

/// Unlabeled blocks up to this size keep an explicit inverse so each EER
/// candidate costs O(|D_u| C); larger blocks keep only the factorization.
inline constexpr int kExplicitInverseLimit = 2048;

/// Dense RBF similarity graph. The diagonal of `weights()` is 1 but self
/// loops are not part of `degrees()` and never enter propagation.
class SimilarityGraph {
 public:
  /// w_ij = exp(-gamma * |x_i - x_j|^2). With `neighbors > 0` every node
  /// keeps only its `neighbors` strongest edges (symmetrized by union).
  static SimilarityGraph build(const FeatureMatrix& features, double gamma, int neighbors = 0);

  /// Wraps an explicit symmetric weight matrix; used by tests and by
  /// callers with their own similarity. Zero off-diagonal entries mean
  /// "no edge". The diagonal is overwritten with 1.
  static SimilarityGraph from_weights(Eigen::MatrixXd weights, double gamma = 0.0);

  int size() const { return static_cast<int>(weights_.rows()); }
  double gamma() const { return gamma_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& degrees() const { return degrees_; }

  /// Connected component id of every node over positive off-diagonal edges.
  const std::vector<int>& components() const { return components_; }
  bool connected() const { return num_components_ == 1; }
  bool fully_dense() const { return fully_dense_; }

 private:
  explicit SimilarityGraph(Eigen::MatrixXd weights, double gamma);

  Eigen::MatrixXd weights_;
  Eigen::VectorXd degrees_;
  std::vector<int> components_;
  int num_components_ = 0;
  bool fully_dense_ = false;
  double gamma_ = 0.0;
};

inline SimilarityGraph build_similarity(const FeatureMatrix& features, double gamma,
                                        int neighbors = 0) {
  return SimilarityGraph::build(features, gamma, neighbors);
}

/// Split of the N items into the teaching set (labeled, in teaching order)
/// and the rest (unlabeled, ascending).
class Partition {
 public:
  explicit Partition(int n = 0);
  Partition(int n, const std::vector<ItemIndex>& labeled);

  int size() const { return static_cast<int>(position_.size()); }
  const std::vector<ItemIndex>& labeled() const { return labeled_; }
  const std::vector<ItemIndex>& unlabeled() const { return unlabeled_; }
  bool is_labeled(ItemIndex i) const { return position_.at(i) < 0; }

  /// Row of item i inside the unlabeled block, or -1 when labeled.
  int unlabeled_position(ItemIndex i) const { return position_.at(i); }
  /// Row of item i inside the labeled block, or -1 when unlabeled.
  int labeled_position(ItemIndex i) const;

  void move_to_labeled(ItemIndex i);

 private:
  void reindex();

  std::vector<ItemIndex> labeled_;
  std::vector<ItemIndex> unlabeled_;
  std::vector<int> position_;
};

/// N x C; f_ic is the teacher's estimate that the student assigns class c
/// to item i.
using BeliefMatrix = Eigen::MatrixXd;

/// The teacher's model of one student: the student's answers on the teaching
/// set plus the harmonic solution on everything else,
///   F_u = (S_uu - W_uu)^{-1} W_ut F_t.
/// With an empty teaching set every row is uniform.
///
/// Mutated only by refresh_after_answer()/overwrite_answer(); every const
/// member is safe to call concurrently between writes.
class HarmonicSolverState {
 public:
  HarmonicSolverState(std::shared_ptr<const SimilarityGraph> graph, int num_classes);

  const SimilarityGraph& graph() const { return *graph_; }
  const std::shared_ptr<const SimilarityGraph>& graph_ptr() const { return graph_; }
  int num_classes() const { return num_classes_; }
  const Partition& partition() const { return partition_; }
  bool has_labels() const { return !partition_.labeled().empty(); }

  /// Student answers aligned with partition().labeled(); -1 is an all-zero row.
  const std::vector<ClassIndex>& labeled_answers() const { return answers_; }

  /// |D_u| x C, rows in partition().unlabeled() order.
  const Eigen::MatrixXd& unlabeled_beliefs() const { return f_unlabeled_; }

  /// Full N x C matrix: one-hot answer rows for labeled items.
  BeliefMatrix beliefs() const;
  Eigen::RowVectorXd belief_row(ItemIndex i) const;

  bool has_explicit_inverse() const { return explicit_inverse_; }
  /// Column `pos` of G = (S_uu - W_uu)^{-1}.
  Eigen::VectorXd inverse_column(int pos) const;
  /// diag(G), |D_u| entries.
  const Eigen::VectorXd& inverse_diagonal() const { return inverse_diag_; }
  /// G * rhs.
  Eigen::MatrixXd inverse_times(const Eigen::MatrixXd& rhs) const;

  /// Beliefs over D_u \ {k} after hypothetically adding (k, c) to the
  /// teaching set, via the add-one-label identity
  ///   F_u' = F_u + G_{.k} / G_kk (e_c - F_u(k,.))
  /// with row k dropped. No refactorization.
  Eigen::MatrixXd hypothetical_update(ItemIndex k, ClassIndex c) const;

  /// Moves k into the teaching set with the student's answer c and refactors.
  void refresh_after_answer(ItemIndex k, ClassIndex c);

  /// Replaces the recorded answer for an already-taught item.
  void overwrite_answer(ItemIndex k, ClassIndex c);

 private:
  friend HarmonicSolverState harmonic_solve(std::shared_ptr<const SimilarityGraph>,
                                            const std::vector<ItemIndex>&,
                                            const std::vector<ClassIndex>&, int);

  void check_class(ClassIndex c) const;
  void check_reachable() const;
  void factorize();
  void solve_beliefs();

  std::shared_ptr<const SimilarityGraph> graph_;
  int num_classes_ = 0;
  Partition partition_;
  std::vector<ClassIndex> answers_;

  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd inverse_;
  Eigen::VectorXd inverse_diag_;
  bool explicit_inverse_ = false;
  Eigen::MatrixXd f_unlabeled_;
};

/// Builds a solver state for a given teaching set. `answers[i]` is the class
/// the student gave for `labeled[i]`, or -1 for "no answer yet".
HarmonicSolverState harmonic_solve(std::shared_ptr<const SimilarityGraph> graph,
                                   const std::vector<ItemIndex>& labeled,
                                   const std::vector<ClassIndex>& answers, int num_classes);

/// argmax over classes; ties go to the lowest class index.
ClassIndex argmax_class(const Eigen::Ref<const Eigen::RowVectorXd>& row);
ClassIndex predict_class(const BeliefMatrix& beliefs, ItemIndex i);

}  // namespace teach
