#pragma once

// Independent reference implementations and fixtures shared by the tests.
// The oracles here deliberately avoid the library's solver code paths: they
// form the full Laplacian and solve with a pivoted LU, with no jitter.

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "teach/pipeline.hpp"
#include "teach/propagation.hpp"
#include "teach/simulator.hpp"

namespace teach::testing {

/// Symmetric weights in (0, 1] with roughly `density` of the off-diagonal
/// pairs nonzero; a random spanning tree keeps the graph connected.
inline Eigen::MatrixXd random_weights(int n, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> weight(0.05, 1.0);
  std::bernoulli_distribution edge(density);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = j + 1; i < n; ++i) {
      if (edge(rng)) w(i, j) = w(j, i) = weight(rng);
    }
  }
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int k = 1; k < n; ++k) {
    std::uniform_int_distribution<int> parent(0, k - 1);
    const int a = perm[k];
    const int b = perm[parent(rng)];
    if (w(a, b) == 0.0) w(a, b) = w(b, a) = weight(rng);
  }
  w.diagonal().setOnes();
  return w;
}

inline std::shared_ptr<const SimilarityGraph> random_graph(int n, double density,
                                                           std::mt19937_64& rng) {
  return std::make_shared<const SimilarityGraph>(
      SimilarityGraph::from_weights(random_weights(n, density, rng)));
}

/// RBF graph over uniform random points.
inline std::shared_ptr<const SimilarityGraph> random_rbf_graph(int n, int dims, double gamma,
                                                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Eigen::MatrixXd x(n, dims);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < dims; ++d) x(i, d) = u(rng);
  }
  return std::make_shared<const SimilarityGraph>(SimilarityGraph::build(x, gamma));
}

/// Harmonic beliefs for every node (labeled rows one-hot), computed from
/// the full Laplacian with a pivoted LU.
inline Eigen::MatrixXd dense_harmonic_oracle(const Eigen::MatrixXd& weights,
                                             const std::vector<int>& labeled,
                                             const std::vector<int>& answers, int num_classes) {
  const int n = static_cast<int>(weights.rows());
  Eigen::MatrixXd w = weights;
  w.diagonal().setZero();
  Eigen::MatrixXd lap = -w;
  lap.diagonal() = w.rowwise().sum();

  std::vector<bool> is_labeled(n, false);
  for (int l : labeled) is_labeled[l] = true;
  std::vector<int> unl;
  for (int i = 0; i < n; ++i) {
    if (!is_labeled[i]) unl.push_back(i);
  }
  Eigen::MatrixXd ft = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(labeled.size()), num_classes);
  for (std::size_t r = 0; r < labeled.size(); ++r) {
    if (answers[r] >= 0) ft(static_cast<Eigen::Index>(r), answers[r]) = 1.0;
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, num_classes);
  for (std::size_t r = 0; r < labeled.size(); ++r) out.row(labeled[r]) = ft.row(r);
  if (unl.empty()) return out;

  Eigen::MatrixXd luu(unl.size(), unl.size());
  Eigen::MatrixXd wul(unl.size(), labeled.size());
  for (std::size_t a = 0; a < unl.size(); ++a) {
    for (std::size_t b = 0; b < unl.size(); ++b) luu(a, b) = lap(unl[a], unl[b]);
    for (std::size_t b = 0; b < labeled.size(); ++b) wul(a, b) = w(unl[a], labeled[b]);
  }
  const Eigen::MatrixXd fu = luu.fullPivLu().solve(wul * ft);
  for (std::size_t a = 0; a < unl.size(); ++a) out.row(unl[a]) = fu.row(a);
  return out;
}

/// Re-solves from scratch with (k, c) added to the teaching set and returns
/// the beliefs of the remaining unlabeled nodes in ascending order.
inline Eigen::MatrixXd brute_force_update(const Eigen::MatrixXd& weights, std::vector<int> labeled,
                                          std::vector<int> answers, int k, int c,
                                          int num_classes) {
  labeled.push_back(k);
  answers.push_back(c);
  const Eigen::MatrixXd all = dense_harmonic_oracle(weights, labeled, answers, num_classes);
  std::vector<bool> is_labeled(all.rows(), false);
  for (int l : labeled) is_labeled[l] = true;
  std::vector<int> rows;
  for (int i = 0; i < all.rows(); ++i) {
    if (!is_labeled[i]) rows.push_back(i);
  }
  return all(rows, Eigen::all);
}

/// The expected-error objective by full re-solve.
inline double brute_force_eer(const Eigen::MatrixXd& weights, const std::vector<int>& labeled,
                              const std::vector<int>& answers, const std::vector<int>& truth,
                              int k, int num_classes) {
  std::vector<int> l2 = labeled;
  std::vector<int> a2 = answers;
  l2.push_back(k);
  a2.push_back(truth[k]);
  const Eigen::MatrixXd all = dense_harmonic_oracle(weights, l2, a2, num_classes);
  std::vector<bool> is_labeled(all.rows(), false);
  for (int l : l2) is_labeled[l] = true;
  double total = 0.0;
  for (int i = 0; i < all.rows(); ++i) {
    if (!is_labeled[i]) total += 1.0 - all(i, truth[i]);
  }
  return total;
}

inline std::shared_ptr<const PreparedDataset> prepared_mixture(const MixtureOptions& options,
                                                               PrepareOptions prepare = {}) {
  return prepare_dataset(make_gaussian_mixture(options), prepare);
}

/// Small well-separated dataset for protocol tests.
inline MixtureOptions small_mixture(int classes = 3, int per_class = 16, std::uint64_t seed = 7) {
  MixtureOptions o;
  o.classes = classes;
  o.per_class = per_class;
  o.dims = 4;
  o.spread = 6.0;
  o.seed = seed;
  o.name = "small";
  return o;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("teach-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace teach::testing
