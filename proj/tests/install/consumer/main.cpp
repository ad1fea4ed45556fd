#include <iostream>

#include "teach/propagation.hpp"

int main() {
  const Eigen::MatrixXd w = Eigen::MatrixXd::Ones(3, 3);
  auto graph = std::make_shared<const teach::SimilarityGraph>(teach::SimilarityGraph::from_weights(w));
  const auto state = teach::harmonic_solve(graph, {0}, {1}, 2);
  std::cout << state.beliefs()(2, 1) << "\n";
  return state.beliefs()(2, 1) == 1.0 ? 0 : 1;
}
