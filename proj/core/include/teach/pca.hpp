#pragma once

#include <Eigen/Dense>

#include "teach/dataset.hpp"

namespace teach {

/// Principal axes of a feature matrix. Rows of `components` are orthonormal
/// and ordered by decreasing explained variance; each row's largest-magnitude
/// entry is positive so repeated fits give identical projections.
struct PcaModel {
  Eigen::VectorXd mean;                // M
  Eigen::MatrixXd components;          // K x M
  Eigen::VectorXd explained_variance;  // K, sample variance along each axis
  double total_variance = 0.0;         // sum of all M sample variances

  int target_dim() const { return static_cast<int>(components.rows()); }
  int input_dim() const { return static_cast<int>(components.cols()); }
  Eigen::VectorXd explained_variance_ratio() const;
};

PcaModel fit_pca(const FeatureMatrix& features, int target_dim);

/// (features - mean) * components^T, shape N x K.
FeatureMatrix apply_pca(const PcaModel& model, const FeatureMatrix& features);

/// Maps projected coordinates back into the input space.
FeatureMatrix reconstruct_pca(const PcaModel& model, const FeatureMatrix& projected);

}  // namespace teach
