#include "teach/pca.hpp"

#include <algorithm>
#include <string>

namespace teach {

Eigen::VectorXd PcaModel::explained_variance_ratio() const {
  if (total_variance <= 0.0) return Eigen::VectorXd::Zero(explained_variance.size());
  return explained_variance / total_variance;
}

PcaModel fit_pca(const FeatureMatrix& features, int target_dim) {
  const auto n = features.rows();
  const auto m = features.cols();
  if (n < 2) throw TeachError(ErrorKind::InvalidInput, "fit_pca: need at least 2 rows");
  if (target_dim < 1 || target_dim > std::min(n, m)) {
    throw TeachError(ErrorKind::InvalidInput,
                     "fit_pca: target_dim " + std::to_string(target_dim) + " too large for " +
                         std::to_string(n) + "x" + std::to_string(m) + " data");
  }
  if (!features.allFinite()) {
    throw TeachError(ErrorKind::InvalidInput, "fit_pca: non-finite feature value");
  }

  PcaModel model;
  model.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - model.mean.transpose();

  const double scale = std::max(1.0, features.cwiseAbs().maxCoeff());
  if (centered.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
    throw TeachError(ErrorKind::InvalidInput, "fit_pca: degenerate data (all rows identical)");
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double denom = static_cast<double>(n - 1);

  model.components = svd.matrixV().leftCols(target_dim).transpose();
  model.explained_variance = sv.head(target_dim).array().square() / denom;
  model.total_variance = centered.squaredNorm() / denom;

  for (Eigen::Index k = 0; k < model.components.rows(); ++k) {
    Eigen::Index arg = 0;
    model.components.row(k).cwiseAbs().maxCoeff(&arg);
    if (model.components(k, arg) < 0) model.components.row(k) *= -1.0;
  }
  return model;
}

FeatureMatrix apply_pca(const PcaModel& model, const FeatureMatrix& features) {
  if (features.cols() != model.input_dim()) {
    throw TeachError(ErrorKind::InvalidInput,
                     "apply_pca: dimension mismatch (" + std::to_string(features.cols()) +
                         " columns, model expects " + std::to_string(model.input_dim()) + ")");
  }
  return (features.rowwise() - model.mean.transpose()) * model.components.transpose();
}

FeatureMatrix reconstruct_pca(const PcaModel& model, const FeatureMatrix& projected) {
  if (projected.cols() != model.target_dim()) {
    throw TeachError(ErrorKind::InvalidInput, "reconstruct_pca: dimension mismatch");
  }
  return (projected * model.components).rowwise() + model.mean.transpose();
}

}  // namespace teach
