#include "edgeml/boost/linear.hpp"

#include <Eigen/Dense>

#include "edgeml/common/error.hpp"

namespace edgeml::boost {

double LinearModel::predict(std::span<const double> x) const {
  if (x.size() != coefficients.size()) fail(ErrorKind::Schema, "feature vector length differs from model");
  double y = intercept;
  for (std::size_t i = 0; i < x.size(); ++i) y += coefficients[i] * x[i];
  return y;
}

LinearModel fit_linear(const Dataset& data) {
  data.validate();
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto f = static_cast<Eigen::Index>(data.feature_count());

  LinearModel model;
  model.feature_names = data.feature_names;
  model.coefficients.assign(data.feature_count(), 0.0);

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(data.values.data(), n, f);
  Eigen::Map<const Eigen::VectorXd> y(data.labels.data(), n);
  const double y_mean = y.mean();

  if (f == 0) {
    model.intercept = y_mean;
    return model;
  }

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;

  if (xc.isZero(0.0)) {
    model.intercept = y_mean;
    model.degenerate = true;
    return model;
  }

  Eigen::VectorXd w;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
  if (n >= f + 1 && qr.rank() == f) {
    w = qr.solve(yc);
  } else {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += kRidgeLambda;
    w = gram.ldlt().solve(xc.transpose() * yc);
  }

  for (Eigen::Index i = 0; i < f; ++i) model.coefficients[static_cast<std::size_t>(i)] = w(i);
  model.intercept = y_mean - x_mean.dot(w);
  return model;
}

}  // namespace edgeml::boost
