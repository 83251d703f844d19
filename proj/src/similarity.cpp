#include "fairaudit/similarity.hpp"

#include <cmath>

namespace fairaudit::similarity {

SimilarityMetric SimilarityMetric::weighted_lp(double p,
                                               Eigen::VectorXd theta) {
  if (!(p >= 1.0)) throw ConfigError("weighted lp exponent must be >= 1");
  if (theta.size() == 0) throw ConfigError("empty weight vector");
  if ((theta.array() <= 0.0).any())
    throw ConfigError("weighted lp weights must be strictly positive");
  SimilarityMetric m;
  m.impl_ = WeightedLp{p, std::move(theta)};
  return m;
}

SimilarityMetric SimilarityMetric::mahalanobis(Eigen::MatrixXd S) {
  if (S.rows() != S.cols() || S.rows() == 0)
    throw ConfigError("Mahalanobis matrix must be square and non-empty");
  if (!S.isApprox(S.transpose(), 1e-10))
    throw DataError("Mahalanobis matrix is not symmetric");
  Mahalanobis mh;
  mh.S = std::move(S);
  mh.llt.compute(mh.S);
  if (mh.llt.info() != Eigen::Success)
    throw DataError("Mahalanobis matrix is not positive definite");
  SimilarityMetric m;
  m.impl_ = std::move(mh);
  return m;
}

SimilarityMetric::Kind SimilarityMetric::kind() const {
  return std::holds_alternative<WeightedLp>(impl_) ? Kind::weighted_lp
                                                   : Kind::mahalanobis;
}

int SimilarityMetric::dim() const {
  if (kind() == Kind::weighted_lp)
    return static_cast<int>(std::get<WeightedLp>(impl_).theta.size());
  return static_cast<int>(std::get<Mahalanobis>(impl_).S.rows());
}

const WeightedLp& SimilarityMetric::as_weighted_lp() const {
  if (kind() != Kind::weighted_lp)
    throw StructuralError("metric is not weighted lp");
  return std::get<WeightedLp>(impl_);
}

const Mahalanobis& SimilarityMetric::as_mahalanobis() const {
  if (kind() != Kind::mahalanobis)
    throw StructuralError("metric is not Mahalanobis");
  return std::get<Mahalanobis>(impl_);
}

double SimilarityMetric::distance(const Eigen::VectorXd& a,
                                  const Eigen::VectorXd& b) const {
  if (a.size() != dim() || b.size() != dim())
    throw StructuralError("distance: dimension mismatch");
  const Eigen::VectorXd d = a - b;
  if (kind() == Kind::weighted_lp) {
    const WeightedLp& lp = std::get<WeightedLp>(impl_);
    if (std::isinf(lp.p))
      return (lp.theta.array() * d.array().abs()).maxCoeff();
    const double sum =
        (lp.theta.array() * d.array().abs().pow(lp.p)).sum();
    return std::pow(sum, 1.0 / lp.p);
  }
  const Mahalanobis& mh = std::get<Mahalanobis>(impl_);
  // d^T S^-1 d = ||L^-1 d||^2 with S = L L^T.
  const Eigen::VectorXd z = mh.llt.matrixL().solve(d);
  return std::sqrt(z.squaredNorm());
}

Eigen::VectorXd SimilarityMetric::step_scale(double eps) const {
  if (eps <= 0.0) throw ConfigError("step scale needs eps > 0");
  if (kind() == Kind::weighted_lp) {
    const WeightedLp& lp = std::get<WeightedLp>(impl_);
    return eps * lp.theta.array().sqrt().inverse();
  }
  const Mahalanobis& mh = std::get<Mahalanobis>(impl_);
  return eps * mh.S.diagonal().array().sqrt();
}

Eigen::VectorXd SimilarityMetric::project_to_ball(const Eigen::VectorXd& center,
                                                  const Eigen::VectorXd& point,
                                                  double eps) const {
  if (eps <= 0.0) throw ConfigError("projection needs eps > 0");
  const double dist = distance(center, point);
  if (dist <= eps * (1.0 + 1e-12)) return point;
  // Both metric families are norm-induced, so scaling the ray from the
  // center is the exact projection along the segment.
  const double alpha = eps / dist;
  return center + alpha * (point - center);
}

SimilarityMetric fit_weighted_lp(const data::Dataset& dataset,
                                 const MetricFitConfig& cfg) {
  if (cfg.epsilon_floor <= 0.0 || cfg.epsilon_floor > 1.0)
    throw ConfigError("epsilon_floor must be in (0,1]");
  const int n = dataset.n_features();
  const int rows = dataset.n_rows();
  if (dataset.sensitive_index < 0 || dataset.sensitive_index >= n)
    throw StructuralError("dataset has no valid sensitive column");
  if (rows < 2) throw DataError("need at least 2 rows to fit weights");

  const Eigen::VectorXd s = dataset.X.col(dataset.sensitive_index);
  const double s_mean = s.mean();
  const Eigen::VectorXd s_c = s.array() - s_mean;
  const double s_var = s_c.squaredNorm();

  Eigen::VectorXd theta(n);
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd f = dataset.X.col(j);
    const Eigen::VectorXd f_c = f.array() - f.mean();
    const double f_var = f_c.squaredNorm();
    double corr = 0.0;
    if (f_var > 0.0 && s_var > 0.0)
      corr = f_c.dot(s_c) / std::sqrt(f_var * s_var);
    double t = std::clamp(std::abs(corr), cfg.epsilon_floor, 1.0);
    // The sensitive column and exact aliases of it are nearly free to vary.
    if (j == dataset.sensitive_index || std::abs(corr) >= 1.0 - 1e-9)
      t = cfg.epsilon_floor;
    theta(j) = t;
  }
  return SimilarityMetric::weighted_lp(cfg.p, std::move(theta));
}

SimilarityMetric fit_mahalanobis(const data::Dataset& dataset) {
  const int n = dataset.n_features();
  const int rows = dataset.n_rows();
  if (rows < n + 1)
    throw DataError("need at least n+1 rows to fit a covariance of size n");

  const Eigen::RowVectorXd mean = dataset.X.colwise().mean();
  const Eigen::MatrixXd centered = dataset.X.rowwise() - mean;
  Eigen::MatrixXd S =
      (centered.transpose() * centered) / static_cast<double>(rows - 1);
  const double lambda = 1e-6 * S.trace() / static_cast<double>(n);
  S += lambda * Eigen::MatrixXd::Identity(n, n);
  return SimilarityMetric::mahalanobis(std::move(S));
}

}  // namespace fairaudit::similarity
