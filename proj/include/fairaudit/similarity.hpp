#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <limits>
#include <string>
#include <variant>

#include "fairaudit/data.hpp"
#include "fairaudit/errors.hpp"

namespace fairaudit::similarity {

// Weighted lp distance: (sum_i theta_i |dx_i|^p)^(1/p). p = infinity uses
// max_i theta_i * |dx_i| (weights applied linearly in the limit).
struct WeightedLp {
  double p = 2.0;
  Eigen::VectorXd theta;
};

// Mahalanobis distance sqrt(dx^T S^-1 dx) with S strictly positive definite.
// The Cholesky factorization of S is cached; S^-1 is applied through solves.
struct Mahalanobis {
  Eigen::MatrixXd S;
  Eigen::LLT<Eigen::MatrixXd> llt;
};

class SimilarityMetric {
 public:
  enum class Kind { weighted_lp, mahalanobis };

  static SimilarityMetric weighted_lp(double p, Eigen::VectorXd theta);
  static SimilarityMetric mahalanobis(Eigen::MatrixXd S);

  Kind kind() const;
  int dim() const;

  double distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

  // Per-coordinate attack scale: eps/sqrt(theta_i) for weighted lp,
  // eps*sqrt(S_ii) for Mahalanobis.
  Eigen::VectorXd step_scale(double eps) const;

  // Exact ray projection of `point` onto the closed eps-ball around
  // `center`. Points already inside (to 1e-12 relative slack) are returned
  // unchanged, which makes the projection idempotent.
  Eigen::VectorXd project_to_ball(const Eigen::VectorXd& center,
                                  const Eigen::VectorXd& point,
                                  double eps) const;

  const WeightedLp& as_weighted_lp() const;
  const Mahalanobis& as_mahalanobis() const;

 private:
  std::variant<WeightedLp, Mahalanobis> impl_;
};

struct MetricFitConfig {
  enum class Method { correlation_weights, covariance_mahalanobis };
  Method method = Method::correlation_weights;
  double epsilon_floor = 0.01;
  double p = 2.0;
};

// theta_i = |pearson corr(feature_i, sensitive)| clamped to
// [epsilon_floor, 1]; the sensitive column itself (and exact aliases of it)
// gets epsilon_floor so sensitive-attribute flips are nearly free.
SimilarityMetric fit_weighted_lp(const data::Dataset& dataset,
                                 const MetricFitConfig& cfg);

// S = sample covariance + (1e-6 * trace/n) I.
SimilarityMetric fit_mahalanobis(const data::Dataset& dataset);

inline constexpr double kInfiniteP = std::numeric_limits<double>::infinity();

}  // namespace fairaudit::similarity
