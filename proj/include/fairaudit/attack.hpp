#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

#include "fairaudit/posterior.hpp"
#include "fairaudit/similarity.hpp"

namespace fairaudit::attack {

enum class AttackKind { fair_fgsm, fair_pgd };
enum class LabelRule { predicted, dataset };

AttackKind attack_kind_from_string(const std::string& s);
std::string to_string(AttackKind k);
LabelRule label_rule_from_string(const std::string& s);
std::string to_string(LabelRule r);

// Per-feature valid range; adversarial points must stay inside it so they
// remain feasible individuals.
struct ClampBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static ClampBox unit(int n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
  }
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lo).cwiseMin(hi);
  }
  bool contains(const Eigen::VectorXd& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
};

struct AttackConfig {
  AttackKind kind = AttackKind::fair_pgd;
  double eps = 0.1;
  int pgd_steps = 25;
  // Per-step scale as a fraction of the full step vector; <= 0 selects the
  // default 2/pgd_steps so the trajectory can traverse the ball diameter.
  double pgd_step_fraction = 0.0;
  std::optional<ClampBox> clamp_box;
  LabelRule label_rule = LabelRule::predicted;
  std::uint64_t seed = 0;

  void validate() const;
  double effective_fraction() const {
    return pgd_step_fraction > 0.0 ? pgd_step_fraction
                                   : 2.0 / static_cast<double>(pgd_steps);
  }
};

struct AttackResult {
  Eigen::VectorXd x_origin;
  Eigen::VectorXd x_adv;
  double pi_origin = 0.0;
  double pi_adv = 0.0;
  double local_delta = 0.0;
  double dist = 0.0;
  int steps_used = 0;
};

// |pi(x') - pi(x'')|.
double local_delta(const posterior::PosteriorEnsemble& ensemble,
                   const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// One signed-expected-gradient step of full scale eta, then ball projection
// and box clamping.
AttackResult fair_fgsm(const posterior::PosteriorEnsemble& ensemble,
                       const similarity::SimilarityMetric& metric,
                       const Eigen::VectorXd& x, const AttackConfig& cfg,
                       std::optional<int> dataset_label = std::nullopt);

// Iterated signed-expected-gradient steps with per-step scale
// eta * fraction; reports the best iterate of the whole trajectory.
AttackResult fair_pgd(const posterior::PosteriorEnsemble& ensemble,
                      const similarity::SimilarityMetric& metric,
                      const Eigen::VectorXd& x, const AttackConfig& cfg,
                      std::optional<int> dataset_label = std::nullopt);

// Dispatch on cfg.kind.
AttackResult run_attack(const posterior::PosteriorEnsemble& ensemble,
                        const similarity::SimilarityMetric& metric,
                        const Eigen::VectorXd& x, const AttackConfig& cfg,
                        std::optional<int> dataset_label = std::nullopt);

// Exhaustive grid search over the ball's bounding box; validation oracle
// for inputs of dimension <= 4.
AttackResult brute_force_oracle(
    const posterior::PosteriorEnsemble& ensemble,
    const similarity::SimilarityMetric& metric, const Eigen::VectorXd& x,
    double eps, int grid_points_per_dim,
    const std::optional<ClampBox>& clamp_box = std::nullopt);

}  // namespace fairaudit::attack
