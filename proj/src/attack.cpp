#include "fairaudit/attack.hpp"

#include <cmath>

namespace fairaudit::attack {

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

int pick_label(const AttackConfig& cfg, const std::optional<int>& dataset_label,
               double pi_origin) {
  if (cfg.label_rule == LabelRule::dataset) {
    if (!dataset_label)
      throw StructuralError("label_rule=dataset but no label supplied");
    if (*dataset_label != 0 && *dataset_label != 1)
      throw StructuralError("dataset label must be 0 or 1");
    return *dataset_label;
  }
  return pi_origin >= 0.5 ? 1 : 0;  // ties to 1
}

// Keeps an iterate feasible: ball projection, box clamp, and -- because for
// a correlated Mahalanobis metric a coordinate-wise clamp can push the point
// back OUT of the ball -- one repair projection (the re-projected point is a
// convex combination of two in-box points, so it stays in the box).
Eigen::VectorXd make_feasible(const similarity::SimilarityMetric& metric,
                              const Eigen::VectorXd& origin,
                              Eigen::VectorXd cand, double eps,
                              const std::optional<ClampBox>& box) {
  cand = metric.project_to_ball(origin, cand, eps);
  if (box) {
    cand = box->clamp(cand);
    if (metric.distance(origin, cand) > eps * (1.0 + 1e-12)) {
      cand = metric.project_to_ball(origin, cand, eps);
      cand = box->clamp(cand);
    }
  }
  return cand;
}

// Steepest-ascent direction of the linearized objective under the metric,
// normalized to unit metric length. Signed steps allocate the distance
// budget uniformly across coordinates, which stalls multi-step attacks on
// strongly anisotropic balls; these directions give the optimal per-
// coordinate allocation instead.
Eigen::VectorXd steepest_ascent_dir(const similarity::SimilarityMetric& metric,
                                    const Eigen::VectorXd& g) {
  const Eigen::Index n = g.size();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  if (g.isZero(0.0)) return d;
  if (metric.kind() == similarity::SimilarityMetric::Kind::mahalanobis) {
    // argmax g.dx s.t. dx' S^-1 dx <= 1 is S g / sqrt(g' S g)
    const auto& mh = metric.as_mahalanobis();
    d = mh.S * g;
    const double len_sq = g.dot(d);
    if (len_sq > 0.0) d /= std::sqrt(len_sq);
    return d;
  }
  const auto& lp = metric.as_weighted_lp();
  if (std::isinf(lp.p)) {
    // max_i theta_i |dx_i| geometry: every active coordinate goes to its
    // own budget edge
    for (Eigen::Index i = 0; i < n; ++i)
      if (g(i) != 0.0) d(i) = sgn(g(i)) / lp.theta(i);
    return d;
  }
  if (lp.p == 1.0) {
    // dual l-infinity: the whole budget on the best payoff-per-cost axis
    Eigen::Index best = 0;
    double best_ratio = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ratio = std::abs(g(i)) / lp.theta(i);
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = i;
      }
    }
    d(best) = sgn(g(best)) / lp.theta(best);
    return d;
  }
  // holder-dual allocation: |dx_i| proportional to (|g_i|/theta_i)^(q-1),
  // q = p/(p-1); ratios normalized before powering to avoid overflow
  const double q = lp.p / (lp.p - 1.0);
  Eigen::VectorXd ratio(n);
  double max_ratio = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    ratio(i) = std::abs(g(i)) / lp.theta(i);
    max_ratio = std::max(max_ratio, ratio(i));
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (g(i) != 0.0)
      d(i) = sgn(g(i)) * std::pow(ratio(i) / max_ratio, q - 1.0);
  const double len =
      std::pow((lp.theta.array() * d.array().abs().pow(lp.p)).sum(),
               1.0 / lp.p);
  if (len > 0.0) d /= len;
  return d;
}

struct Trajectory {
  Eigen::VectorXd best;
  double best_pi = 0.0;
  double best_delta = 0.0;
  int best_step = 0;
};

// Iterated attack for one loss-ascent label. Step 1 is the eta-scaled
// signed step (the single-step attack direction); later steps follow the
// metric's steepest ascent. Every iterate is projected and clamped, and the
// best iterate of the trajectory (start included) is reported, later
// iterates winning ties.
Trajectory run_trajectory(const posterior::PosteriorEnsemble& ensemble,
                          const similarity::SimilarityMetric& metric,
                          const Eigen::VectorXd& x, const AttackConfig& cfg,
                          int y, double pi_origin, int steps,
                          double fraction) {
  const Eigen::VectorXd signed_scale = fraction * metric.step_scale(cfg.eps);
  const double ascent_scale = fraction * cfg.eps;

  Trajectory out;
  out.best = x;
  out.best_pi = pi_origin;

  Eigen::VectorXd cur = x;
  for (int t = 1; t <= steps; ++t) {
    const Eigen::VectorXd g =
        posterior::expected_input_gradient(ensemble, cur, y);
    Eigen::VectorXd cand;
    if (t == 1)
      cand = cur + signed_scale.cwiseProduct(g.unaryExpr(&sgn));
    else
      cand = cur + ascent_scale * steepest_ascent_dir(metric, g);
    cand = make_feasible(metric, x, std::move(cand), cfg.eps, cfg.clamp_box);
    cur = cand;
    const double pi = posterior::predictive(ensemble, cur);
    const double delta = std::abs(pi - pi_origin);
    if (delta >= out.best_delta) {
      out.best = cur;
      out.best_delta = delta;
      out.best_pi = pi;
      out.best_step = t;
    }
  }
  return out;
}

AttackResult run_gradient_attack(const posterior::PosteriorEnsemble& ensemble,
                                 const similarity::SimilarityMetric& metric,
                                 const Eigen::VectorXd& x,
                                 const AttackConfig& cfg,
                                 const std::optional<int>& dataset_label,
                                 int steps, double fraction) {
  if (x.size() != metric.dim() || metric.dim() != ensemble.arch.input_dim)
    throw StructuralError("attack: dimension mismatch");

  const double pi_origin = posterior::predictive(ensemble, x);
  const int y = pick_label(cfg, dataset_label, pi_origin);

  Trajectory best =
      run_trajectory(ensemble, metric, x, cfg, y, pi_origin, steps, fraction);
  // The audited quantity is the absolute predictive gap, so multi-step runs
  // chase both loss-ascent directions; the primary label keeps ties. A
  // 1-step budget stays the one-sided single-step attack.
  if (steps >= 2) {
    const Trajectory reverse = run_trajectory(ensemble, metric, x, cfg, 1 - y,
                                              pi_origin, steps, fraction);
    if (reverse.best_delta > best.best_delta) best = reverse;
  }

  AttackResult r;
  r.x_origin = x;
  r.x_adv = std::move(best.best);
  r.pi_origin = pi_origin;
  r.pi_adv = best.best_pi;
  r.local_delta = best.best_delta;
  r.dist = metric.distance(x, r.x_adv);
  r.steps_used = best.best_step;
  if (r.dist > cfg.eps * (1.0 + 1e-9))
    throw StructuralError("attack produced an infeasible point");
  return r;
}

}  // namespace

AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "fair_fgsm") return AttackKind::fair_fgsm;
  if (s == "fair_pgd") return AttackKind::fair_pgd;
  throw ConfigError("unknown attack kind '" + s + "'");
}

std::string to_string(AttackKind k) {
  return k == AttackKind::fair_fgsm ? "fair_fgsm" : "fair_pgd";
}

LabelRule label_rule_from_string(const std::string& s) {
  if (s == "predicted") return LabelRule::predicted;
  if (s == "dataset") return LabelRule::dataset;
  throw ConfigError("unknown label rule '" + s + "'");
}

std::string to_string(LabelRule r) {
  return r == LabelRule::predicted ? "predicted" : "dataset";
}

void AttackConfig::validate() const {
  if (eps <= 0.0) throw ConfigError("attack eps must be > 0");
  if (pgd_steps < 1) throw ConfigError("pgd_steps must be >= 1");
  if (pgd_step_fraction > 1.0)
    throw ConfigError("pgd_step_fraction must be in (0,1] when set");
  if (clamp_box) {
    if (clamp_box->lo.size() != clamp_box->hi.size())
      throw ConfigError("clamp box bounds disagree in length");
    if ((clamp_box->lo.array() > clamp_box->hi.array()).any())
      throw ConfigError("clamp box has lo > hi");
  }
}

double local_delta(const posterior::PosteriorEnsemble& ensemble,
                   const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::abs(posterior::predictive(ensemble, a) -
                  posterior::predictive(ensemble, b));
}

AttackResult fair_fgsm(const posterior::PosteriorEnsemble& ensemble,
                       const similarity::SimilarityMetric& metric,
                       const Eigen::VectorXd& x, const AttackConfig& cfg,
                       std::optional<int> dataset_label) {
  cfg.validate();
  return run_gradient_attack(ensemble, metric, x, cfg, dataset_label, 1, 1.0);
}

AttackResult fair_pgd(const posterior::PosteriorEnsemble& ensemble,
                      const similarity::SimilarityMetric& metric,
                      const Eigen::VectorXd& x, const AttackConfig& cfg,
                      std::optional<int> dataset_label) {
  cfg.validate();
  return run_gradient_attack(ensemble, metric, x, cfg, dataset_label,
                             cfg.pgd_steps, cfg.effective_fraction());
}

AttackResult run_attack(const posterior::PosteriorEnsemble& ensemble,
                        const similarity::SimilarityMetric& metric,
                        const Eigen::VectorXd& x, const AttackConfig& cfg,
                        std::optional<int> dataset_label) {
  return cfg.kind == AttackKind::fair_fgsm
             ? fair_fgsm(ensemble, metric, x, cfg, dataset_label)
             : fair_pgd(ensemble, metric, x, cfg, dataset_label);
}

AttackResult brute_force_oracle(const posterior::PosteriorEnsemble& ensemble,
                                const similarity::SimilarityMetric& metric,
                                const Eigen::VectorXd& x, double eps,
                                int grid_points_per_dim,
                                const std::optional<ClampBox>& clamp_box) {
  const int n = static_cast<int>(x.size());
  if (n > 4)
    throw StructuralError("brute_force_oracle limited to dimension <= 4");
  if (eps <= 0.0) throw ConfigError("oracle needs eps > 0");
  if (grid_points_per_dim < 2) throw ConfigError("grid needs >= 2 points");

  // Bounding box of the eps-ball, per metric family.
  Eigen::VectorXd radius(n);
  if (metric.kind() == similarity::SimilarityMetric::Kind::weighted_lp) {
    const auto& lp = metric.as_weighted_lp();
    for (int i = 0; i < n; ++i)
      radius(i) = std::isinf(lp.p)
                      ? eps / lp.theta(i)
                      : eps / std::pow(lp.theta(i), 1.0 / lp.p);
  } else {
    const auto& mh = metric.as_mahalanobis();
    for (int i = 0; i < n; ++i) radius(i) = eps * std::sqrt(mh.S(i, i));
  }

  Eigen::VectorXd lo = x - radius, hi = x + radius;
  if (clamp_box) {
    lo = lo.cwiseMax(clamp_box->lo);
    hi = hi.cwiseMin(clamp_box->hi);
  }

  const double pi_origin = posterior::predictive(ensemble, x);
  AttackResult best;
  best.x_origin = x;
  best.x_adv = x;
  best.pi_origin = pi_origin;
  best.pi_adv = pi_origin;

  const int g = grid_points_per_dim;
  std::vector<int> ticks(n, 0);
  Eigen::VectorXd pt(n);
  for (;;) {
    for (int i = 0; i < n; ++i) {
      const double f = static_cast<double>(ticks[i]) / (g - 1);
      pt(i) = lo(i) + f * (hi(i) - lo(i));
    }
    if (metric.distance(x, pt) <= eps * (1.0 + 1e-12)) {
      const double pi = posterior::predictive(ensemble, pt);
      const double delta = std::abs(pi - pi_origin);
      if (delta > best.local_delta) {
        best.x_adv = pt;
        best.pi_adv = pi;
        best.local_delta = delta;
      }
    }
    int d = 0;
    while (d < n && ++ticks[d] == g) ticks[d++] = 0;
    if (d == n) break;
  }
  best.dist = metric.distance(x, best.x_adv);
  best.steps_used = 0;
  return best;
}

}  // namespace fairaudit::attack
