#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fairaudit/data.hpp"
#include "fairaudit/nn.hpp"

namespace fairaudit::posterior {

enum class InferenceKind { deterministic, vi, hmc, deep_ensemble };

InferenceKind inference_kind_from_string(const std::string& s);
std::string to_string(InferenceKind k);

// Finite-sample representation of the weight posterior (or the single
// trained point for the deterministic kind).
struct PosteriorEnsemble {
  InferenceKind kind = InferenceKind::deterministic;
  nn::NetworkArchitecture arch;
  std::vector<nn::WeightVector> samples;
  std::uint64_t seed = 0;
  std::uint64_t dataset_fingerprint = 0;
  double train_accuracy = std::numeric_limits<double>::quiet_NaN();

  int k() const { return static_cast<int>(samples.size()); }
  void validate() const;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 0.05;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean-field Gaussian over the flat parameter vector; std = softplus(rho).
struct VIPosterior {
  nn::NetworkArchitecture arch;
  Eigen::VectorXd mu;
  Eigen::VectorXd rho;
  double prior_std = 1.0;
  std::vector<double> elbo_trace;  // per-epoch averaged ELBO estimates
};

struct HMCConfig {
  int leapfrog_steps = 20;
  double step_size = 0.02;
  int burn_in = 300;
  int n_kept = 50;
  int thinning = 2;
  double prior_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  int total_iterations() const { return burn_in + n_kept * thinning; }
};

// Unnormalized log-density with gradient; shared by the HMC core and its
// analytic test targets.
class TargetDensity {
 public:
  virtual ~TargetDensity() = default;
  virtual int dim() const = 0;
  // Returns log density up to an additive constant; fills *grad if non-null.
  virtual double log_density(const Eigen::VectorXd& w,
                             Eigen::VectorXd* grad) const = 0;
};

struct HMCDiagnostics {
  double acceptance_rate = 0.0;  // post burn-in
  double adapted_step_size = 0.0;
};

// One leapfrog trajectory plus the Hamiltonians at its ends; h_final is
// +infinity when the trajectory leaves the target's finite region.
struct LeapfrogResult {
  Eigen::VectorXd position;
  Eigen::VectorXd momentum;
  double h_initial = 0.0;
  double h_final = 0.0;
};

LeapfrogResult leapfrog(const TargetDensity& target, const Eigen::VectorXd& w0,
                        const Eigen::VectorXd& p0, double step_size,
                        int steps);

// Leapfrog HMC with Metropolis correction. Step size is adapted
// multiplicatively toward 0.75 acceptance during burn-in, then frozen.
// Throws TrainingError if the post-burn-in acceptance rate leaves
// [0.2, 0.99].
std::vector<Eigen::VectorXd> hmc_sample(const TargetDensity& target,
                                        const HMCConfig& cfg,
                                        const Eigen::VectorXd& init,
                                        HMCDiagnostics* diag = nullptr);

// Generic mean-field VI problem: the likelihood is summed over a row batch;
// n_data rescales batch sums to the full-data estimate.
struct ViProblem {
  int dim = 0;
  int n_data = 0;
  std::function<double(const Eigen::VectorXd& w, const std::vector<int>& batch,
                       Eigen::VectorXd* grad)>
      batch_log_lik;
};

struct MeanFieldResult {
  Eigen::VectorXd mu;
  Eigen::VectorXd rho;
  std::vector<double> elbo_trace;
};

// Reparameterization-gradient ascent on the ELBO with an analytic
// Gaussian-to-Gaussian KL term; Adam updates on (mu, rho).
MeanFieldResult fit_mean_field(const ViProblem& problem, const TrainConfig& cfg,
                               double prior_std, int mc_samples_per_step,
                               const Eigen::VectorXd& mu_init);

PosteriorEnsemble train_sgd(const nn::NetworkArchitecture& arch,
                            const data::Dataset& dataset,
                            const TrainConfig& cfg);

VIPosterior train_vi(const nn::NetworkArchitecture& arch,
                     const data::Dataset& dataset, const TrainConfig& cfg,
                     double prior_std, int mc_samples_per_step);

PosteriorEnsemble sample_vi(const VIPosterior& vi, int k, std::uint64_t seed);

PosteriorEnsemble run_hmc(const nn::NetworkArchitecture& arch,
                          const data::Dataset& dataset, const HMCConfig& cfg);

PosteriorEnsemble train_deep_ensemble(const nn::NetworkArchitecture& arch,
                                      const data::Dataset& dataset,
                                      const TrainConfig& cfg, int n_members,
                                      std::uint64_t seed);

// Posterior predictive: mean over samples of sigmoid(logit). Per-sample
// values are accumulated in sorted order so the result is exactly invariant
// under sample permutation.
double predictive(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x);

// Mean over samples of the per-sample input gradient of the bce loss;
// same canonical accumulation order as predictive.
Eigen::VectorXd expected_input_gradient(const PosteriorEnsemble& ensemble,
                                        const Eigen::VectorXd& x, int y);

// k samples without replacement, indices kept in original order.
PosteriorEnsemble subsample_ensemble(const PosteriorEnsemble& ensemble, int k,
                                     std::uint64_t seed);

// Fraction of rows whose predictive crosses 0.5 on the correct side.
double ensemble_accuracy(const PosteriorEnsemble& ensemble,
                         const data::Dataset& dataset);

}  // namespace fairaudit::posterior
