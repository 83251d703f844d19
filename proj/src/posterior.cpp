#include "fairaudit/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairaudit/rng.hpp"

namespace fairaudit::posterior {

namespace {

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) { return nn::sigmoid(x); }

// Sum values in ascending order; makes reductions independent of the
// order samples arrive in.
double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = n; i > 1; --i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X,
                            const std::vector<int>& rows) {
  Eigen::MatrixXd out(rows.size(), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = X.row(rows[i]);
  return out;
}

Eigen::VectorXi gather_labels(const Eigen::VectorXi& y,
                              const std::vector<int>& rows) {
  Eigen::VectorXi out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out(i) = y(rows[i]);
  return out;
}

// Unnormalized BNN log posterior: -sum bce - ||w||^2 / (2 prior_std^2).
class BnnPosteriorDensity final : public TargetDensity {
 public:
  BnnPosteriorDensity(const nn::NetworkArchitecture& arch,
                      const data::Dataset& dataset, double prior_std)
      : arch_(arch), dataset_(dataset), prior_std_(prior_std) {
    template_ = nn::zero_weights(arch);
  }

  int dim() const override { return arch_.param_count(); }

  double log_density(const Eigen::VectorXd& w,
                     Eigen::VectorXd* grad) const override {
    nn::WeightVector wv = template_;
    wv.values = w;
    nn::BatchEval ev =
        nn::eval_batch(arch_, wv, dataset_.X, dataset_.y, false, grad != nullptr);
    const double prior_inv_var = 1.0 / (prior_std_ * prior_std_);
    if (grad)
      *grad = -ev.param_grad_sum - prior_inv_var * w;
    return -ev.loss_sum - 0.5 * prior_inv_var * w.squaredNorm();
  }

 private:
  nn::NetworkArchitecture arch_;
  const data::Dataset& dataset_;
  double prior_std_;
  nn::WeightVector template_;
};

}  // namespace

InferenceKind inference_kind_from_string(const std::string& s) {
  if (s == "deterministic") return InferenceKind::deterministic;
  if (s == "vi") return InferenceKind::vi;
  if (s == "hmc") return InferenceKind::hmc;
  if (s == "deep_ensemble") return InferenceKind::deep_ensemble;
  throw ConfigError("unknown inference kind '" + s + "'");
}

std::string to_string(InferenceKind k) {
  switch (k) {
    case InferenceKind::deterministic: return "deterministic";
    case InferenceKind::vi: return "vi";
    case InferenceKind::hmc: return "hmc";
    case InferenceKind::deep_ensemble: return "deep_ensemble";
  }
  return "?";
}

void PosteriorEnsemble::validate() const {
  arch.validate();
  if (samples.empty()) throw StructuralError("ensemble has no samples");
  if (kind == InferenceKind::deterministic && samples.size() != 1)
    throw StructuralError("deterministic ensemble must hold exactly 1 sample");
  for (const auto& s : samples) s.validate_against(arch);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

void HMCConfig::validate() const {
  if (leapfrog_steps < 1) throw ConfigError("leapfrog_steps must be >= 1");
  if (step_size <= 0.0) throw ConfigError("step_size must be > 0");
  if (burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (n_kept < 1) throw ConfigError("n_kept must be >= 1");
  if (thinning < 1) throw ConfigError("thinning must be >= 1");
  if (prior_std <= 0.0) throw ConfigError("prior_std must be > 0");
}

LeapfrogResult leapfrog(const TargetDensity& target, const Eigen::VectorXd& w0,
                        const Eigen::VectorXd& p0, double step_size,
                        int steps) {
  if (steps < 1) throw ConfigError("leapfrog needs steps >= 1");
  Eigen::VectorXd grad(target.dim());
  const double logp0 = target.log_density(w0, &grad);

  LeapfrogResult r;
  r.h_initial = -logp0 + 0.5 * p0.squaredNorm();
  r.position = w0;
  r.momentum = p0 + 0.5 * step_size * grad;
  double logp = logp0;
  for (int l = 0; l < steps; ++l) {
    r.position += step_size * r.momentum;
    logp = target.log_density(r.position, &grad);
    if (!std::isfinite(logp) || !grad.allFinite()) {
      r.h_final = std::numeric_limits<double>::infinity();
      return r;
    }
    if (l + 1 < steps) r.momentum += step_size * grad;
  }
  r.momentum += 0.5 * step_size * grad;
  r.h_final = -logp + 0.5 * r.momentum.squaredNorm();
  return r;
}

std::vector<Eigen::VectorXd> hmc_sample(const TargetDensity& target,
                                        const HMCConfig& cfg,
                                        const Eigen::VectorXd& init,
                                        HMCDiagnostics* diag) {
  cfg.validate();
  if (init.size() != target.dim())
    throw StructuralError("hmc init does not match target dimension");

  Rng rng(cfg.seed);
  const int d = target.dim();
  Eigen::VectorXd w = init;
  if (!std::isfinite(target.log_density(w, nullptr)))
    throw TrainingError("hmc: log density not finite at the initial point");

  double eps = cfg.step_size;
  const int total = cfg.total_iterations();
  int accepted_post = 0;
  std::vector<Eigen::VectorXd> kept;
  kept.reserve(cfg.n_kept);

  Eigen::VectorXd p(d);
  for (int it = 0; it < total; ++it) {
    for (int i = 0; i < d; ++i) p(i) = rng.normal();
    const LeapfrogResult traj =
        leapfrog(target, w, p, eps, cfg.leapfrog_steps);
    const bool accept =
        rng.uniform() < std::exp(traj.h_initial - traj.h_final);
    if (accept) w = traj.position;

    if (it < cfg.burn_in) {
      // Multiplicative adaptation toward 0.75 acceptance; the gain decays so
      // early iterations can traverse orders of magnitude while late burn-in
      // settles. Frozen after burn-in.
      const double gain = 0.5 / (1.0 + static_cast<double>(it) / 25.0);
      eps *= std::exp(gain * ((accept ? 1.0 : 0.0) - 0.75));
      eps = std::clamp(eps, 1e-8, 1e3);
    } else {
      accepted_post += accept ? 1 : 0;
      if ((it - cfg.burn_in + 1) % cfg.thinning == 0) kept.push_back(w);
    }
  }

  const int post = total - cfg.burn_in;
  const double rate =
      post > 0 ? static_cast<double>(accepted_post) / post : 1.0;
  if (diag) {
    diag->acceptance_rate = rate;
    diag->adapted_step_size = eps;
  }
  // Enforce the tuning band only when the post-burn-in window is large
  // enough for the estimate to be meaningful (8/8 accepts is a 1 in 3 event
  // at a healthy 0.875 rate).
  if (post >= 30 && (rate < 0.2 || rate > 0.99))
    throw TrainingError("hmc: post burn-in acceptance rate " +
                        std::to_string(rate) + " outside [0.2, 0.99]");
  return kept;
}

MeanFieldResult fit_mean_field(const ViProblem& problem, const TrainConfig& cfg,
                               double prior_std, int mc_samples_per_step,
                               const Eigen::VectorXd& mu_init) {
  cfg.validate();
  if (prior_std <= 0.0) throw ConfigError("prior_std must be > 0");
  if (mc_samples_per_step < 1)
    throw ConfigError("mc_samples_per_step must be >= 1");
  if (mu_init.size() != problem.dim)
    throw StructuralError("vi init does not match problem dimension");

  const int d = problem.dim;
  const double prior_inv_var = 1.0 / (prior_std * prior_std);

  Eigen::VectorXd mu = mu_init;
  // softplus(-3) ~ 0.049: start near-deterministic, let the KL open it up.
  Eigen::VectorXd rho = Eigen::VectorXd::Constant(d, -3.0);

  // Adam state over the stacked (mu, rho) parameters.
  Eigen::VectorXd m = Eigen::VectorXd::Zero(2 * d);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(2 * d);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  long step = 0;

  Rng rng(cfg.seed);
  std::vector<double> elbo_trace;
  Eigen::VectorXd zeta(d), w(d), grad_w(d), g_mu(d), g_rho(d), std_vec(d);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(problem.n_data, rng);
    double epoch_elbo = 0.0;
    int epoch_batches = 0;
    for (int start = 0; start < problem.n_data; start += cfg.batch_size) {
      const int stop = std::min(problem.n_data, start + cfg.batch_size);
      const std::vector<int> batch(order.begin() + start,
                                   order.begin() + stop);
      const double scale =
          static_cast<double>(problem.n_data) / static_cast<double>(batch.size());

      for (int i = 0; i < d; ++i) std_vec(i) = softplus(rho(i));
      g_mu.setZero();
      g_rho.setZero();
      double lik_acc = 0.0;
      for (int s = 0; s < mc_samples_per_step; ++s) {
        for (int i = 0; i < d; ++i) zeta(i) = rng.normal();
        w = mu + std_vec.cwiseProduct(zeta);
        const double ll = problem.batch_log_lik(w, batch, &grad_w);
        lik_acc += scale * ll;
        g_mu += scale * grad_w;
        for (int i = 0; i < d; ++i)
          g_rho(i) += scale * grad_w(i) * zeta(i) * logistic(rho(i));
      }
      const double inv_k = 1.0 / mc_samples_per_step;
      g_mu *= inv_k;
      g_rho *= inv_k;
      lik_acc *= inv_k;

      // Analytic KL(q || N(0, prior_std^2 I)) and its gradients.
      double kl = 0.0;
      for (int i = 0; i < d; ++i) {
        const double sd = std_vec(i);
        kl += std::log(prior_std / sd) +
              (sd * sd + mu(i) * mu(i)) * 0.5 * prior_inv_var - 0.5;
        g_mu(i) -= mu(i) * prior_inv_var;
        g_rho(i) -= (sd * prior_inv_var - 1.0 / sd) * logistic(rho(i));
      }
      const double elbo = lik_acc - kl;
      if (!std::isfinite(elbo))
        throw TrainingError("vi: ELBO diverged at epoch " +
                            std::to_string(epoch));
      epoch_elbo += elbo;
      ++epoch_batches;

      // Adam ascent.
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (int i = 0; i < 2 * d; ++i) {
        const double g = i < d ? g_mu(i) : g_rho(i - d);
        m(i) = beta1 * m(i) + (1.0 - beta1) * g;
        v(i) = beta2 * v(i) + (1.0 - beta2) * g * g;
        const double update =
            cfg.learning_rate * (m(i) / bc1) / (std::sqrt(v(i) / bc2) + adam_eps);
        if (i < d)
          mu(i) += update;
        else
          rho(i - d) += update;
      }
    }
    if (epoch_batches > 0) elbo_trace.push_back(epoch_elbo / epoch_batches);
  }
  return {std::move(mu), std::move(rho), std::move(elbo_trace)};
}

PosteriorEnsemble train_sgd(const nn::NetworkArchitecture& arch,
                            const data::Dataset& dataset,
                            const TrainConfig& cfg) {
  arch.validate();
  cfg.validate();
  if (dataset.n_features() != arch.input_dim)
    throw StructuralError("dataset width does not match architecture input");

  nn::WeightVector w = nn::init_weights(arch, cfg.seed);
  Rng rng(derive_seed(cfg.seed, 0x5d0ff1e));
  const int n = dataset.n_rows();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int stop = std::min(n, start + cfg.batch_size);
      const std::vector<int> batch(order.begin() + start,
                                   order.begin() + stop);
      const Eigen::MatrixXd Xb = gather_rows(dataset.X, batch);
      const Eigen::VectorXi yb = gather_labels(dataset.y, batch);
      nn::BatchEval ev = nn::eval_batch(arch, w, Xb, yb, false, true);
      if (!std::isfinite(ev.loss_sum))
        throw TrainingError(
            "sgd: loss diverged (epoch " + std::to_string(epoch) +
            ", batch at row " + std::to_string(start) + ")");
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      w.values -=
          cfg.learning_rate *
          (inv_b * ev.param_grad_sum + cfg.weight_decay * w.values);
    }
  }

  PosteriorEnsemble ens;
  ens.kind = InferenceKind::deterministic;
  ens.arch = arch;
  ens.samples = {std::move(w)};
  ens.seed = cfg.seed;
  ens.dataset_fingerprint = dataset.fingerprint();
  ens.train_accuracy = ensemble_accuracy(ens, dataset);
  return ens;
}

VIPosterior train_vi(const nn::NetworkArchitecture& arch,
                     const data::Dataset& dataset, const TrainConfig& cfg,
                     double prior_std, int mc_samples_per_step) {
  arch.validate();
  if (dataset.n_features() != arch.input_dim)
    throw StructuralError("dataset width does not match architecture input");

  nn::WeightVector scratch = nn::zero_weights(arch);
  ViProblem problem;
  problem.dim = arch.param_count();
  problem.n_data = dataset.n_rows();
  problem.batch_log_lik = [&arch, &dataset, scratch](
                              const Eigen::VectorXd& w,
                              const std::vector<int>& batch,
                              Eigen::VectorXd* grad) mutable {
    scratch.values = w;
    const Eigen::MatrixXd Xb = gather_rows(dataset.X, batch);
    const Eigen::VectorXi yb = gather_labels(dataset.y, batch);
    nn::BatchEval ev = nn::eval_batch(arch, scratch, Xb, yb, false, true);
    if (grad) *grad = -ev.param_grad_sum;
    return -ev.loss_sum;
  };

  const Eigen::VectorXd mu0 = nn::init_weights(arch, cfg.seed).values;
  MeanFieldResult r =
      fit_mean_field(problem, cfg, prior_std, mc_samples_per_step, mu0);

  VIPosterior vi;
  vi.arch = arch;
  vi.mu = std::move(r.mu);
  vi.rho = std::move(r.rho);
  vi.prior_std = prior_std;
  vi.elbo_trace = std::move(r.elbo_trace);
  return vi;
}

PosteriorEnsemble sample_vi(const VIPosterior& vi, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("sample_vi needs k >= 1");
  Rng rng(seed);
  PosteriorEnsemble ens;
  ens.kind = InferenceKind::vi;
  ens.arch = vi.arch;
  ens.seed = seed;
  nn::WeightVector proto = nn::zero_weights(vi.arch);
  for (int j = 0; j < k; ++j) {
    nn::WeightVector s = proto;
    for (Eigen::Index i = 0; i < vi.mu.size(); ++i)
      s.values(i) = vi.mu(i) + softplus(vi.rho(i)) * rng.normal();
    ens.samples.push_back(std::move(s));
  }
  return ens;
}

PosteriorEnsemble run_hmc(const nn::NetworkArchitecture& arch,
                          const data::Dataset& dataset, const HMCConfig& cfg) {
  arch.validate();
  cfg.validate();
  if (dataset.n_features() != arch.input_dim)
    throw StructuralError("dataset width does not match architecture input");

  BnnPosteriorDensity target(arch, dataset, cfg.prior_std);
  const Eigen::VectorXd init =
      nn::init_weights(arch, derive_seed(cfg.seed, 0x10c)).values;
  HMCDiagnostics diag;
  const auto kept = hmc_sample(target, cfg, init, &diag);

  PosteriorEnsemble ens;
  ens.kind = InferenceKind::hmc;
  ens.arch = arch;
  ens.seed = cfg.seed;
  ens.dataset_fingerprint = dataset.fingerprint();
  nn::WeightVector proto = nn::zero_weights(arch);
  for (const auto& w : kept) {
    nn::WeightVector s = proto;
    s.values = w;
    ens.samples.push_back(std::move(s));
  }
  ens.train_accuracy = ensemble_accuracy(ens, dataset);
  return ens;
}

PosteriorEnsemble train_deep_ensemble(const nn::NetworkArchitecture& arch,
                                      const data::Dataset& dataset,
                                      const TrainConfig& cfg, int n_members,
                                      std::uint64_t seed) {
  if (n_members < 1) throw ConfigError("deep ensemble needs n_members >= 1");
  PosteriorEnsemble ens;
  ens.kind = InferenceKind::deep_ensemble;
  ens.arch = arch;
  ens.seed = seed;
  ens.dataset_fingerprint = dataset.fingerprint();
  for (int i = 0; i < n_members; ++i) {
    TrainConfig member_cfg = cfg;
    member_cfg.seed = seed + static_cast<std::uint64_t>(i);
    PosteriorEnsemble member = train_sgd(arch, dataset, member_cfg);
    ens.samples.push_back(std::move(member.samples[0]));
  }
  ens.train_accuracy = ensemble_accuracy(ens, dataset);
  return ens;
}

double predictive(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x) {
  std::vector<double> probs(ensemble.samples.size());
  for (std::size_t i = 0; i < ensemble.samples.size(); ++i)
    probs[i] =
        nn::sigmoid(nn::forward(ensemble.arch, ensemble.samples[i], x));
  return sorted_sum(probs) / static_cast<double>(probs.size());
}

Eigen::VectorXd expected_input_gradient(const PosteriorEnsemble& ensemble,
                                        const Eigen::VectorXd& x, int y) {
  const std::size_t k = ensemble.samples.size();
  std::vector<Eigen::VectorXd> grads(k);
  for (std::size_t i = 0; i < k; ++i)
    grads[i] = nn::grad_input(ensemble.arch, ensemble.samples[i], x, y);
  Eigen::VectorXd mean(x.size());
  std::vector<double> column(k);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    for (std::size_t i = 0; i < k; ++i) column[i] = grads[i](j);
    mean(j) = sorted_sum(column) / static_cast<double>(k);
  }
  return mean;
}

PosteriorEnsemble subsample_ensemble(const PosteriorEnsemble& ensemble, int k,
                                     std::uint64_t seed) {
  const int pool = ensemble.k();
  if (k < 1 || k > pool)
    throw ConfigError("subsample size " + std::to_string(k) +
                      " outside [1, " + std::to_string(pool) + "]");
  std::vector<int> idx(pool);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (int i = 0; i < k; ++i) {
    const int j =
        i + static_cast<int>(rng.below(static_cast<std::uint64_t>(pool - i)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<int> chosen(idx.begin(), idx.begin() + k);
  std::sort(chosen.begin(), chosen.end());

  PosteriorEnsemble out;
  out.kind = ensemble.kind;
  out.arch = ensemble.arch;
  out.seed = seed;
  out.dataset_fingerprint = ensemble.dataset_fingerprint;
  out.train_accuracy = ensemble.train_accuracy;
  for (int i : chosen) out.samples.push_back(ensemble.samples[i]);
  return out;
}

double ensemble_accuracy(const PosteriorEnsemble& ensemble,
                         const data::Dataset& dataset) {
  int correct = 0;
  for (int r = 0; r < dataset.n_rows(); ++r) {
    const double pi = predictive(ensemble, dataset.X.row(r));
    const int pred = pi > 0.5 ? 1 : 0;
    correct += pred == dataset.y(r) ? 1 : 0;
  }
  return static_cast<double>(correct) / dataset.n_rows();
}

}  // namespace fairaudit::posterior
