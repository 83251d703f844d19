#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairaudit/attack.hpp"
#include "fairaudit/data.hpp"
#include "fairaudit/posterior.hpp"
#include "fairaudit/similarity.hpp"

namespace fairaudit::audit {

// Precision/confidence of the statistical sampling bound: with
// n > log(2/gamma) / (2 theta_c^2) iid samples, |p_hat - p| <= theta_c
// holds with probability >= 1 - gamma.
struct ChernoffParams {
  double theta_c = 0.05;
  double gamma = 0.05;

  void validate() const;
};

// Smallest integer strictly greater than the bound.
int chernoff_sample_size(const ChernoffParams& params);

// Where audit points come from: the empirical distribution of a dataset
// split (with replacement) or the uniform distribution on [0,1]^n.
struct SamplingSource {
  enum class Kind { dataset_empirical, uniform_box };
  Kind kind = Kind::uniform_box;
  const data::Dataset* dataset = nullptr;
  int dim = 0;
  std::uint64_t seed = 0;

  static SamplingSource empirical(const data::Dataset& dataset,
                                  std::uint64_t seed);
  static SamplingSource uniform(int dim, std::uint64_t seed);
  std::string kind_name() const;
};

struct SampledInputs {
  std::vector<Eigen::VectorXd> points;
  std::vector<int> labels;  // empty for the uniform source

  std::optional<int> label_at(std::size_t i) const {
    if (labels.empty()) return std::nullopt;
    return labels[i];
  }
};

SampledInputs sample_inputs(const SamplingSource& source, int n);

struct PHatResult {
  double p_hat = 1.0;
  std::vector<attack::AttackResult> per_sample;
};

// Runs the configured attack on every sample; p_hat is the fraction whose
// attacked predictive gap stays <= delta.
PHatResult estimate_p_hat(const posterior::PosteriorEnsemble& ensemble,
                          const similarity::SimilarityMetric& metric,
                          const attack::AttackConfig& attack_cfg, double delta,
                          const SampledInputs& samples, int jobs = 1);

struct AuditReport {
  double delta_star_hat = 0.0;
  double p_hat = 1.0;
  std::optional<double> delta;  // the delta p_hat refers to, if requested
  int n_samples = 0;
  ChernoffParams chernoff;
  std::vector<attack::AttackResult> per_sample;
  std::uint64_t sampling_seed = 0;
  std::string source_kind;
  double wall_time_sec = 0.0;
};

// Chernoff-sized audit; delta_star_hat is the empirical max of the
// per-sample attacked gaps (the smallest delta with p_hat = 1 on this
// sample).
AuditReport estimate_delta_star(const posterior::PosteriorEnsemble& ensemble,
                                const similarity::SimilarityMetric& metric,
                                const attack::AttackConfig& attack_cfg,
                                const ChernoffParams& chernoff,
                                const SamplingSource& source, int jobs = 1,
                                std::optional<double> delta_for_p_hat =
                                    std::nullopt);

// Training recipe used by sweeps to build an ensemble of each kind.
struct InferenceSpec {
  nn::Activation activation = nn::Activation::relu;
  posterior::TrainConfig train;
  posterior::HMCConfig hmc;
  double vi_prior_std = 1.0;
  int vi_mc_samples = 2;
  int vi_k = 50;
  int ensemble_members = 5;
};

posterior::PosteriorEnsemble train_by_kind(posterior::InferenceKind kind,
                                           const nn::NetworkArchitecture& arch,
                                           const data::Dataset& train_data,
                                           const InferenceSpec& spec,
                                           std::uint64_t seed);

struct SweepConfig {
  std::vector<int> depths;
  std::vector<int> widths;
  std::vector<double> eps_list;
  std::vector<int> k_list;
  int resamplings = 15;
  std::vector<posterior::InferenceKind> kinds;
  std::vector<std::uint64_t> seeds;
  int analysis_points = 100;

  void validate() const;
};

// depth x width matrix of mean delta_star per inference kind; invalid
// cells carry NaN and an error note.
struct HeatmapTable {
  std::vector<int> depths;
  std::vector<int> widths;
  std::map<posterior::InferenceKind, Eigen::MatrixXd> mean_delta;
  std::vector<std::string> cell_errors;
};

struct CellResult {
  double delta_star = std::numeric_limits<double>::quiet_NaN();
  bool valid = false;
  std::string error;
};

// One heatmap cell: train (depth x width, kind, seed) on the train split,
// audit against the source.
CellResult run_cell(int depth, int width, posterior::InferenceKind kind,
                    std::uint64_t seed, const data::Dataset& train_data,
                    const SamplingSource& source,
                    const similarity::SimilarityMetric& metric,
                    const attack::AttackConfig& attack_cfg,
                    const ChernoffParams& chernoff, const InferenceSpec& spec,
                    int jobs = 1);

HeatmapTable sweep_architectures(const SweepConfig& sweep,
                                 const data::Dataset& train_data,
                                 const SamplingSource& source,
                                 const similarity::SimilarityMetric& metric,
                                 const attack::AttackConfig& attack_cfg,
                                 const ChernoffParams& chernoff,
                                 const InferenceSpec& spec, int jobs = 1);

struct CurvePoint {
  double x = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

// delta_star per epsilon over a shared sample set. The previous epsilon's
// adversary is kept as a candidate at the next epsilon, which makes the
// reported curve non-decreasing by construction.
std::vector<CurvePoint> sweep_epsilon(
    const std::vector<double>& eps_list,
    const posterior::PosteriorEnsemble& ensemble,
    const similarity::SimilarityMetric& metric,
    const attack::AttackConfig& attack_cfg, const ChernoffParams& chernoff,
    const SamplingSource& source, int jobs = 1);

// delta_star distribution over posterior subsamples of size k, for each k:
// `resamplings` draws, each attacking the same `n_points` audit points.
std::vector<CurvePoint> posterior_sample_analysis(
    const posterior::PosteriorEnsemble& ensemble,
    const std::vector<int>& k_list, int resamplings, int n_points,
    const similarity::SimilarityMetric& metric,
    const attack::AttackConfig& attack_cfg, const SamplingSource& source,
    std::uint64_t seed, int jobs = 1);

}  // namespace fairaudit::audit
