#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairaudit/attack.hpp"
#include "fairaudit/audit.hpp"
#include "fairaudit/data.hpp"
#include "fairaudit/nn.hpp"
#include "fairaudit/posterior.hpp"
#include "fairaudit/similarity.hpp"

namespace fairaudit::cli {

struct DatasetSection {
  enum class Kind { csv, synthetic };
  Kind kind = Kind::synthetic;
  std::filesystem::path path;
  std::filesystem::path schema_path;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  // synthetic generator parameters
  int n = 4000;
  int n_continuous = 5;
  double bias_strength = 0.0;
};

struct ModelSection {
  std::vector<int> hidden_layers = {16};
  nn::Activation activation = nn::Activation::relu;
  posterior::InferenceKind inference = posterior::InferenceKind::deterministic;
  posterior::TrainConfig train;
  posterior::HMCConfig hmc;
  double vi_prior_std = 1.0;
  int vi_mc_samples = 2;
  int vi_k = 50;
  int ensemble_members = 5;
};

struct MetricSection {
  enum class Source { fit, literal, file };
  similarity::SimilarityMetric::Kind kind =
      similarity::SimilarityMetric::Kind::weighted_lp;
  Source source = Source::fit;
  double p = 2.0;
  double epsilon_floor = 0.01;
  std::vector<double> theta;            // literal weighted lp
  std::vector<std::vector<double>> S;   // literal Mahalanobis
  std::filesystem::path path;           // previously fit metric JSON
};

struct AttackSection {
  attack::AttackKind kind = attack::AttackKind::fair_pgd;
  double eps = 0.1;
  int pgd_steps = 25;
  double pgd_step_fraction = 0.0;  // <=0: default 2/pgd_steps
  bool clamp_to_unit_box = true;
  attack::LabelRule label_rule = attack::LabelRule::predicted;
  std::uint64_t seed = 0;
};

struct AuditSection {
  audit::ChernoffParams chernoff;
  audit::SamplingSource::Kind source =
      audit::SamplingSource::Kind::dataset_empirical;
  std::optional<double> delta;
  std::filesystem::path ensemble_dir;  // empty: <output_dir>/ensemble
  std::uint64_t seed = 0;
};

struct SweepSection {
  std::vector<int> depths;
  std::vector<int> widths;
  std::vector<double> eps_list;
  std::vector<int> k_list;
  int resamplings = 15;
  std::vector<posterior::InferenceKind> kinds;
  std::vector<std::uint64_t> seeds;
  int analysis_points = 100;
};

struct OracleSection {
  int points = 20;
  int grid = 100;
  int pgd_steps = 50;
};

// Whole-run configuration; one JSON file drives every command. All
// validation happens at load time, before any work starts.
struct RunConfig {
  std::uint64_t master_seed = 0;
  std::filesystem::path output_dir = "out";
  DatasetSection dataset;
  ModelSection model;
  MetricSection metric;
  AttackSection attack;
  AuditSection audit;
  std::optional<SweepSection> sweep;
  OracleSection oracle;

  // FNV-1a of the canonicalized effective config, excluding output_dir and
  // parallelism, so relocated or differently parallelized runs of the same
  // experiment share a hash.
  std::string config_hash;

  // Seeds given explicitly in the JSON stay fixed; the rest follow
  // master_seed through finalize().
  struct ExplicitSeeds {
    bool dataset = false;
    bool train = false;
    bool hmc = false;
    bool attack = false;
    bool audit = false;
  } explicit_seeds;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_json_string(const std::string& text);

  // Re-derives section seeds from master_seed and recomputes config_hash;
  // used after CLI overrides.
  void finalize();
  void validate() const;
};

}  // namespace fairaudit::cli
