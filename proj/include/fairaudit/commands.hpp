#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "fairaudit/config.hpp"

namespace fairaudit::cli {

struct LoadedData {
  data::Dataset train;
  data::Dataset test;
};

// CSV path: load -> stratified raw split -> preprocess with train-split
// statistics. Synthetic path: generate -> stratified split.
LoadedData load_data(const DatasetSection& section);

similarity::SimilarityMetric build_metric(const RunConfig& cfg,
                                          const data::Dataset& train);
attack::AttackConfig build_attack(const AttackSection& section,
                                  int n_features);
audit::InferenceSpec build_spec(const ModelSection& model);

// Attack-to-oracle quality ratio; a flat cell (0/0) counts as an exact
// match rather than a division hazard.
double oracle_match_ratio(double attack_delta, double oracle_delta);

// Command bodies; the binary maps exceptions onto exit codes. All print
// their human-readable summary to `out`.
void cmd_train(const RunConfig& cfg, int jobs, std::ostream& out);
void cmd_fit_metric(const RunConfig& cfg, std::ostream& out);
void cmd_audit(const RunConfig& cfg, int jobs, std::ostream& out,
               const std::filesystem::path& ensemble_override = {});
void cmd_sweep(const RunConfig& cfg, int jobs, std::ostream& out);
void cmd_analyze_posterior(const RunConfig& cfg, int jobs, std::ostream& out,
                           std::vector<std::filesystem::path> ensembles = {});
void cmd_oracle_check(const RunConfig& cfg, int jobs, std::ostream& out);

}  // namespace fairaudit::cli
