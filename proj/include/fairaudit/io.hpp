#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "fairaudit/audit.hpp"
#include "fairaudit/data.hpp"
#include "fairaudit/posterior.hpp"
#include "fairaudit/similarity.hpp"

namespace fairaudit::io {

// Weight files come in pairs: <base>.wts.json carries the architecture and
// shape table, <base>.wts.bin the flat little-endian float64 values.
void save_weights(const std::filesystem::path& base,
                  const nn::NetworkArchitecture& arch,
                  const nn::WeightVector& w, std::uint64_t seed);
std::pair<nn::NetworkArchitecture, nn::WeightVector> load_weights(
    const std::filesystem::path& base);

// Ensemble directory: sample_###.wts.{json,bin} plus ensemble.json manifest.
void save_ensemble(const std::filesystem::path& dir,
                   const posterior::PosteriorEnsemble& ensemble);
posterior::PosteriorEnsemble load_ensemble(const std::filesystem::path& dir);

void save_metric(const std::filesystem::path& path,
                 const similarity::SimilarityMetric& metric);
similarity::SimilarityMetric load_metric(const std::filesystem::path& path);

// report.json + per-sample CSV (index,dist,pi_origin,pi_adv,local_delta,
// steps_used).
void save_report(const std::filesystem::path& dir,
                 const audit::AuditReport& report,
                 const std::string& config_hash);
std::string report_to_json(const audit::AuditReport& report,
                           const std::string& config_hash);

void write_heatmap_csv(const std::filesystem::path& path,
                       const audit::HeatmapTable& table,
                       posterior::InferenceKind kind,
                       const std::string& config_hash);

void write_curve_csv(const std::filesystem::path& path,
                     const std::string& x_name,
                     const std::vector<std::pair<
                         std::string, std::vector<audit::CurvePoint>>>& curves,
                     const std::string& config_hash);

// Preprocessed dataset cache: X/y as binary matrix plus JSON stats, keyed
// by content hash.
void save_dataset_cache(const std::filesystem::path& dir,
                        const data::Dataset& dataset);
data::Dataset load_dataset_cache(const std::filesystem::path& dir);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace fairaudit::io
