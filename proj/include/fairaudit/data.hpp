#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairaudit/errors.hpp"

namespace fairaudit::data {

enum class ColumnKind { continuous, categorical, binary };
enum class ColumnRole { feature, label, sensitive };

ColumnKind column_kind_from_string(const std::string& s);
ColumnRole column_role_from_string(const std::string& s);
std::string to_string(ColumnKind k);
std::string to_string(ColumnRole r);

struct SchemaColumn {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  ColumnRole role = ColumnRole::feature;
};

// Declared CSV layout. Exactly one binary label column and exactly one
// sensitive column (binary or continuous, so it stays a single column after
// one-hot expansion).
struct DatasetSchema {
  std::vector<SchemaColumn> columns;

  void validate() const;
  int label_index() const;
  int sensitive_index() const;

  static DatasetSchema from_json_file(const std::filesystem::path& path);
  static DatasetSchema from_json_string(const std::string& text);
  std::string to_json_string() const;
};

// Typed columns straight from CSV, before one-hot/min-max.
struct RawColumn {
  SchemaColumn meta;
  std::vector<double> numeric;        // continuous / binary values
  std::vector<std::string> category;  // categorical values
};

struct RawDataset {
  DatasetSchema schema;
  std::vector<RawColumn> columns;  // feature + sensitive columns, schema order
  std::vector<int> labels;
  int n_rows = 0;
  int dropped_rows = 0;  // rows removed for missing cells
};

// Per raw feature column: min/max for continuous scaling, the ordered level
// list for one-hot layout. Fit on the train split, applied everywhere.
struct ColumnStats {
  double min = 0.0;
  double max = 1.0;
  bool constant = false;
  std::vector<std::string> levels;  // categorical only, sorted
};

struct NormalizationStats {
  std::vector<ColumnStats> per_column;  // aligned with RawDataset::columns
};

// Normalized numeric view: X in [0,1]^n, binary labels, expanded feature
// names, sensitive column tracked through expansion.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXi y;
  std::vector<std::string> feature_names;
  int sensitive_index = -1;
  NormalizationStats stats;
  std::string split_tag = "full";
  int unseen_category_count = 0;

  // Ground-truth logit gradient for synthetic data; empty otherwise.
  Eigen::VectorXd true_coefficients;

  int n_rows() const { return static_cast<int>(X.rows()); }
  int n_features() const { return static_cast<int>(X.cols()); }
  std::uint64_t fingerprint() const;
};

RawDataset load_csv(const std::filesystem::path& path,
                    const DatasetSchema& schema);

// One-hot + min-max. With train_stats == nullptr the stats are fit from
// `raw` itself; otherwise they are applied as-is (test-split transform).
Dataset preprocess(const RawDataset& raw,
                   const NormalizationStats* train_stats = nullptr);

// Label-stratified, reproducible splits.
std::pair<RawDataset, RawDataset> split(const RawDataset& raw,
                                        double train_fraction,
                                        std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& dataset,
                                  double train_fraction, std::uint64_t seed);

// Undo min-max scaling of one raw continuous column.
double denormalize(const ColumnStats& stats, double value);

// Synthetic fixture: n_continuous uniform features plus one binary sensitive
// attribute; labels drawn from a known linear logit with a bias_strength
// coefficient on the sensitive attribute. The generating gradient is
// recorded in true_coefficients.
Dataset synthesize(int n, int n_continuous, double bias_strength,
                   std::uint64_t seed);

}  // namespace fairaudit::data
