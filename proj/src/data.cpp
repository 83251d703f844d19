#include "fairaudit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "fairaudit/hash.hpp"
#include "fairaudit/nn.hpp"
#include "fairaudit/rng.hpp"
#include "json.hpp"

namespace fairaudit::data {

namespace {

bool is_missing(const std::string& cell) { return cell.empty() || cell == "?"; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (auto& cell : cells) {
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t");
    cell = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
  }
  return cells;
}

double parse_double(const std::string& cell, int row, const std::string& col) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("unparseable numeric cell '" + cell + "' in column '" +
                    col + "' row " + std::to_string(row));
  }
}

// Binary columns accept 0/1 directly or exactly two distinct levels mapped
// in sorted order.
std::vector<int> map_binary(const std::vector<std::string>& cells,
                            const std::string& col) {
  std::set<std::string> levels(cells.begin(), cells.end());
  std::vector<int> out(cells.size());
  if (std::all_of(levels.begin(), levels.end(),
                  [](const std::string& s) { return s == "0" || s == "1"; })) {
    for (std::size_t i = 0; i < cells.size(); ++i) out[i] = cells[i] == "1";
    return out;
  }
  if (levels.size() != 2)
    throw DataError("binary column '" + col + "' has " +
                    std::to_string(levels.size()) + " distinct values");
  const std::string& one = *std::next(levels.begin());
  for (std::size_t i = 0; i < cells.size(); ++i) out[i] = cells[i] == one;
  return out;
}

}  // namespace

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "continuous") return ColumnKind::continuous;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "binary") return ColumnKind::binary;
  throw ConfigError("unknown column kind '" + s + "'");
}

ColumnRole column_role_from_string(const std::string& s) {
  if (s == "feature") return ColumnRole::feature;
  if (s == "label") return ColumnRole::label;
  if (s == "sensitive") return ColumnRole::sensitive;
  throw ConfigError("unknown column role '" + s + "'");
}

std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::continuous: return "continuous";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::binary: return "binary";
  }
  return "?";
}

std::string to_string(ColumnRole r) {
  switch (r) {
    case ColumnRole::feature: return "feature";
    case ColumnRole::label: return "label";
    case ColumnRole::sensitive: return "sensitive";
  }
  return "?";
}

void DatasetSchema::validate() const {
  if (columns.empty()) throw ConfigError("schema has no columns");
  std::set<std::string> names;
  int labels = 0, sensitives = 0;
  for (const auto& c : columns) {
    if (!names.insert(c.name).second)
      throw ConfigError("duplicate column name '" + c.name + "'");
    if (c.role == ColumnRole::label) {
      ++labels;
      if (c.kind != ColumnKind::binary)
        throw ConfigError("label column must be binary");
    }
    if (c.role == ColumnRole::sensitive) {
      ++sensitives;
      if (c.kind == ColumnKind::categorical)
        throw ConfigError(
            "sensitive column must be binary or continuous so it stays a "
            "single column after one-hot expansion");
    }
  }
  if (labels != 1) throw ConfigError("schema needs exactly one label column");
  if (sensitives != 1)
    throw ConfigError("schema needs exactly one sensitive column");
}

int DatasetSchema::label_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].role == ColumnRole::label) return static_cast<int>(i);
  throw ConfigError("schema has no label column");
}

int DatasetSchema::sensitive_index() const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].role == ColumnRole::sensitive) return static_cast<int>(i);
  throw ConfigError("schema has no sensitive column");
}

DatasetSchema DatasetSchema::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

DatasetSchema DatasetSchema::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid schema JSON: ") + e.what());
  }
  DatasetSchema schema;
  if (!j.contains("columns") || !j["columns"].is_array())
    throw ConfigError("schema JSON must contain a 'columns' array");
  for (const auto& c : j["columns"]) {
    SchemaColumn col;
    col.name = c.at("name").get<std::string>();
    col.kind = column_kind_from_string(c.at("kind").get<std::string>());
    col.role = column_role_from_string(c.at("role").get<std::string>());
    schema.columns.push_back(col);
  }
  schema.validate();
  return schema;
}

std::string DatasetSchema::to_json_string() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns)
    cols.push_back({{"name", c.name},
                    {"kind", to_string(c.kind)},
                    {"role", to_string(c.role)}});
  return nlohmann::json{{"columns", cols}}.dump();
}

RawDataset load_csv(const std::filesystem::path& path,
                    const DatasetSchema& schema) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV file");
  const auto header = split_csv_line(line);
  if (header.size() != schema.columns.size())
    throw DataError("CSV header has " + std::to_string(header.size()) +
                    " columns, schema declares " +
                    std::to_string(schema.columns.size()));
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] != schema.columns[i].name)
      throw DataError("CSV header column " + std::to_string(i) + " is '" +
                      header[i] + "', schema says '" +
                      schema.columns[i].name + "'");

  std::vector<std::vector<std::string>> rows;
  int dropped = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != schema.columns.size())
      throw DataError("CSV row " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells");
    if (std::any_of(cells.begin(), cells.end(), is_missing)) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw DataError("no usable rows in " + path.string());

  RawDataset raw;
  raw.schema = schema;
  raw.n_rows = static_cast<int>(rows.size());
  raw.dropped_rows = dropped;

  const int label_col = schema.label_index();
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const SchemaColumn& meta = schema.columns[c];
    std::vector<std::string> cells(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) cells[r] = rows[r][c];

    if (static_cast<int>(c) == label_col) {
      raw.labels = map_binary(cells, meta.name);
      continue;
    }
    RawColumn col;
    col.meta = meta;
    switch (meta.kind) {
      case ColumnKind::continuous:
        col.numeric.resize(cells.size());
        for (std::size_t r = 0; r < cells.size(); ++r)
          col.numeric[r] =
              parse_double(cells[r], static_cast<int>(r), meta.name);
        break;
      case ColumnKind::binary: {
        const auto mapped = map_binary(cells, meta.name);
        col.numeric.assign(mapped.begin(), mapped.end());
        break;
      }
      case ColumnKind::categorical:
        col.category = std::move(cells);
        break;
    }
    raw.columns.push_back(std::move(col));
  }
  return raw;
}

Dataset preprocess(const RawDataset& raw, const NormalizationStats* train_stats) {
  if (raw.n_rows == 0) throw DataError("empty dataset");
  NormalizationStats stats;
  if (train_stats) {
    if (train_stats->per_column.size() != raw.columns.size())
      throw StructuralError("normalization stats do not match dataset");
    stats = *train_stats;
  } else {
    for (const auto& col : raw.columns) {
      ColumnStats cs;
      if (col.meta.kind == ColumnKind::categorical) {
        std::set<std::string> levels(col.category.begin(), col.category.end());
        cs.levels.assign(levels.begin(), levels.end());
      } else {
        cs.min = *std::min_element(col.numeric.begin(), col.numeric.end());
        cs.max = *std::max_element(col.numeric.begin(), col.numeric.end());
        cs.constant = cs.min == cs.max;
      }
      stats.per_column.push_back(std::move(cs));
    }
  }

  int n_features = 0;
  for (std::size_t c = 0; c < raw.columns.size(); ++c)
    n_features += raw.columns[c].meta.kind == ColumnKind::categorical
                      ? static_cast<int>(stats.per_column[c].levels.size())
                      : 1;

  Dataset out;
  out.X = Eigen::MatrixXd::Zero(raw.n_rows, n_features);
  out.y = Eigen::VectorXi(raw.n_rows);
  for (int r = 0; r < raw.n_rows; ++r) out.y(r) = raw.labels[r];
  out.stats = stats;

  int offset = 0;
  for (std::size_t c = 0; c < raw.columns.size(); ++c) {
    const RawColumn& col = raw.columns[c];
    const ColumnStats& cs = stats.per_column[c];
    if (col.meta.role == ColumnRole::sensitive) out.sensitive_index = offset;
    if (col.meta.kind == ColumnKind::categorical) {
      std::map<std::string, int> index;
      for (std::size_t l = 0; l < cs.levels.size(); ++l)
        index[cs.levels[l]] = static_cast<int>(l);
      for (int r = 0; r < raw.n_rows; ++r) {
        auto it = index.find(col.category[r]);
        if (it == index.end())
          ++out.unseen_category_count;  // unseen level: all-zeros row block
        else
          out.X(r, offset + it->second) = 1.0;
      }
      for (const auto& level : cs.levels)
        out.feature_names.push_back(col.meta.name + "=" + level);
      offset += static_cast<int>(cs.levels.size());
    } else {
      for (int r = 0; r < raw.n_rows; ++r) {
        double v = col.numeric[r];
        if (col.meta.kind == ColumnKind::binary) {
          out.X(r, offset) = v;
        } else if (cs.constant) {
          out.X(r, offset) = 0.0;
        } else {
          v = (v - cs.min) / (cs.max - cs.min);
          out.X(r, offset) = std::clamp(v, 0.0, 1.0);
        }
      }
      out.feature_names.push_back(col.meta.name);
      ++offset;
    }
  }
  return out;
}

double denormalize(const ColumnStats& stats, double value) {
  if (stats.constant) return stats.min;
  return stats.min + value * (stats.max - stats.min);
}

namespace {

// Shared stratified index split; returns (train_indices, test_indices),
// both in ascending order so row order is preserved within each side.
std::pair<std::vector<int>, std::vector<int>> stratified_indices(
    const std::vector<int>& labels, double train_fraction,
    std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw ConfigError("train fraction must be in (0,1)");
  std::vector<int> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i] ? 1 : 0].push_back(static_cast<int>(i));

  Rng rng(seed);
  std::vector<int> train, test;
  for (auto& cls : by_class) {
    // Fisher-Yates with our own Rng so splits are reproducible everywhere.
    for (std::size_t i = cls.size(); i > 1; --i) {
      const std::size_t j = rng.below(i);
      std::swap(cls[i - 1], cls[j]);
    }
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(cls.size())));
    for (std::size_t i = 0; i < cls.size(); ++i)
      (i < n_train ? train : test).push_back(cls[i]);
  }
  if (train.empty() || test.empty())
    throw DataError("split produced an empty side");
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

}  // namespace

std::pair<RawDataset, RawDataset> split(const RawDataset& raw,
                                        double train_fraction,
                                        std::uint64_t seed) {
  auto [train_idx, test_idx] =
      stratified_indices(raw.labels, train_fraction, seed);
  auto take = [&](const std::vector<int>& idx) {
    RawDataset part;
    part.schema = raw.schema;
    part.n_rows = static_cast<int>(idx.size());
    part.dropped_rows = raw.dropped_rows;
    part.labels.reserve(idx.size());
    for (int i : idx) part.labels.push_back(raw.labels[i]);
    for (const auto& col : raw.columns) {
      RawColumn c;
      c.meta = col.meta;
      if (col.meta.kind == ColumnKind::categorical) {
        c.category.reserve(idx.size());
        for (int i : idx) c.category.push_back(col.category[i]);
      } else {
        c.numeric.reserve(idx.size());
        for (int i : idx) c.numeric.push_back(col.numeric[i]);
      }
      part.columns.push_back(std::move(c));
    }
    return part;
  };
  return {take(train_idx), take(test_idx)};
}

std::pair<Dataset, Dataset> split(const Dataset& dataset,
                                  double train_fraction, std::uint64_t seed) {
  std::vector<int> labels(dataset.n_rows());
  for (int i = 0; i < dataset.n_rows(); ++i) labels[i] = dataset.y(i);
  auto [train_idx, test_idx] =
      stratified_indices(labels, train_fraction, seed);
  auto take = [&](const std::vector<int>& idx, const char* tag) {
    Dataset part;
    part.X = Eigen::MatrixXd(idx.size(), dataset.n_features());
    part.y = Eigen::VectorXi(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      part.X.row(r) = dataset.X.row(idx[r]);
      part.y(r) = dataset.y(idx[r]);
    }
    part.feature_names = dataset.feature_names;
    part.sensitive_index = dataset.sensitive_index;
    part.stats = dataset.stats;
    part.split_tag = tag;
    part.true_coefficients = dataset.true_coefficients;
    return part;
  };
  return {take(train_idx, "train"), take(test_idx, "test")};
}

Dataset synthesize(int n, int n_continuous, double bias_strength,
                   std::uint64_t seed) {
  if (n < 10) throw ConfigError("synthetic dataset needs n >= 10");
  if (n_continuous < 1)
    throw ConfigError("synthetic dataset needs >= 1 continuous feature");

  Rng rng(seed);
  const int n_features = n_continuous + 1;  // sensitive attribute is last
  Dataset out;
  out.X = Eigen::MatrixXd(n, n_features);
  out.y = Eigen::VectorXi(n);
  out.sensitive_index = n_continuous;
  out.split_tag = "synthetic";

  // Generating coefficients, fixed per seed; features enter the logit
  // centered so classes stay roughly balanced.
  Eigen::VectorXd beta(n_continuous);
  for (int j = 0; j < n_continuous; ++j) beta(j) = 1.5 * rng.normal();

  out.true_coefficients = Eigen::VectorXd(n_features);
  out.true_coefficients.head(n_continuous) = 2.0 * beta;
  out.true_coefficients(n_continuous) = 2.0 * bias_strength;

  for (int i = 0; i < n; ++i) {
    double logit = 0.0;
    for (int j = 0; j < n_continuous; ++j) {
      out.X(i, j) = rng.uniform();
      logit += beta(j) * (2.0 * out.X(i, j) - 1.0);
    }
    const double s = rng.uniform() < 0.5 ? 0.0 : 1.0;
    out.X(i, n_continuous) = s;
    logit += bias_strength * (2.0 * s - 1.0);
    out.y(i) = rng.uniform() < nn::sigmoid(logit) ? 1 : 0;
  }

  out.stats.per_column.resize(n_features);
  for (auto& cs : out.stats.per_column) {
    cs.min = 0.0;
    cs.max = 1.0;
  }
  for (int j = 0; j < n_continuous; ++j)
    out.feature_names.push_back("f" + std::to_string(j));
  out.feature_names.push_back("sensitive");
  return out;
}

std::uint64_t Dataset::fingerprint() const {
  std::uint64_t h = fnv1a(X.data(), sizeof(double) * X.size());
  h = fnv1a(y.data(), sizeof(int) * y.size(), h);
  h = fnv1a(&sensitive_index, sizeof(sensitive_index), h);
  for (const auto& name : feature_names) h = fnv1a(name, h);
  return h;
}

}  // namespace fairaudit::data
