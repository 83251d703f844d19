#include "fairaudit/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fairaudit/hash.hpp"
#include "json.hpp"

namespace fairaudit::io {

namespace {

using nlohmann::json;

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("invalid JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json arch_to_json(const nn::NetworkArchitecture& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden_layers", arch.hidden_layers},
          {"activation", nn::to_string(arch.activation)}};
}

nn::NetworkArchitecture arch_from_json(const json& j) {
  nn::NetworkArchitecture arch;
  arch.input_dim = j.at("input_dim").get<int>();
  arch.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  arch.activation =
      nn::activation_from_string(j.at("activation").get<std::string>());
  arch.validate();
  return arch;
}

void write_doubles(const std::filesystem::path& path, const double* data,
                   std::size_t count) {
  // Native x86 layout is little-endian float64, as the file format requires.
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

std::vector<double> read_doubles(const std::filesystem::path& path,
                                 std::size_t expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<double> values(expected);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(expected * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(double))
    throw DataError("truncated binary file " + path.string());
  return values;
}

std::string sample_base(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%03d", index);
  return buf;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void save_weights(const std::filesystem::path& base,
                  const nn::NetworkArchitecture& arch,
                  const nn::WeightVector& w, std::uint64_t seed) {
  w.validate_against(arch);
  json shapes = json::array();
  for (const auto& s : w.shapes)
    shapes.push_back({{"rows", s.rows},
                      {"cols", s.cols},
                      {"weight_offset", s.weight_offset},
                      {"bias_offset", s.bias_offset}});
  json header = {{"format_version", 1},
                 {"architecture", arch_to_json(arch)},
                 {"shape_table", shapes},
                 {"seed", seed},
                 {"length", w.values.size()}};
  std::filesystem::path jpath = base;
  jpath += ".wts.json";
  std::filesystem::path bpath = base;
  bpath += ".wts.bin";
  write_text_file(jpath, header.dump(2) + "\n");
  write_doubles(bpath, w.values.data(), w.values.size());
}

std::pair<nn::NetworkArchitecture, nn::WeightVector> load_weights(
    const std::filesystem::path& base) {
  std::filesystem::path jpath = base;
  jpath += ".wts.json";
  std::filesystem::path bpath = base;
  bpath += ".wts.bin";
  const json header = read_json_file(jpath);
  const nn::NetworkArchitecture arch = arch_from_json(header.at("architecture"));
  const auto length = header.at("length").get<std::size_t>();

  nn::WeightVector w = nn::zero_weights(arch);
  if (length != static_cast<std::size_t>(w.values.size()))
    throw DataError("weight file length mismatch in " + jpath.string());
  const auto values = read_doubles(bpath, length);
  for (std::size_t i = 0; i < length; ++i) w.values(i) = values[i];

  // Cross-check the stored shape table against the architecture.
  const json& shapes = header.at("shape_table");
  if (shapes.size() != w.shapes.size())
    throw DataError("shape table mismatch in " + jpath.string());
  for (std::size_t l = 0; l < w.shapes.size(); ++l) {
    const auto& s = shapes[l];
    if (s.at("rows").get<int>() != w.shapes[l].rows ||
        s.at("cols").get<int>() != w.shapes[l].cols ||
        s.at("weight_offset").get<int>() != w.shapes[l].weight_offset ||
        s.at("bias_offset").get<int>() != w.shapes[l].bias_offset)
      throw DataError("shape table mismatch in " + jpath.string());
  }
  return {arch, std::move(w)};
}

void save_ensemble(const std::filesystem::path& dir,
                   const posterior::PosteriorEnsemble& ensemble) {
  ensemble.validate();
  std::filesystem::create_directories(dir);
  for (int i = 0; i < ensemble.k(); ++i)
    save_weights(dir / sample_base(i), ensemble.arch, ensemble.samples[i],
                 ensemble.seed);
  json manifest = {
      {"format_version", 1},
      {"kind", posterior::to_string(ensemble.kind)},
      {"k", ensemble.k()},
      {"seed", ensemble.seed},
      {"architecture", arch_to_json(ensemble.arch)},
      {"dataset_fingerprint", hash_hex(ensemble.dataset_fingerprint)},
      {"train_accuracy", ensemble.train_accuracy}};
  write_text_file(dir / "ensemble.json", manifest.dump(2) + "\n");
}

posterior::PosteriorEnsemble load_ensemble(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "ensemble.json");
  posterior::PosteriorEnsemble ens;
  ens.kind =
      posterior::inference_kind_from_string(manifest.at("kind").get<std::string>());
  ens.arch = arch_from_json(manifest.at("architecture"));
  ens.seed = manifest.at("seed").get<std::uint64_t>();
  ens.train_accuracy = manifest.value("train_accuracy", 0.0);
  ens.dataset_fingerprint =
      std::stoull(manifest.at("dataset_fingerprint").get<std::string>(),
                  nullptr, 16);
  const int k = manifest.at("k").get<int>();
  for (int i = 0; i < k; ++i) {
    auto [arch_i, w] = load_weights(dir / sample_base(i));
    if (!(arch_i == ens.arch))
      throw DataError("ensemble sample " + std::to_string(i) +
                      " disagrees with the manifest architecture");
    ens.samples.push_back(std::move(w));
  }
  ens.validate();
  return ens;
}

void save_metric(const std::filesystem::path& path,
                 const similarity::SimilarityMetric& metric) {
  json j;
  if (metric.kind() == similarity::SimilarityMetric::Kind::weighted_lp) {
    const auto& lp = metric.as_weighted_lp();
    j["kind"] = "weighted_lp";
    j["p"] = std::isinf(lp.p) ? json("inf") : json(lp.p);
    j["theta"] = std::vector<double>(lp.theta.data(),
                                     lp.theta.data() + lp.theta.size());
  } else {
    const auto& mh = metric.as_mahalanobis();
    j["kind"] = "mahalanobis";
    std::vector<double> flat;  // dense row-major
    flat.reserve(mh.S.size());
    for (Eigen::Index r = 0; r < mh.S.rows(); ++r)
      for (Eigen::Index c = 0; c < mh.S.cols(); ++c)
        flat.push_back(mh.S(r, c));
    j["n"] = mh.S.rows();
    j["S"] = flat;
  }
  write_text_file(path, j.dump(2) + "\n");
}

similarity::SimilarityMetric load_metric(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "weighted_lp") {
    double p;
    if (j.at("p").is_string()) {
      if (j.at("p").get<std::string>() != "inf")
        throw DataError("metric p must be a number or \"inf\"");
      p = similarity::kInfiniteP;
    } else {
      p = j.at("p").get<double>();
    }
    const auto theta = j.at("theta").get<std::vector<double>>();
    Eigen::VectorXd t(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) t(i) = theta[i];
    return similarity::SimilarityMetric::weighted_lp(p, std::move(t));
  }
  if (kind == "mahalanobis") {
    const auto n = j.at("n").get<Eigen::Index>();
    const auto flat = j.at("S").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != n * n)
      throw DataError("metric S has wrong element count");
    Eigen::MatrixXd S(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) S(r, c) = flat[r * n + c];
    return similarity::SimilarityMetric::mahalanobis(std::move(S));
  }
  throw DataError("unknown metric kind '" + kind + "'");
}

std::string report_to_json(const audit::AuditReport& report,
                           const std::string& config_hash) {
  json j;
  j["schema_version"] = 1;
  j["config_hash"] = config_hash;
  j["delta_star_hat"] = report.delta_star_hat;
  j["p_hat"] = report.p_hat;
  if (report.delta) j["delta"] = *report.delta;
  j["n_samples"] = report.n_samples;
  j["chernoff"] = {{"theta_c", report.chernoff.theta_c},
                   {"gamma", report.chernoff.gamma}};
  j["sampling_seed"] = report.sampling_seed;
  j["source_kind"] = report.source_kind;
  // The bound's reading, carried verbatim with the numbers.
  j["guarantee"] =
      "with probability >= 1-gamma the true measure of points whose attacked "
      "gap exceeds delta_star_hat is <= theta_c";
  j["wall_time_sec"] = report.wall_time_sec;
  return j.dump(2) + "\n";
}

void save_report(const std::filesystem::path& dir,
                 const audit::AuditReport& report,
                 const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "report.json", report_to_json(report, config_hash));

  std::ostringstream csv;
  csv << "# config_hash=" << config_hash << "\n";
  csv << "index,dist,pi_origin,pi_adv,local_delta,steps_used\n";
  for (std::size_t i = 0; i < report.per_sample.size(); ++i) {
    const auto& r = report.per_sample[i];
    csv << i << ',' << format_double(r.dist) << ','
        << format_double(r.pi_origin) << ',' << format_double(r.pi_adv) << ','
        << format_double(r.local_delta) << ',' << r.steps_used << "\n";
  }
  write_text_file(dir / "samples.csv", csv.str());
}

void write_heatmap_csv(const std::filesystem::path& path,
                       const audit::HeatmapTable& table,
                       posterior::InferenceKind kind,
                       const std::string& config_hash) {
  const auto it = table.mean_delta.find(kind);
  if (it == table.mean_delta.end())
    throw StructuralError("heatmap table has no data for kind " +
                          posterior::to_string(kind));
  std::ostringstream out;
  out << "# config_hash=" << config_hash << "\n";
  out << "depth\\width";
  for (int w : table.widths) out << ',' << w;
  out << "\n";
  for (std::size_t di = 0; di < table.depths.size(); ++di) {
    out << table.depths[di];
    for (std::size_t wi = 0; wi < table.widths.size(); ++wi)
      out << ',' << format_double(it->second(di, wi));
    out << "\n";
  }
  write_text_file(path, out.str());
}

void write_curve_csv(const std::filesystem::path& path,
                     const std::string& x_name,
                     const std::vector<std::pair<
                         std::string, std::vector<audit::CurvePoint>>>& curves,
                     const std::string& config_hash) {
  if (curves.empty()) throw StructuralError("no curves to write");
  std::ostringstream out;
  out << "# config_hash=" << config_hash << "\n";
  out << x_name;
  for (const auto& [name, _] : curves)
    out << ',' << name << "_mean," << name << "_std";
  out << "\n";
  const std::size_t rows = curves.front().second.size();
  for (const auto& [name, pts] : curves)
    if (pts.size() != rows)
      throw StructuralError("curve '" + name + "' has mismatched length");
  for (std::size_t r = 0; r < rows; ++r) {
    out << format_double(curves.front().second[r].x);
    for (const auto& [_, pts] : curves)
      out << ',' << format_double(pts[r].mean) << ','
          << format_double(pts[r].stddev);
    out << "\n";
  }
  write_text_file(path, out.str());
}

void save_dataset_cache(const std::filesystem::path& dir,
                        const data::Dataset& dataset) {
  std::filesystem::create_directories(dir);
  write_doubles(dir / "X.bin", dataset.X.data(),
                static_cast<std::size_t>(dataset.X.size()));
  json j;
  j["format_version"] = 1;
  j["content_hash"] = hash_hex(dataset.fingerprint());
  j["rows"] = dataset.n_rows();
  j["cols"] = dataset.n_features();
  j["y"] = std::vector<int>(dataset.y.data(),
                            dataset.y.data() + dataset.y.size());
  j["feature_names"] = dataset.feature_names;
  j["sensitive_index"] = dataset.sensitive_index;
  j["split_tag"] = dataset.split_tag;
  json stats = json::array();
  for (const auto& cs : dataset.stats.per_column)
    stats.push_back({{"min", cs.min},
                     {"max", cs.max},
                     {"constant", cs.constant},
                     {"levels", cs.levels}});
  j["stats"] = stats;
  write_text_file(dir / "dataset.json", j.dump(2) + "\n");
}

data::Dataset load_dataset_cache(const std::filesystem::path& dir) {
  const json j = read_json_file(dir / "dataset.json");
  data::Dataset d;
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = read_doubles(dir / "X.bin",
                                 static_cast<std::size_t>(rows * cols));
  d.X = Eigen::MatrixXd(rows, cols);
  std::copy(flat.begin(), flat.end(), d.X.data());
  const auto y = j.at("y").get<std::vector<int>>();
  d.y = Eigen::VectorXi(rows);
  for (Eigen::Index i = 0; i < rows; ++i) d.y(i) = y[i];
  d.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  d.sensitive_index = j.at("sensitive_index").get<int>();
  d.split_tag = j.at("split_tag").get<std::string>();
  for (const auto& cs : j.at("stats")) {
    data::ColumnStats c;
    c.min = cs.at("min").get<double>();
    c.max = cs.at("max").get<double>();
    c.constant = cs.at("constant").get<bool>();
    c.levels = cs.at("levels").get<std::vector<std::string>>();
    d.stats.per_column.push_back(std::move(c));
  }
  if (j.at("content_hash").get<std::string>() != hash_hex(d.fingerprint()))
    throw DataError("dataset cache content hash mismatch in " + dir.string());
  return d;
}

}  // namespace fairaudit::io
