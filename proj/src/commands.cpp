#include "fairaudit/commands.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "fairaudit/hash.hpp"
#include "fairaudit/io.hpp"
#include "fairaudit/parallel.hpp"
#include "fairaudit/rng.hpp"
#include "json.hpp"

namespace fairaudit::cli {

namespace {

using nlohmann::json;

std::uint64_t seed_for_kind(const ModelSection& model) {
  return model.inference == posterior::InferenceKind::hmc ? model.hmc.seed
                                                          : model.train.seed;
}

std::filesystem::path default_ensemble_dir(const RunConfig& cfg) {
  if (!cfg.audit.ensemble_dir.empty()) return cfg.audit.ensemble_dir;
  return cfg.output_dir / "ensemble";
}

audit::SamplingSource build_source(const RunConfig& cfg,
                                   const data::Dataset& test) {
  if (cfg.audit.source == audit::SamplingSource::Kind::dataset_empirical)
    return audit::SamplingSource::empirical(test, cfg.audit.seed);
  return audit::SamplingSource::uniform(test.n_features(), cfg.audit.seed);
}

nn::NetworkArchitecture build_arch(const ModelSection& model, int input_dim) {
  nn::NetworkArchitecture arch;
  arch.input_dim = input_dim;
  arch.hidden_layers = model.hidden_layers;
  arch.activation = model.activation;
  arch.validate();
  return arch;
}

}  // namespace

LoadedData load_data(const DatasetSection& section) {
  if (section.kind == DatasetSection::Kind::csv) {
    const data::DatasetSchema schema =
        data::DatasetSchema::from_json_file(section.schema_path);
    const data::RawDataset raw = data::load_csv(section.path, schema);
    auto [train_raw, test_raw] =
        data::split(raw, section.train_fraction, section.seed);
    data::Dataset train = data::preprocess(train_raw);
    train.split_tag = "train";
    data::Dataset test = data::preprocess(test_raw, &train.stats);
    test.split_tag = "test";
    return {std::move(train), std::move(test)};
  }
  const data::Dataset full = data::synthesize(
      section.n, section.n_continuous, section.bias_strength, section.seed);
  auto [train, test] =
      data::split(full, section.train_fraction, derive_seed(section.seed, 7));
  return {std::move(train), std::move(test)};
}

similarity::SimilarityMetric build_metric(const RunConfig& cfg,
                                          const data::Dataset& train) {
  const MetricSection& m = cfg.metric;
  switch (m.source) {
    case MetricSection::Source::file:
      return io::load_metric(m.path);
    case MetricSection::Source::literal: {
      if (m.kind == similarity::SimilarityMetric::Kind::weighted_lp) {
        Eigen::VectorXd theta(m.theta.size());
        for (std::size_t i = 0; i < m.theta.size(); ++i) theta(i) = m.theta[i];
        return similarity::SimilarityMetric::weighted_lp(m.p, std::move(theta));
      }
      const auto n = static_cast<Eigen::Index>(m.S.size());
      Eigen::MatrixXd S(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(m.S[r].size()) != n)
          throw ConfigError("literal metric S must be square");
        for (Eigen::Index c = 0; c < n; ++c) S(r, c) = m.S[r][c];
      }
      return similarity::SimilarityMetric::mahalanobis(std::move(S));
    }
    case MetricSection::Source::fit:
      if (m.kind == similarity::SimilarityMetric::Kind::weighted_lp) {
        similarity::MetricFitConfig fit;
        fit.method = similarity::MetricFitConfig::Method::correlation_weights;
        fit.epsilon_floor = m.epsilon_floor;
        fit.p = m.p;
        return similarity::fit_weighted_lp(train, fit);
      }
      return similarity::fit_mahalanobis(train);
  }
  throw StructuralError("unreachable metric source");
}

attack::AttackConfig build_attack(const AttackSection& section,
                                  int n_features) {
  attack::AttackConfig cfg;
  cfg.kind = section.kind;
  cfg.eps = section.eps;
  cfg.pgd_steps = section.pgd_steps;
  cfg.pgd_step_fraction = section.pgd_step_fraction;
  if (section.clamp_to_unit_box)
    cfg.clamp_box = attack::ClampBox::unit(n_features);
  cfg.label_rule = section.label_rule;
  cfg.seed = section.seed;
  cfg.validate();
  return cfg;
}

double oracle_match_ratio(double attack_delta, double oracle_delta) {
  return oracle_delta > 0.0 ? attack_delta / oracle_delta : 1.0;
}

audit::InferenceSpec build_spec(const ModelSection& model) {
  audit::InferenceSpec spec;
  spec.activation = model.activation;
  spec.train = model.train;
  spec.hmc = model.hmc;
  spec.vi_prior_std = model.vi_prior_std;
  spec.vi_mc_samples = model.vi_mc_samples;
  spec.vi_k = model.vi_k;
  spec.ensemble_members = model.ensemble_members;
  return spec;
}

void cmd_train(const RunConfig& cfg, int jobs, std::ostream& out) {
  (void)jobs;  // training runs are single-threaded for reproducibility
  const LoadedData loaded = load_data(cfg.dataset);
  const nn::NetworkArchitecture arch =
      build_arch(cfg.model, loaded.train.n_features());
  const audit::InferenceSpec spec = build_spec(cfg.model);
  const posterior::PosteriorEnsemble ens = audit::train_by_kind(
      cfg.model.inference, arch, loaded.train, spec, seed_for_kind(cfg.model));

  const std::filesystem::path dir = cfg.output_dir / "ensemble";
  io::save_ensemble(dir, ens);
  out << "kind=" << posterior::to_string(ens.kind) << " k=" << ens.k()
      << " seed=" << ens.seed << " train_accuracy=" << ens.train_accuracy
      << "\n";
  out << "config_hash=" << cfg.config_hash << "\n";
  out << "wrote " << dir.string() << "\n";
}

void cmd_fit_metric(const RunConfig& cfg, std::ostream& out) {
  const LoadedData loaded = load_data(cfg.dataset);
  const similarity::SimilarityMetric metric =
      build_metric(cfg, loaded.train);
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path path = cfg.output_dir / "metric.json";
  io::save_metric(path, metric);

  if (metric.kind() == similarity::SimilarityMetric::Kind::weighted_lp) {
    const auto& lp = metric.as_weighted_lp();
    out << "kind=weighted_lp p="
        << (std::isinf(lp.p) ? std::string("inf") : io::format_double(lp.p))
        << "\ntheta=";
    for (Eigen::Index i = 0; i < lp.theta.size(); ++i)
      out << (i ? "," : "") << io::format_double(lp.theta(i));
  } else {
    const auto& mh = metric.as_mahalanobis();
    out << "kind=mahalanobis\ndiag(S)=";
    for (Eigen::Index i = 0; i < mh.S.rows(); ++i)
      out << (i ? "," : "") << io::format_double(mh.S(i, i));
  }
  out << "\nwrote " << path.string() << "\n";
}

void cmd_audit(const RunConfig& cfg, int jobs, std::ostream& out,
               const std::filesystem::path& ensemble_override) {
  const LoadedData loaded = load_data(cfg.dataset);
  const similarity::SimilarityMetric metric = build_metric(cfg, loaded.train);
  const std::filesystem::path dir = ensemble_override.empty()
                                        ? default_ensemble_dir(cfg)
                                        : ensemble_override;
  const posterior::PosteriorEnsemble ens = io::load_ensemble(dir);
  if (ens.arch.input_dim != loaded.test.n_features())
    throw DataError("ensemble input width does not match the dataset");

  const attack::AttackConfig attack_cfg =
      build_attack(cfg.attack, loaded.test.n_features());
  const audit::SamplingSource source = build_source(cfg, loaded.test);
  const audit::AuditReport report =
      audit::estimate_delta_star(ens, metric, attack_cfg, cfg.audit.chernoff,
                                 source, jobs, cfg.audit.delta);

  io::save_report(cfg.output_dir, report, cfg.config_hash);
  out << "delta_star_hat=" << io::format_double(report.delta_star_hat) << "\n";
  out << "n_samples=" << report.n_samples
      << " theta_c=" << io::format_double(report.chernoff.theta_c)
      << " gamma=" << io::format_double(report.chernoff.gamma) << "\n";
  if (report.delta)
    out << "p_hat(delta=" << io::format_double(*report.delta)
        << ")=" << io::format_double(report.p_hat) << "\n";
  out << "wrote " << (cfg.output_dir / "report.json").string() << "\n";
}

namespace {

// Content-addressed sweep cells: completed cells are skipped on resume.
std::filesystem::path cell_path(const RunConfig& cfg,
                                const std::string& identity) {
  return cfg.output_dir / "cells" /
         ("cell_" + hash_hex(fnv1a(cfg.config_hash + ":" + identity)) +
          ".json");
}

std::optional<json> read_cell(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return std::nullopt;  // treat a torn cell file as absent
  }
  return j;
}

void write_cell(const std::filesystem::path& path, const json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

}  // namespace

void cmd_sweep(const RunConfig& cfg, int jobs, std::ostream& out) {
  if (!cfg.sweep) throw ConfigError("config has no sweep section");
  const SweepSection& sw = *cfg.sweep;
  const LoadedData loaded = load_data(cfg.dataset);
  const similarity::SimilarityMetric metric = build_metric(cfg, loaded.train);
  const attack::AttackConfig attack_cfg =
      build_attack(cfg.attack, loaded.test.n_features());
  const audit::SamplingSource source = build_source(cfg, loaded.test);
  const audit::InferenceSpec spec = build_spec(cfg.model);
  std::filesystem::create_directories(cfg.output_dir);

  if (!sw.depths.empty() && !sw.widths.empty()) {
    struct CellJob {
      posterior::InferenceKind kind;
      int depth, width;
      std::uint64_t seed;
      std::filesystem::path path;
      audit::CellResult result;
      bool cached = false;
    };
    std::vector<CellJob> cells;
    for (auto kind : sw.kinds)
      for (int depth : sw.depths)
        for (int width : sw.widths)
          for (auto seed : sw.seeds) {
            CellJob c;
            c.kind = kind;
            c.depth = depth;
            c.width = width;
            c.seed = seed;
            c.path = cell_path(
                cfg, "arch:" + posterior::to_string(kind) + ":" +
                         std::to_string(depth) + "x" + std::to_string(width) +
                         ":" + std::to_string(seed));
            if (auto j = read_cell(c.path)) {
              c.result.valid = j->at("valid").get<bool>();
              c.result.delta_star = j->value("delta_star", 0.0);
              c.result.error = j->value("error", "");
              c.cached = true;
            }
            cells.push_back(std::move(c));
          }

    std::vector<int> todo;
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (!cells[i].cached) todo.push_back(static_cast<int>(i));
    parallel_for(static_cast<int>(todo.size()), jobs, [&](int t) {
      CellJob& c = cells[todo[t]];
      c.result = audit::run_cell(c.depth, c.width, c.kind, c.seed,
                                 loaded.train, source, metric, attack_cfg,
                                 cfg.audit.chernoff, spec, 1);
      write_cell(c.path, json{{"valid", c.result.valid},
                              {"delta_star", c.result.delta_star},
                              {"error", c.result.error}});
    });

    audit::HeatmapTable table;
    table.depths = sw.depths;
    table.widths = sw.widths;
    for (auto kind : sw.kinds) {
      Eigen::MatrixXd mean = Eigen::MatrixXd::Constant(
          sw.depths.size(), sw.widths.size(),
          std::numeric_limits<double>::quiet_NaN());
      for (std::size_t di = 0; di < sw.depths.size(); ++di)
        for (std::size_t wi = 0; wi < sw.widths.size(); ++wi) {
          double acc = 0.0;
          int valid = 0;
          for (const auto& c : cells) {
            if (c.kind != kind || c.depth != sw.depths[di] ||
                c.width != sw.widths[wi])
              continue;
            if (c.result.valid) {
              acc += c.result.delta_star;
              ++valid;
            } else {
              table.cell_errors.push_back(posterior::to_string(kind) +
                                          " depth=" +
                                          std::to_string(c.depth) + " width=" +
                                          std::to_string(c.width) + ": " +
                                          c.result.error);
            }
          }
          if (valid > 0) mean(di, wi) = acc / valid;
        }
      table.mean_delta[kind] = std::move(mean);
      const std::filesystem::path path =
          cfg.output_dir / ("heatmap_" + posterior::to_string(kind) + ".csv");
      io::write_heatmap_csv(path, table, kind, cfg.config_hash);
      out << "wrote " << path.string() << "\n";
    }
    for (const auto& err : table.cell_errors)
      out << "cell failed: " << err << "\n";
  }

  if (!sw.eps_list.empty()) {
    std::vector<std::pair<std::string, std::vector<audit::CurvePoint>>> curves;
    for (auto kind : sw.kinds) {
      const std::filesystem::path cpath =
          cell_path(cfg, "epscurve:" + posterior::to_string(kind));
      std::vector<audit::CurvePoint> curve;
      if (auto j = read_cell(cpath)) {
        for (const auto& pt : j->at("curve"))
          curve.push_back({pt.at("x").get<double>(),
                           pt.at("mean").get<double>(),
                           pt.at("std").get<double>()});
      } else {
        const nn::NetworkArchitecture arch =
            build_arch(cfg.model, loaded.train.n_features());
        const posterior::PosteriorEnsemble ens = audit::train_by_kind(
            kind, arch, loaded.train, spec, sw.seeds.front());
        curve = audit::sweep_epsilon(sw.eps_list, ens, metric, attack_cfg,
                                     cfg.audit.chernoff, source, jobs);
        json pts = json::array();
        for (const auto& pt : curve)
          pts.push_back({{"x", pt.x}, {"mean", pt.mean}, {"std", pt.stddev}});
        write_cell(cpath, json{{"curve", pts}});
      }
      curves.emplace_back(posterior::to_string(kind), std::move(curve));
    }
    const std::filesystem::path path = cfg.output_dir / "eps_curve.csv";
    io::write_curve_csv(path, "epsilon", curves, cfg.config_hash);
    out << "wrote " << path.string() << "\n";
  }
}

void cmd_analyze_posterior(const RunConfig& cfg, int jobs, std::ostream& out,
                           std::vector<std::filesystem::path> ensembles) {
  if (!cfg.sweep || cfg.sweep->k_list.empty())
    throw ConfigError("analyze-posterior needs sweep.k_list in the config");
  const SweepSection& sw = *cfg.sweep;
  if (ensembles.empty()) ensembles.push_back(default_ensemble_dir(cfg));

  const LoadedData loaded = load_data(cfg.dataset);
  const similarity::SimilarityMetric metric = build_metric(cfg, loaded.train);
  const attack::AttackConfig attack_cfg =
      build_attack(cfg.attack, loaded.test.n_features());
  const audit::SamplingSource source = build_source(cfg, loaded.test);

  std::vector<std::pair<std::string, std::vector<audit::CurvePoint>>> curves;
  for (std::size_t e = 0; e < ensembles.size(); ++e) {
    const posterior::PosteriorEnsemble ens = io::load_ensemble(ensembles[e]);
    auto curve = audit::posterior_sample_analysis(
        ens, sw.k_list, sw.resamplings, sw.analysis_points, metric, attack_cfg,
        source, cfg.audit.seed, jobs);
    std::string name = posterior::to_string(ens.kind);
    if (ensembles.size() > 1) name += "_" + std::to_string(e);
    for (const auto& pt : curve)
      out << name << " k=" << static_cast<int>(pt.x)
          << " mean_delta=" << io::format_double(pt.mean)
          << " std=" << io::format_double(pt.stddev) << "\n";
    curves.emplace_back(std::move(name), std::move(curve));
  }
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path path = cfg.output_dir / "k_curve.csv";
  io::write_curve_csv(path, "k", curves, cfg.config_hash);
  out << "wrote " << path.string() << "\n";
}

void cmd_oracle_check(const RunConfig& cfg, int jobs, std::ostream& out) {
  const LoadedData loaded = load_data(cfg.dataset);
  if (loaded.train.n_features() > 4)
    throw StructuralError("oracle-check needs input dimension <= 4, got " +
                          std::to_string(loaded.train.n_features()));
  const similarity::SimilarityMetric metric = build_metric(cfg, loaded.train);
  const nn::NetworkArchitecture arch =
      build_arch(cfg.model, loaded.train.n_features());
  const audit::InferenceSpec spec = build_spec(cfg.model);
  const posterior::PosteriorEnsemble ens = audit::train_by_kind(
      cfg.model.inference, arch, loaded.train, spec, seed_for_kind(cfg.model));

  attack::AttackConfig pgd_cfg = build_attack(cfg.attack, arch.input_dim);
  pgd_cfg.kind = attack::AttackKind::fair_pgd;
  pgd_cfg.pgd_steps = cfg.oracle.pgd_steps;
  pgd_cfg.pgd_step_fraction = 0.0;  // default schedule for the chosen steps

  const audit::SamplingSource source = build_source(cfg, loaded.test);
  const audit::SampledInputs samples =
      audit::sample_inputs(source, cfg.oracle.points);

  struct Row {
    double attack_delta, oracle_delta, ratio;
  };
  std::vector<Row> rows(samples.points.size());
  parallel_for(static_cast<int>(samples.points.size()), jobs, [&](int i) {
    const auto pgd = attack::fair_pgd(ens, metric, samples.points[i], pgd_cfg,
                                      samples.label_at(i));
    const auto oracle = attack::brute_force_oracle(
        ens, metric, samples.points[i], pgd_cfg.eps, cfg.oracle.grid,
        pgd_cfg.clamp_box);
    Row r;
    r.attack_delta = pgd.local_delta;
    r.oracle_delta = oracle.local_delta;
    r.ratio = oracle_match_ratio(pgd.local_delta, oracle.local_delta);
    rows[i] = r;
  });

  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path path = cfg.output_dir / "oracle_check.csv";
  std::ofstream csv(path);
  csv << "# config_hash=" << cfg.config_hash << "\n";
  csv << "index,attack_delta,oracle_delta,ratio\n";
  double mean_attack = 0.0, mean_oracle = 0.0, mean_ratio = 0.0,
         min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv << i << ',' << io::format_double(rows[i].attack_delta) << ','
        << io::format_double(rows[i].oracle_delta) << ','
        << io::format_double(rows[i].ratio) << "\n";
    mean_attack += rows[i].attack_delta;
    mean_oracle += rows[i].oracle_delta;
    mean_ratio += rows[i].ratio;
    min_ratio = std::min(min_ratio, rows[i].ratio);
  }
  const double n = static_cast<double>(rows.size());
  mean_attack /= n;
  mean_oracle /= n;
  mean_ratio /= n;
  out << "points=" << rows.size() << " grid=" << cfg.oracle.grid
      << " pgd_steps=" << cfg.oracle.pgd_steps << "\n";
  out << "mean_attack_delta=" << io::format_double(mean_attack)
      << " mean_oracle_delta=" << io::format_double(mean_oracle) << "\n";
  out << "mean_ratio=" << io::format_double(mean_ratio)
      << " min_ratio=" << io::format_double(min_ratio) << "\n";
  out << "wrote " << path.string() << "\n";
}

}  // namespace fairaudit::cli
