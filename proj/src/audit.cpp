#include "fairaudit/audit.hpp"

#include <chrono>
#include <cmath>

#include "fairaudit/parallel.hpp"
#include "fairaudit/rng.hpp"

namespace fairaudit::audit {

void ChernoffParams::validate() const {
  if (theta_c <= 0.0 || theta_c >= 1.0)
    throw ConfigError("chernoff theta_c must be in (0,1)");
  if (gamma <= 0.0 || gamma >= 1.0)
    throw ConfigError("chernoff gamma must be in (0,1)");
}

int chernoff_sample_size(const ChernoffParams& params) {
  params.validate();
  const double bound =
      std::log(2.0 / params.gamma) / (2.0 * params.theta_c * params.theta_c);
  return static_cast<int>(std::floor(bound)) + 1;
}

SamplingSource SamplingSource::empirical(const data::Dataset& dataset,
                                         std::uint64_t seed) {
  SamplingSource s;
  s.kind = Kind::dataset_empirical;
  s.dataset = &dataset;
  s.dim = dataset.n_features();
  s.seed = seed;
  return s;
}

SamplingSource SamplingSource::uniform(int dim, std::uint64_t seed) {
  SamplingSource s;
  s.kind = Kind::uniform_box;
  s.dim = dim;
  s.seed = seed;
  return s;
}

std::string SamplingSource::kind_name() const {
  return kind == Kind::dataset_empirical ? "dataset_empirical" : "uniform_box";
}

SampledInputs sample_inputs(const SamplingSource& source, int n) {
  if (n < 1) throw ConfigError("sample_inputs needs n >= 1");
  Rng rng(source.seed);
  SampledInputs out;
  out.points.reserve(n);
  if (source.kind == SamplingSource::Kind::dataset_empirical) {
    if (!source.dataset || source.dataset->n_rows() == 0)
      throw DataError("empirical sampling source has no dataset rows");
    out.labels.reserve(n);
    const auto rows = static_cast<std::uint64_t>(source.dataset->n_rows());
    for (int i = 0; i < n; ++i) {
      const auto r = static_cast<int>(rng.below(rows));
      out.points.emplace_back(source.dataset->X.row(r));
      out.labels.push_back(source.dataset->y(r));
    }
  } else {
    if (source.dim < 1) throw ConfigError("uniform source needs dim >= 1");
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd x(source.dim);
      for (int j = 0; j < source.dim; ++j) x(j) = rng.uniform();
      out.points.push_back(std::move(x));
    }
  }
  return out;
}

namespace {

std::vector<attack::AttackResult> attack_all(
    const posterior::PosteriorEnsemble& ensemble,
    const similarity::SimilarityMetric& metric,
    const attack::AttackConfig& attack_cfg, const SampledInputs& samples,
    int jobs) {
  std::vector<attack::AttackResult> results(samples.points.size());
  parallel_for(static_cast<int>(samples.points.size()), jobs, [&](int i) {
    results[i] = attack::run_attack(ensemble, metric, samples.points[i],
                                    attack_cfg, samples.label_at(i));
  });
  return results;
}

double max_delta(const std::vector<attack::AttackResult>& results) {
  double m = 0.0;
  for (const auto& r : results) m = std::max(m, r.local_delta);
  return m;
}

double sample_stddev(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace

PHatResult estimate_p_hat(const posterior::PosteriorEnsemble& ensemble,
                          const similarity::SimilarityMetric& metric,
                          const attack::AttackConfig& attack_cfg, double delta,
                          const SampledInputs& samples, int jobs) {
  if (samples.points.empty())
    throw ConfigError("estimate_p_hat needs at least one sample");
  if (delta < 0.0) throw ConfigError("delta must be >= 0");
  PHatResult out;
  out.per_sample = attack_all(ensemble, metric, attack_cfg, samples, jobs);
  int fair = 0;
  for (const auto& r : out.per_sample)
    fair += r.local_delta <= delta ? 1 : 0;
  out.p_hat = static_cast<double>(fair) /
              static_cast<double>(out.per_sample.size());
  return out;
}

AuditReport estimate_delta_star(const posterior::PosteriorEnsemble& ensemble,
                                const similarity::SimilarityMetric& metric,
                                const attack::AttackConfig& attack_cfg,
                                const ChernoffParams& chernoff,
                                const SamplingSource& source, int jobs,
                                std::optional<double> delta_for_p_hat) {
  const auto t0 = std::chrono::steady_clock::now();
  attack_cfg.validate();
  const int n = chernoff_sample_size(chernoff);
  const SampledInputs samples = sample_inputs(source, n);

  AuditReport report;
  report.per_sample = attack_all(ensemble, metric, attack_cfg, samples, jobs);
  report.delta_star_hat = max_delta(report.per_sample);
  report.n_samples = n;
  report.chernoff = chernoff;
  report.sampling_seed = source.seed;
  report.source_kind = source.kind_name();
  if (delta_for_p_hat) {
    report.delta = delta_for_p_hat;
    int fair = 0;
    for (const auto& r : report.per_sample)
      fair += r.local_delta <= *delta_for_p_hat ? 1 : 0;
    report.p_hat = static_cast<double>(fair) / static_cast<double>(n);
  } else {
    report.p_hat = 1.0;  // by definition at delta = delta_star_hat
  }
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

posterior::PosteriorEnsemble train_by_kind(posterior::InferenceKind kind,
                                           const nn::NetworkArchitecture& arch,
                                           const data::Dataset& train_data,
                                           const InferenceSpec& spec,
                                           std::uint64_t seed) {
  using posterior::InferenceKind;
  switch (kind) {
    case InferenceKind::deterministic: {
      posterior::TrainConfig cfg = spec.train;
      cfg.seed = seed;
      return posterior::train_sgd(arch, train_data, cfg);
    }
    case InferenceKind::vi: {
      posterior::TrainConfig cfg = spec.train;
      cfg.seed = seed;
      const posterior::VIPosterior vi = posterior::train_vi(
          arch, train_data, cfg, spec.vi_prior_std, spec.vi_mc_samples);
      return posterior::sample_vi(vi, spec.vi_k, derive_seed(seed, 0x71));
    }
    case InferenceKind::hmc: {
      posterior::HMCConfig cfg = spec.hmc;
      cfg.seed = seed;
      return posterior::run_hmc(arch, train_data, cfg);
    }
    case InferenceKind::deep_ensemble: {
      return posterior::train_deep_ensemble(arch, train_data, spec.train,
                                            spec.ensemble_members, seed);
    }
  }
  throw StructuralError("unknown inference kind");
}

void SweepConfig::validate() const {
  if (kinds.empty()) throw ConfigError("sweep needs at least one kind");
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  for (int d : depths)
    if (d < 1) throw ConfigError("sweep depth must be >= 1");
  for (int w : widths)
    if (w < 1) throw ConfigError("sweep width must be >= 1");
  for (double e : eps_list)
    if (e <= 0.0) throw ConfigError("sweep eps must be > 0");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (eps_list[i] <= eps_list[i - 1])
      throw ConfigError("eps_list must be strictly ascending");
  for (int k : k_list)
    if (k < 1) throw ConfigError("sweep k must be >= 1");
  if (resamplings < 1) throw ConfigError("resamplings must be >= 1");
  if (analysis_points < 1) throw ConfigError("analysis_points must be >= 1");
}

CellResult run_cell(int depth, int width, posterior::InferenceKind kind,
                    std::uint64_t seed, const data::Dataset& train_data,
                    const SamplingSource& source,
                    const similarity::SimilarityMetric& metric,
                    const attack::AttackConfig& attack_cfg,
                    const ChernoffParams& chernoff, const InferenceSpec& spec,
                    int jobs) {
  CellResult cell;
  try {
    nn::NetworkArchitecture arch;
    arch.input_dim = train_data.n_features();
    arch.hidden_layers.assign(depth, width);
    arch.activation = spec.activation;
    const posterior::PosteriorEnsemble ens =
        train_by_kind(kind, arch, train_data, spec, seed);
    const AuditReport report = estimate_delta_star(
        ens, metric, attack_cfg, chernoff, source, jobs);
    cell.delta_star = report.delta_star_hat;
    cell.valid = true;
  } catch (const TrainingError& e) {
    cell.error = e.what();
  }
  return cell;
}

HeatmapTable sweep_architectures(const SweepConfig& sweep,
                                 const data::Dataset& train_data,
                                 const SamplingSource& source,
                                 const similarity::SimilarityMetric& metric,
                                 const attack::AttackConfig& attack_cfg,
                                 const ChernoffParams& chernoff,
                                 const InferenceSpec& spec, int jobs) {
  sweep.validate();
  if (sweep.depths.empty() || sweep.widths.empty())
    throw ConfigError("architecture sweep needs depths and widths");

  HeatmapTable table;
  table.depths = sweep.depths;
  table.widths = sweep.widths;
  const auto nd = sweep.depths.size();
  const auto nw = sweep.widths.size();

  struct Job {
    posterior::InferenceKind kind;
    int di, wi;
    std::uint64_t seed;
  };
  std::vector<Job> jobs_list;
  for (auto kind : sweep.kinds)
    for (std::size_t di = 0; di < nd; ++di)
      for (std::size_t wi = 0; wi < nw; ++wi)
        for (auto seed : sweep.seeds)
          jobs_list.push_back({kind, static_cast<int>(di),
                               static_cast<int>(wi), seed});

  std::vector<CellResult> cells(jobs_list.size());
  parallel_for(static_cast<int>(jobs_list.size()), jobs, [&](int i) {
    const Job& j = jobs_list[i];
    cells[i] = run_cell(sweep.depths[j.di], sweep.widths[j.wi], j.kind, j.seed,
                        train_data, source, metric, attack_cfg, chernoff,
                        spec, 1);
  });

  for (auto kind : sweep.kinds)
    table.mean_delta[kind] =
        Eigen::MatrixXd::Constant(nd, nw,
                                  std::numeric_limits<double>::quiet_NaN());

  for (auto kind : sweep.kinds) {
    for (std::size_t di = 0; di < nd; ++di) {
      for (std::size_t wi = 0; wi < nw; ++wi) {
        double acc = 0.0;
        int valid = 0;
        for (std::size_t i = 0; i < jobs_list.size(); ++i) {
          const Job& j = jobs_list[i];
          if (j.kind != kind || j.di != static_cast<int>(di) ||
              j.wi != static_cast<int>(wi))
            continue;
          if (cells[i].valid) {
            acc += cells[i].delta_star;
            ++valid;
          } else {
            table.cell_errors.push_back(
                to_string(kind) + " depth=" +
                std::to_string(sweep.depths[di]) + " width=" +
                std::to_string(sweep.widths[wi]) + ": " + cells[i].error);
          }
        }
        if (valid > 0) table.mean_delta[kind](di, wi) = acc / valid;
      }
    }
  }
  return table;
}

std::vector<CurvePoint> sweep_epsilon(
    const std::vector<double>& eps_list,
    const posterior::PosteriorEnsemble& ensemble,
    const similarity::SimilarityMetric& metric,
    const attack::AttackConfig& attack_cfg, const ChernoffParams& chernoff,
    const SamplingSource& source, int jobs) {
  if (eps_list.empty()) throw ConfigError("eps sweep needs at least one eps");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (eps_list[i] <= eps_list[i - 1])
      throw ConfigError("eps_list must be strictly ascending");

  const int n = chernoff_sample_size(chernoff);
  const SampledInputs samples = sample_inputs(source, n);

  std::vector<CurvePoint> curve;
  std::vector<attack::AttackResult> prev;
  for (double eps : eps_list) {
    attack::AttackConfig cfg = attack_cfg;
    cfg.eps = eps;
    std::vector<attack::AttackResult> results(samples.points.size());
    parallel_for(static_cast<int>(samples.points.size()), jobs, [&](int i) {
      attack::AttackResult r = attack::run_attack(
          ensemble, metric, samples.points[i], cfg, samples.label_at(i));
      // Nested-candidate rule: the smaller-eps adversary stays feasible at
      // a larger eps, so keep it when it is better.
      if (!prev.empty() && prev[i].local_delta > r.local_delta) r = prev[i];
      results[i] = std::move(r);
    });
    CurvePoint pt;
    pt.x = eps;
    pt.mean = max_delta(results);
    curve.push_back(pt);
    prev = std::move(results);
  }
  return curve;
}

std::vector<CurvePoint> posterior_sample_analysis(
    const posterior::PosteriorEnsemble& ensemble,
    const std::vector<int>& k_list, int resamplings, int n_points,
    const similarity::SimilarityMetric& metric,
    const attack::AttackConfig& attack_cfg, const SamplingSource& source,
    std::uint64_t seed, int jobs) {
  if (k_list.empty()) throw ConfigError("k analysis needs a non-empty k_list");
  for (int k : k_list)
    if (k < 1 || k > ensemble.k())
      throw ConfigError("k=" + std::to_string(k) +
                        " exceeds posterior pool of " +
                        std::to_string(ensemble.k()));
  if (resamplings < 1) throw ConfigError("resamplings must be >= 1");

  const SampledInputs samples = sample_inputs(source, n_points);

  std::vector<CurvePoint> curve;
  for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
    const int k = k_list[ki];
    std::vector<double> deltas(resamplings);
    for (int r = 0; r < resamplings; ++r) {
      const posterior::PosteriorEnsemble sub = posterior::subsample_ensemble(
          ensemble, k, derive_seed(seed, ki * 1000 + r));
      const auto results = attack_all(sub, metric, attack_cfg, samples, jobs);
      deltas[r] = max_delta(results);
    }
    CurvePoint pt;
    pt.x = static_cast<double>(k);
    double acc = 0.0;
    for (double d : deltas) acc += d;
    pt.mean = acc / resamplings;
    pt.stddev = sample_stddev(deltas, pt.mean);
    curve.push_back(pt);
  }
  return curve;
}

}  // namespace fairaudit::audit
