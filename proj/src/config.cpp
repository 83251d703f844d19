#include "fairaudit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "fairaudit/hash.hpp"
#include "fairaudit/rng.hpp"
#include "json.hpp"

namespace fairaudit::cli {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.contains(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + section);
}

double parse_p(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return similarity::kInfiniteP;
    throw ConfigError("metric p must be a number or \"inf\"");
  }
  return j.get<double>();
}

using SeedFlags = RunConfig::ExplicitSeeds;

void parse_dataset(const json& j, DatasetSection& out, SeedFlags& flags) {
  check_keys(j,
             {"kind", "path", "schema_path", "train_fraction", "seed", "n",
              "n_continuous", "bias_strength"},
             "dataset");
  const std::string kind = j.value("kind", "synthetic");
  if (kind == "csv")
    out.kind = DatasetSection::Kind::csv;
  else if (kind == "synthetic")
    out.kind = DatasetSection::Kind::synthetic;
  else
    throw ConfigError("dataset.kind must be csv or synthetic");
  if (j.contains("path")) out.path = j.at("path").get<std::string>();
  if (j.contains("schema_path"))
    out.schema_path = j.at("schema_path").get<std::string>();
  out.train_fraction = j.value("train_fraction", 0.8);
  out.n = j.value("n", 4000);
  out.n_continuous = j.value("n_continuous", 5);
  out.bias_strength = j.value("bias_strength", 0.0);
  if (j.contains("seed")) {
    out.seed = j.at("seed").get<std::uint64_t>();
    flags.dataset = true;
  }
}

void parse_train(const json& j, posterior::TrainConfig& out,
                 SeedFlags& flags) {
  check_keys(j,
             {"epochs", "batch_size", "learning_rate", "weight_decay", "seed"},
             "model.train");
  out.epochs = j.value("epochs", out.epochs);
  out.batch_size = j.value("batch_size", out.batch_size);
  out.learning_rate = j.value("learning_rate", out.learning_rate);
  out.weight_decay = j.value("weight_decay", out.weight_decay);
  if (j.contains("seed")) {
    out.seed = j.at("seed").get<std::uint64_t>();
    flags.train = true;
  }
}

void parse_hmc(const json& j, posterior::HMCConfig& out, SeedFlags& flags) {
  check_keys(j,
             {"leapfrog_steps", "step_size", "burn_in", "n_kept", "thinning",
              "prior_std", "seed"},
             "model.hmc");
  out.leapfrog_steps = j.value("leapfrog_steps", out.leapfrog_steps);
  out.step_size = j.value("step_size", out.step_size);
  out.burn_in = j.value("burn_in", out.burn_in);
  out.n_kept = j.value("n_kept", out.n_kept);
  out.thinning = j.value("thinning", out.thinning);
  out.prior_std = j.value("prior_std", out.prior_std);
  if (j.contains("seed")) {
    out.seed = j.at("seed").get<std::uint64_t>();
    flags.hmc = true;
  }
}

void parse_model(const json& j, ModelSection& out, SeedFlags& flags) {
  check_keys(j,
             {"hidden_layers", "activation", "inference", "train", "hmc",
              "vi_prior_std", "vi_mc_samples", "vi_k", "ensemble_members"},
             "model");
  if (j.contains("hidden_layers"))
    out.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  if (j.contains("activation"))
    out.activation =
        nn::activation_from_string(j.at("activation").get<std::string>());
  if (j.contains("inference"))
    out.inference = posterior::inference_kind_from_string(
        j.at("inference").get<std::string>());
  if (j.contains("train")) parse_train(j.at("train"), out.train, flags);
  if (j.contains("hmc")) parse_hmc(j.at("hmc"), out.hmc, flags);
  out.vi_prior_std = j.value("vi_prior_std", out.vi_prior_std);
  out.vi_mc_samples = j.value("vi_mc_samples", out.vi_mc_samples);
  out.vi_k = j.value("vi_k", out.vi_k);
  out.ensemble_members = j.value("ensemble_members", out.ensemble_members);
}

void parse_metric(const json& j, MetricSection& out) {
  check_keys(j, {"kind", "source", "p", "epsilon_floor", "theta", "S", "path"},
             "metric");
  if (j.contains("kind")) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "weighted_lp")
      out.kind = similarity::SimilarityMetric::Kind::weighted_lp;
    else if (kind == "mahalanobis")
      out.kind = similarity::SimilarityMetric::Kind::mahalanobis;
    else
      throw ConfigError("metric.kind must be weighted_lp or mahalanobis");
  }
  if (j.contains("source")) {
    const std::string src = j.at("source").get<std::string>();
    if (src == "fit")
      out.source = MetricSection::Source::fit;
    else if (src == "literal")
      out.source = MetricSection::Source::literal;
    else if (src == "file")
      out.source = MetricSection::Source::file;
    else
      throw ConfigError("metric.source must be fit, literal or file");
  }
  if (j.contains("p")) out.p = parse_p(j.at("p"));
  out.epsilon_floor = j.value("epsilon_floor", out.epsilon_floor);
  if (j.contains("theta"))
    out.theta = j.at("theta").get<std::vector<double>>();
  if (j.contains("S"))
    out.S = j.at("S").get<std::vector<std::vector<double>>>();
  if (j.contains("path")) out.path = j.at("path").get<std::string>();
}

void parse_attack(const json& j, AttackSection& out, SeedFlags& flags) {
  check_keys(j,
             {"kind", "eps", "pgd_steps", "pgd_step_fraction", "clamp",
              "label_rule", "seed"},
             "attack");
  if (j.contains("kind"))
    out.kind = attack::attack_kind_from_string(j.at("kind").get<std::string>());
  out.eps = j.value("eps", out.eps);
  out.pgd_steps = j.value("pgd_steps", out.pgd_steps);
  out.pgd_step_fraction = j.value("pgd_step_fraction", out.pgd_step_fraction);
  out.clamp_to_unit_box = j.value("clamp", out.clamp_to_unit_box);
  if (j.contains("label_rule"))
    out.label_rule =
        attack::label_rule_from_string(j.at("label_rule").get<std::string>());
  if (j.contains("seed")) {
    out.seed = j.at("seed").get<std::uint64_t>();
    flags.attack = true;
  }
}

void parse_audit(const json& j, AuditSection& out, SeedFlags& flags) {
  check_keys(j, {"theta_c", "gamma", "source", "delta", "ensemble_dir", "seed"},
             "audit");
  out.chernoff.theta_c = j.value("theta_c", out.chernoff.theta_c);
  out.chernoff.gamma = j.value("gamma", out.chernoff.gamma);
  if (j.contains("source")) {
    const std::string src = j.at("source").get<std::string>();
    if (src == "dataset")
      out.source = audit::SamplingSource::Kind::dataset_empirical;
    else if (src == "uniform")
      out.source = audit::SamplingSource::Kind::uniform_box;
    else
      throw ConfigError("audit.source must be dataset or uniform");
  }
  if (j.contains("delta")) out.delta = j.at("delta").get<double>();
  if (j.contains("ensemble_dir"))
    out.ensemble_dir = j.at("ensemble_dir").get<std::string>();
  if (j.contains("seed")) {
    out.seed = j.at("seed").get<std::uint64_t>();
    flags.audit = true;
  }
}

void parse_sweep(const json& j, SweepSection& out) {
  check_keys(j,
             {"depths", "widths", "eps_list", "k_list", "resamplings", "kinds",
              "seeds", "analysis_points"},
             "sweep");
  if (j.contains("depths")) out.depths = j.at("depths").get<std::vector<int>>();
  if (j.contains("widths")) out.widths = j.at("widths").get<std::vector<int>>();
  if (j.contains("eps_list"))
    out.eps_list = j.at("eps_list").get<std::vector<double>>();
  if (j.contains("k_list")) out.k_list = j.at("k_list").get<std::vector<int>>();
  out.resamplings = j.value("resamplings", out.resamplings);
  if (j.contains("kinds")) {
    out.kinds.clear();
    for (const auto& k : j.at("kinds"))
      out.kinds.push_back(
          posterior::inference_kind_from_string(k.get<std::string>()));
  }
  if (j.contains("seeds"))
    out.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  out.analysis_points = j.value("analysis_points", out.analysis_points);
}

void parse_oracle(const json& j, OracleSection& out) {
  check_keys(j, {"points", "grid", "pgd_steps"}, "oracle");
  out.points = j.value("points", out.points);
  out.grid = j.value("grid", out.grid);
  out.pgd_steps = j.value("pgd_steps", out.pgd_steps);
}

json canonical_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.master_seed;
  j["dataset"] = {
      {"kind",
       cfg.dataset.kind == DatasetSection::Kind::csv ? "csv" : "synthetic"},
      {"path", cfg.dataset.path.string()},
      {"schema_path", cfg.dataset.schema_path.string()},
      {"train_fraction", cfg.dataset.train_fraction},
      {"seed", cfg.dataset.seed},
      {"n", cfg.dataset.n},
      {"n_continuous", cfg.dataset.n_continuous},
      {"bias_strength", cfg.dataset.bias_strength}};
  j["model"] = {{"hidden_layers", cfg.model.hidden_layers},
                {"activation", nn::to_string(cfg.model.activation)},
                {"inference", posterior::to_string(cfg.model.inference)},
                {"train",
                 {{"epochs", cfg.model.train.epochs},
                  {"batch_size", cfg.model.train.batch_size},
                  {"learning_rate", cfg.model.train.learning_rate},
                  {"weight_decay", cfg.model.train.weight_decay},
                  {"seed", cfg.model.train.seed}}},
                {"hmc",
                 {{"leapfrog_steps", cfg.model.hmc.leapfrog_steps},
                  {"step_size", cfg.model.hmc.step_size},
                  {"burn_in", cfg.model.hmc.burn_in},
                  {"n_kept", cfg.model.hmc.n_kept},
                  {"thinning", cfg.model.hmc.thinning},
                  {"prior_std", cfg.model.hmc.prior_std},
                  {"seed", cfg.model.hmc.seed}}},
                {"vi_prior_std", cfg.model.vi_prior_std},
                {"vi_mc_samples", cfg.model.vi_mc_samples},
                {"vi_k", cfg.model.vi_k},
                {"ensemble_members", cfg.model.ensemble_members}};
  j["metric"] = {
      {"kind",
       cfg.metric.kind == similarity::SimilarityMetric::Kind::weighted_lp
           ? "weighted_lp"
           : "mahalanobis"},
      {"source", cfg.metric.source == MetricSection::Source::fit
                     ? "fit"
                     : (cfg.metric.source == MetricSection::Source::literal
                            ? "literal"
                            : "file")},
      {"p", std::isinf(cfg.metric.p) ? json("inf") : json(cfg.metric.p)},
      {"epsilon_floor", cfg.metric.epsilon_floor},
      {"theta", cfg.metric.theta},
      {"S", cfg.metric.S},
      {"path", cfg.metric.path.string()}};
  j["attack"] = {{"kind", attack::to_string(cfg.attack.kind)},
                 {"eps", cfg.attack.eps},
                 {"pgd_steps", cfg.attack.pgd_steps},
                 {"pgd_step_fraction", cfg.attack.pgd_step_fraction},
                 {"clamp", cfg.attack.clamp_to_unit_box},
                 {"label_rule", attack::to_string(cfg.attack.label_rule)},
                 {"seed", cfg.attack.seed}};
  j["audit"] = {{"theta_c", cfg.audit.chernoff.theta_c},
                {"gamma", cfg.audit.chernoff.gamma},
                {"source", cfg.audit.source ==
                                   audit::SamplingSource::Kind::dataset_empirical
                               ? "dataset"
                               : "uniform"},
                {"delta", cfg.audit.delta ? json(*cfg.audit.delta) : json()},
                {"ensemble_dir", cfg.audit.ensemble_dir.string()},
                {"seed", cfg.audit.seed}};
  if (cfg.sweep) {
    json kinds = json::array();
    for (auto k : cfg.sweep->kinds) kinds.push_back(posterior::to_string(k));
    j["sweep"] = {{"depths", cfg.sweep->depths},
                  {"widths", cfg.sweep->widths},
                  {"eps_list", cfg.sweep->eps_list},
                  {"k_list", cfg.sweep->k_list},
                  {"resamplings", cfg.sweep->resamplings},
                  {"kinds", kinds},
                  {"seeds", cfg.sweep->seeds},
                  {"analysis_points", cfg.sweep->analysis_points}};
  }
  j["oracle"] = {{"points", cfg.oracle.points},
                 {"grid", cfg.oracle.grid},
                 {"pgd_steps", cfg.oracle.pgd_steps}};
  return j;
}

}  // namespace

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

RunConfig RunConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  RunConfig cfg;
  SeedFlags flags;
  try {
    check_keys(j,
               {"seed", "output_dir", "dataset", "model", "metric", "attack",
                "audit", "sweep", "oracle"},
               "config root");
    cfg.master_seed = j.value("seed", 0ULL);
    if (j.contains("output_dir"))
      cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset, flags);
    if (j.contains("model")) parse_model(j.at("model"), cfg.model, flags);
    if (j.contains("metric")) parse_metric(j.at("metric"), cfg.metric);
    if (j.contains("attack")) parse_attack(j.at("attack"), cfg.attack, flags);
    if (j.contains("audit")) parse_audit(j.at("audit"), cfg.audit, flags);
    if (j.contains("sweep")) {
      SweepSection s;
      parse_sweep(j.at("sweep"), s);
      cfg.sweep = std::move(s);
    }
    if (j.contains("oracle")) parse_oracle(j.at("oracle"), cfg.oracle);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  cfg.explicit_seeds = flags;
  cfg.finalize();
  cfg.validate();
  return cfg;
}

void RunConfig::finalize() {
  const ExplicitSeeds& flags = explicit_seeds;
  if (!flags.dataset) dataset.seed = derive_seed(master_seed, 1);
  if (!flags.train) model.train.seed = derive_seed(master_seed, 2);
  if (!flags.hmc) model.hmc.seed = derive_seed(master_seed, 3);
  if (!flags.attack) attack.seed = derive_seed(master_seed, 4);
  if (!flags.audit) audit.seed = derive_seed(master_seed, 5);
  config_hash = hash_hex(fnv1a(canonical_json(*this).dump()));
}

void RunConfig::validate() const {
  if (dataset.kind == DatasetSection::Kind::csv) {
    if (dataset.path.empty() || dataset.schema_path.empty())
      throw ConfigError("csv dataset needs path and schema_path");
    if (!std::filesystem::exists(dataset.path))
      throw ConfigError("dataset file does not exist: " +
                        dataset.path.string());
    if (!std::filesystem::exists(dataset.schema_path))
      throw ConfigError("schema file does not exist: " +
                        dataset.schema_path.string());
  } else {
    if (dataset.n < 10) throw ConfigError("synthetic dataset needs n >= 10");
    if (dataset.n_continuous < 1)
      throw ConfigError("synthetic dataset needs n_continuous >= 1");
  }
  if (dataset.train_fraction <= 0.0 || dataset.train_fraction >= 1.0)
    throw ConfigError("dataset.train_fraction must be in (0,1)");

  if (model.hidden_layers.empty())
    throw ConfigError("model needs at least one hidden layer");
  for (int w : model.hidden_layers)
    if (w < 1) throw ConfigError("hidden layer widths must be >= 1");
  model.train.validate();
  model.hmc.validate();
  if (model.vi_prior_std <= 0.0)
    throw ConfigError("vi_prior_std must be > 0");
  if (model.vi_mc_samples < 1)
    throw ConfigError("vi_mc_samples must be >= 1");
  if (model.vi_k < 1) throw ConfigError("vi_k must be >= 1");
  if (model.ensemble_members < 1)
    throw ConfigError("ensemble_members must be >= 1");

  if (metric.source == MetricSection::Source::literal) {
    if (metric.kind == similarity::SimilarityMetric::Kind::weighted_lp &&
        metric.theta.empty())
      throw ConfigError("literal weighted_lp metric needs theta");
    if (metric.kind == similarity::SimilarityMetric::Kind::mahalanobis &&
        metric.S.empty())
      throw ConfigError("literal mahalanobis metric needs S");
  }
  if (metric.source == MetricSection::Source::file) {
    if (metric.path.empty())
      throw ConfigError("metric.source=file needs metric.path");
    if (!std::filesystem::exists(metric.path))
      throw ConfigError("metric file does not exist: " + metric.path.string());
  }
  if (!(metric.p >= 1.0))
    throw ConfigError("metric.p must be >= 1 (or \"inf\")");
  if (metric.epsilon_floor <= 0.0 || metric.epsilon_floor > 1.0)
    throw ConfigError("metric.epsilon_floor must be in (0,1]");

  if (attack.eps <= 0.0) throw ConfigError("attack.eps must be > 0");
  if (attack.pgd_steps < 1) throw ConfigError("attack.pgd_steps must be >= 1");
  if (attack.pgd_step_fraction > 1.0)
    throw ConfigError("attack.pgd_step_fraction must be in (0,1] when set");
  audit.chernoff.validate();
  if (audit.delta && *audit.delta < 0.0)
    throw ConfigError("audit.delta must be >= 0");

  if (sweep) {
    if (sweep->kinds.empty())
      throw ConfigError("sweep.kinds must be non-empty");
    if (sweep->seeds.empty())
      throw ConfigError("sweep.seeds must be non-empty");
    for (int d : sweep->depths)
      if (d < 1) throw ConfigError("sweep.depths entries must be >= 1");
    for (int w : sweep->widths)
      if (w < 1) throw ConfigError("sweep.widths entries must be >= 1");
    for (std::size_t i = 1; i < sweep->eps_list.size(); ++i)
      if (sweep->eps_list[i] <= sweep->eps_list[i - 1])
        throw ConfigError("sweep.eps_list must be strictly ascending");
    for (double e : sweep->eps_list)
      if (e <= 0.0) throw ConfigError("sweep.eps_list entries must be > 0");
    if (sweep->resamplings < 1)
      throw ConfigError("sweep.resamplings must be >= 1");
    if (sweep->analysis_points < 1)
      throw ConfigError("sweep.analysis_points must be >= 1");
    if (!sweep->k_list.empty()) {
      // Cross-field: requested posterior subsample sizes must fit the
      // ensemble the model section will produce.
      int pool = 1;
      switch (model.inference) {
        case posterior::InferenceKind::deterministic: pool = 1; break;
        case posterior::InferenceKind::vi: pool = model.vi_k; break;
        case posterior::InferenceKind::hmc: pool = model.hmc.n_kept; break;
        case posterior::InferenceKind::deep_ensemble:
          pool = model.ensemble_members;
          break;
      }
      for (int k : sweep->k_list) {
        if (k < 1) throw ConfigError("sweep.k_list entries must be >= 1");
        if (k > pool)
          throw ConfigError("sweep.k_list entry " + std::to_string(k) +
                            " exceeds the model's ensemble size " +
                            std::to_string(pool));
      }
    }
  }
  if (oracle.points < 1) throw ConfigError("oracle.points must be >= 1");
  if (oracle.grid < 2) throw ConfigError("oracle.grid must be >= 2");
  if (oracle.pgd_steps < 1) throw ConfigError("oracle.pgd_steps must be >= 1");
}

}  // namespace fairaudit::cli
