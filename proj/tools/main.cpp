#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairaudit/commands.hpp"
#include "fairaudit/errors.hpp"

namespace {

struct GlobalArgs {
  std::string config_path;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<double> delta;
};

void add_common(CLI::App* cmd, GlobalArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration JSON")
      ->required();
  cmd->add_option("--jobs", args.jobs, "worker threads (results identical)");
  cmd->add_option("--seed", args.seed, "override the master seed");
  cmd->add_option("--out", args.out_dir, "override the output directory");
  cmd->add_option("--delta", args.delta,
                  "also report p_hat at this delta (audit)");
}

fairaudit::cli::RunConfig load(const GlobalArgs& args) {
  auto cfg = fairaudit::cli::RunConfig::from_file(args.config_path);
  bool dirty = false;
  if (args.seed) {
    cfg.master_seed = *args.seed;
    dirty = true;
  }
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.delta) {
    cfg.audit.delta = args.delta;
    dirty = true;
  }
  if (dirty) cfg.finalize();
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"train small binary classifiers and estimate their "
               "epsilon-delta individual fairness"};
  app.require_subcommand(1);

  GlobalArgs args;
  std::string ensemble_dir;
  std::vector<std::string> ensemble_dirs;

  auto* train = app.add_subcommand("train", "train a model/posterior");
  add_common(train, args);
  auto* fit_metric =
      app.add_subcommand("fit-metric", "fit and save the similarity metric");
  add_common(fit_metric, args);
  auto* auditc =
      app.add_subcommand("audit", "Chernoff-sized fairness audit");
  add_common(auditc, args);
  auditc->add_option("ensemble", ensemble_dir, "ensemble directory override");
  auto* sweep =
      app.add_subcommand("sweep", "architecture heatmaps and epsilon curves");
  add_common(sweep, args);
  auto* analyze = app.add_subcommand(
      "analyze-posterior", "delta vs posterior sample count k");
  add_common(analyze, args);
  analyze->add_option("ensembles", ensemble_dirs,
                      "ensemble directories to analyze");
  auto* oracle = app.add_subcommand(
      "oracle-check", "attack vs brute-force oracle comparison (dim <= 4)");
  add_common(oracle, args);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = load(args);
    if (train->parsed())
      fairaudit::cli::cmd_train(cfg, args.jobs, std::cout);
    else if (fit_metric->parsed())
      fairaudit::cli::cmd_fit_metric(cfg, std::cout);
    else if (auditc->parsed())
      fairaudit::cli::cmd_audit(cfg, args.jobs, std::cout, ensemble_dir);
    else if (sweep->parsed())
      fairaudit::cli::cmd_sweep(cfg, args.jobs, std::cout);
    else if (analyze->parsed()) {
      std::vector<std::filesystem::path> dirs(ensemble_dirs.begin(),
                                              ensemble_dirs.end());
      fairaudit::cli::cmd_analyze_posterior(cfg, args.jobs, std::cout, dirs);
    } else if (oracle->parsed()) {
      fairaudit::cli::cmd_oracle_check(cfg, args.jobs, std::cout);
    }
  } catch (const fairaudit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fairaudit::StructuralError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fairaudit::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const fairaudit::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
