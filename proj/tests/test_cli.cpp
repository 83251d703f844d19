#include "fairaudit/commands.hpp"

#include "fairaudit/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

using namespace fairaudit;
namespace fs = std::filesystem;

namespace {

fs::path cli_binary() {
  const char* env = std::getenv("FAIRAUDIT_CLI");
  REQUIRE_MESSAGE(env != nullptr, "FAIRAUDIT_CLI must point at the binary");
  return env;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const fs::path& workdir) {
  const auto out_file = workdir / "stdout.txt";
  const auto err_file = workdir / "stderr.txt";
  const std::string cmd = cli_binary().string() + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

// Small synthetic run: 2 continuous features + sensitive, deterministic net.
std::string base_config(const fs::path& out_dir,
                        const std::string& extra_model = "",
                        const std::string& extra_audit = "") {
  return std::string(R"({
  "seed": 7,
  "output_dir": ")" + out_dir.string() + R"(",
  "dataset": {"kind": "synthetic", "n": 400, "n_continuous": 2,
              "bias_strength": 2.0, "train_fraction": 0.8},
  "model": {"hidden_layers": [4], "activation": "tanh",
            "inference": "deterministic",
            "train": {"epochs": 15, "batch_size": 64,
                      "learning_rate": 0.3, "weight_decay": 1e-4})" +
                     extra_model + R"(},
  "metric": {"kind": "weighted_lp", "p": 2.0, "epsilon_floor": 0.01},
  "attack": {"kind": "fair_pgd", "eps": 0.1, "pgd_steps": 8},
  "audit": {"theta_c": 0.3, "gamma": 0.3)" + extra_audit + R"(}
})");
}

}  // namespace

TEST_CASE("config: invalid values rejected before any work") {
  CHECK_THROWS_AS(cli::RunConfig::from_json_string(R"({"attack":{"eps":-1}})"),
                  ConfigError);
  CHECK_THROWS_AS(cli::RunConfig::from_json_string(R"({"typo_section":{}})"),
                  ConfigError);
  CHECK_THROWS_AS(
      cli::RunConfig::from_json_string(
          R"({"dataset":{"kind":"csv","path":"/nope.csv","schema_path":"/nope.json"}})"),
      ConfigError);
  CHECK_THROWS_AS(
      cli::RunConfig::from_json_string(
          R"({"model":{"inference":"hmc","hmc":{"n_kept":10}},
              "sweep":{"kinds":["hmc"],"seeds":[1],"k_list":[20]}})"),
      ConfigError);  // k_list exceeds the ensemble size

  // a valid config gets a stable hash that ignores output_dir
  const auto a = cli::RunConfig::from_json_string(
      R"({"seed": 3, "output_dir": "x"})");
  const auto b = cli::RunConfig::from_json_string(
      R"({"seed": 3, "output_dir": "y"})");
  CHECK(a.config_hash == b.config_hash);
  const auto c = cli::RunConfig::from_json_string(R"({"seed": 4})");
  CHECK(a.config_hash != c.config_hash);
}

TEST_CASE("oracle_match_ratio: flat cells are exact matches") {
  CHECK(cli::oracle_match_ratio(0.0, 0.0) == 1.0);
  CHECK(cli::oracle_match_ratio(0.25, 0.5) == 0.5);
  CHECK(cli::oracle_match_ratio(0.5, 0.5) == 1.0);
}

TEST_CASE("cli train: smoke run, manifest, reproducible fingerprint") {
  const auto dir = temp_dir("fa_cli_train");
  const auto cfg = dir / "run.json";
  spit(cfg, base_config(dir / "out"));

  const auto r = run_cli("train --config " + cfg.string(), dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("kind=deterministic") != std::string::npos);
  CHECK(r.out.find("k=1") != std::string::npos);

  const auto manifest = dir / "out" / "ensemble" / "ensemble.json";
  REQUIRE(fs::exists(manifest));
  const auto j = nlohmann::json::parse(slurp(manifest));
  CHECK(j.at("kind") == "deterministic");
  CHECK(j.at("k") == 1);
  CHECK(j.contains("seed"));

  const std::string first = slurp(manifest);
  const auto r2 = run_cli("train --config " + cfg.string(), dir);
  CHECK(r2.exit_code == 0);
  CHECK(slurp(manifest) == first);
}

TEST_CASE("cli: config errors exit with code 2 and no partial output") {
  const auto dir = temp_dir("fa_cli_badcfg");
  const auto cfg = dir / "bad.json";
  spit(cfg, R"({"attack": {"eps": -0.5}})");
  const auto r = run_cli("train --config " + cfg.string() +
                             " --out " + (dir / "out").string(),
                         dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("config error") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out" / "ensemble"));

  const auto r2 = run_cli("audit --config /nonexistent.json", dir);
  CHECK(r2.exit_code == 2);
}

TEST_CASE("cli audit: report files, printed summary, p_hat flag") {
  const auto dir = temp_dir("fa_cli_audit");
  const auto cfg = dir / "run.json";
  spit(cfg, base_config(dir / "out"));

  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);
  const auto r = run_cli("audit --config " + cfg.string(), dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("delta_star_hat=") != std::string::npos);
  // (0.3, 0.3): 1/(2*0.09)*log(2/0.3) = 10.54 -> 11
  CHECK(r.out.find("n_samples=11") != std::string::npos);
  REQUIRE(fs::exists(dir / "out" / "report.json"));
  REQUIRE(fs::exists(dir / "out" / "samples.csv"));

  const auto r2 =
      run_cli("audit --config " + cfg.string() + " --delta 0.05", dir);
  CHECK(r2.exit_code == 0);
  CHECK(r2.out.find("p_hat(delta=0.05)=") != std::string::npos);

  // default Chernoff parameters when the config omits them
  const auto cfg_default = dir / "run_default.json";
  std::string text = base_config(dir / "out2");
  const auto pos = text.find("\"theta_c\": 0.3, \"gamma\": 0.3");
  text.replace(pos, std::string("\"theta_c\": 0.3, \"gamma\": 0.3").size(),
               "\"theta_c\": 0.05, \"gamma\": 0.05");
  spit(cfg_default, text);
  REQUIRE(run_cli("train --config " + cfg_default.string(), dir).exit_code ==
          0);
  const auto r3 = run_cli("audit --config " + cfg_default.string(), dir);
  CHECK(r3.exit_code == 0);
  CHECK(r3.out.find("n_samples=738") != std::string::npos);
}

TEST_CASE("cli audit: byte-identical reports across --jobs") {
  const auto dir = temp_dir("fa_cli_jobs");
  const auto cfg = dir / "run.json";
  spit(cfg, base_config(dir / "out"));
  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);

  const std::string ensemble = (dir / "out" / "ensemble").string();
  REQUIRE(run_cli("audit --config " + cfg.string() + " --jobs 1 --out " +
                      (dir / "j1").string() + " " + ensemble,
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("audit --config " + cfg.string() + " --jobs 8 --out " +
                      (dir / "j8").string() + " " + ensemble,
                  dir)
              .exit_code == 0);
  auto j1 = nlohmann::json::parse(slurp(dir / "j1" / "report.json"));
  auto j8 = nlohmann::json::parse(slurp(dir / "j8" / "report.json"));
  j1.erase("wall_time_sec");
  j8.erase("wall_time_sec");
  CHECK(j1.dump() == j8.dump());
  CHECK(slurp(dir / "j1" / "samples.csv") == slurp(dir / "j8" / "samples.csv"));
}

TEST_CASE("cli sweep: heatmaps per kind, eps curve, cell resume") {
  const auto dir = temp_dir("fa_cli_sweep");
  const auto cfg = dir / "run.json";
  const std::string sweep_section = R"(,
  "sweep": {"depths": [1], "widths": [4], "eps_list": [0.05, 0.1],
            "kinds": ["deterministic", "hmc"], "seeds": [1, 2]})";
  std::string text = base_config(dir / "outA",
                                 R"(, "hmc": {"leapfrog_steps": 5,
            "step_size": 0.05, "burn_in": 150, "n_kept": 10,
            "thinning": 1})");
  text.insert(text.rfind('}'), sweep_section);
  spit(cfg, text);

  const auto r = run_cli("sweep --config " + cfg.string(), dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  const auto det_csv = dir / "outA" / "heatmap_deterministic.csv";
  const auto hmc_csv = dir / "outA" / "heatmap_hmc.csv";
  REQUIRE(fs::exists(det_csv));
  REQUIRE(fs::exists(hmc_csv));
  REQUIRE(fs::exists(dir / "outA" / "eps_curve.csv"));

  // 1x1 grid: exactly one data row with one value column
  {
    std::istringstream in(slurp(det_csv));
    std::string comment, header, row, extra;
    std::getline(in, comment);
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "depth\\width,4");
    CHECK(row.substr(0, 2) == "1,");
    const bool has_more_rows =
        static_cast<bool>(std::getline(in, extra)) && !extra.empty();
    CHECK_FALSE(has_more_rows);
  }

  // resume: seed a fresh output dir with half the completed cells, rerun,
  // expect byte-identical final outputs
  fs::create_directories(dir / "outB" / "cells");
  int copied = 0;
  for (const auto& entry :
       fs::directory_iterator(dir / "outA" / "cells")) {
    if (++copied % 2 == 0) continue;
    fs::copy_file(entry.path(), dir / "outB" / "cells" /
                                    entry.path().filename());
  }
  const auto r2 = run_cli("sweep --config " + cfg.string() + " --out " +
                              (dir / "outB").string(),
                          dir);
  CHECK(r2.exit_code == 0);
  CHECK(slurp(dir / "outB" / "heatmap_deterministic.csv") == slurp(det_csv));
  CHECK(slurp(dir / "outB" / "heatmap_hmc.csv") == slurp(hmc_csv));
  CHECK(slurp(dir / "outB" / "eps_curve.csv") ==
        slurp(dir / "outA" / "eps_curve.csv"));
}

TEST_CASE("cli analyze-posterior: k curve over a stored ensemble") {
  const auto dir = temp_dir("fa_cli_analyze");
  const auto cfg = dir / "run.json";
  std::string text = base_config(
      dir / "out",
      R"(, "hmc": {"leapfrog_steps": 5, "step_size": 0.05,
          "burn_in": 150, "n_kept": 12, "thinning": 1})");
  // switch the model to hmc and add the analysis lists
  auto pos = text.find("\"inference\": \"deterministic\"");
  text.replace(pos, std::string("\"inference\": \"deterministic\"").size(),
               "\"inference\": \"hmc\"");
  const std::string sweep_section = R"(,
  "sweep": {"k_list": [1, 4, 12], "resamplings": 3, "analysis_points": 20,
            "kinds": ["hmc"], "seeds": [1]})";
  text.insert(text.rfind('}'), sweep_section);
  spit(cfg, text);

  REQUIRE(run_cli("train --config " + cfg.string(), dir).exit_code == 0);
  const auto r = run_cli("analyze-posterior --config " + cfg.string(), dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  const auto csv = slurp(dir / "out" / "k_curve.csv");
  CHECK(csv.find("k,hmc_mean,hmc_std") != std::string::npos);
  CHECK(r.out.find("k=12") != std::string::npos);
}

TEST_CASE("cli oracle-check: quality ratio on a 2D net, dimension guard") {
  const auto dir = temp_dir("fa_cli_oracle");
  const auto cfg = dir / "run.json";
  std::string text = base_config(dir / "out");
  auto pos = text.find("\"n_continuous\": 2");
  text.replace(pos, std::string("\"n_continuous\": 2").size(),
               "\"n_continuous\": 1");
  const std::string oracle_section =
      R"(, "oracle": {"points": 10, "grid": 60, "pgd_steps": 40})";
  text.insert(text.rfind('}'), oracle_section);
  spit(cfg, text);

  const auto r = run_cli("oracle-check --config " + cfg.string(), dir);
  CAPTURE(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("mean_ratio=") != std::string::npos);
  REQUIRE(fs::exists(dir / "out" / "oracle_check.csv"));
  // parse the printed mean ratio and expect near-oracle quality
  const auto key = r.out.find("mean_ratio=");
  const double mean_ratio = std::stod(r.out.substr(key + 11));
  CHECK(mean_ratio >= 0.9);

  // five input dimensions: guard refuses
  const auto cfg5 = dir / "run5.json";
  spit(cfg5, base_config(dir / "out5"));  // n_continuous=2 -> 3 features: ok
  std::string text5 = base_config(dir / "out5");
  pos = text5.find("\"n_continuous\": 2");
  text5.replace(pos, std::string("\"n_continuous\": 2").size(),
                "\"n_continuous\": 4");
  spit(cfg5, text5);
  const auto r5 = run_cli("oracle-check --config " + cfg5.string(), dir);
  CHECK(r5.exit_code == 2);
}

TEST_CASE("cli fit-metric: summary printed, file reloadable") {
  const auto dir = temp_dir("fa_cli_metric");
  const auto cfg = dir / "run.json";
  spit(cfg, base_config(dir / "out"));
  const auto r = run_cli("fit-metric --config " + cfg.string(), dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("kind=weighted_lp") != std::string::npos);
  CHECK(r.out.find("theta=") != std::string::npos);
  const auto metric = io::load_metric(dir / "out" / "metric.json");
  CHECK(metric.kind() == similarity::SimilarityMetric::Kind::weighted_lp);
  // the sensitive column keeps the floor weight
  CHECK(metric.as_weighted_lp().theta(2) == 0.01);
}
