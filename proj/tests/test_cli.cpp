#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "scd/pipeline.hpp"
#include "scd/runconfig.hpp"

using namespace scd;
using cli::RunConfig;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path root;
  explicit TempDir(const std::string& name) {
    root = fs::temp_directory_path() / name;
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempDir() { fs::remove_all(root); }
  RunConfig config() const {
    RunConfig cfg;
    cfg.traces_dir = (root / "traces").string();
    cfg.models_dir = (root / "models").string();
    cfg.reports_dir = (root / "reports").string();
    return cfg;
  }
};

// small corpus settings so the suite stays fast
void shrink(RunConfig& cfg) {
  cfg.subjects = {"Factorial_iter", "Factorial_rec", "Fibonacci_iter"};
  cfg.invocations = 300;
  cfg.train.max_epochs = 8;
  cfg.train.hidden_units = 16;
  cfg.train.coupling_layers = 2;
  cfg.train.max_rows = 1500;
  cfg.detector.particles = 25;
  cfg.jobs = 2;
}

}  // namespace

TEST_CASE("config files round-trip through JSON") {
  RunConfig cfg;
  cfg.traces_dir = "x/t";
  cfg.invocations = 123;
  cfg.train.hidden_units = 7;
  cfg.detector.alpha = 0.003;
  cfg.detector.pooling = detector::Pooling::hard;
  cfg.study_seeds = {1, 2};
  cfg.grid = {{detector::Pooling::soft, 0.01, 10}};
  const auto text = cfg.to_json_string();
  const auto back = RunConfig::from_json_string(text);
  CHECK(back.traces_dir == "x/t");
  CHECK(back.invocations == 123);
  CHECK(back.train.hidden_units == 7);
  CHECK(back.detector.alpha == 0.003);
  CHECK(back.detector.pooling == detector::Pooling::hard);
  CHECK(back.study_seeds == std::vector<std::uint64_t>{1, 2});
  REQUIRE(back.grid.size() == 1);
  CHECK(back.grid[0].particles == 10);
}

TEST_CASE("factored grid configs expand to the cross product") {
  const auto cfg = RunConfig::from_json_string(
      R"({"grid": {"pooling": ["soft"], "alpha": [0.01], "particles": [10, 50]}})");
  REQUIRE(cfg.grid.size() == 2);
  CHECK(cfg.grid[0].pooling == detector::Pooling::soft);
}

TEST_CASE("malformed configs and bad values are usage errors") {
  CHECK_THROWS_AS((void)RunConfig::from_json_string("{nope"), ConfigError);
  RunConfig cfg;
  cfg.detector.alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig();
  cfg.invocations = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("grid filters restrict the study grid") {
  const auto grid = evaluation::default_grid();
  CHECK(cli::filter_grid(grid, "particles=10").size() == 4);
  CHECK(cli::filter_grid(grid, "pooling=soft").size() == 6);
  CHECK(cli::filter_grid(grid, "pooling=soft,alpha=0.01,particles=100").size() == 1);
  CHECK(cli::filter_grid(grid, "particles=10,particles=50").size() == 8);
  CHECK_THROWS_AS((void)cli::filter_grid(grid, "bogus=1"), ConfigError);
  CHECK_THROWS_AS((void)cli::filter_grid(grid, "particles=999"), ConfigError);
}

TEST_CASE("generate writes deterministic trace files and echoes its config") {
  TempDir tmp("scd_cli_generate");
  auto cfg = tmp.config();
  shrink(cfg);
  std::stringstream out, err;
  REQUIRE(cli::cmd_generate(cfg, out, err) == 0);
  CHECK(err.str().empty());
  const auto t1 = slurp(pipeline::traces_path(cfg.traces_dir, "Factorial_rec"));
  CHECK(fs::exists(pipeline::profiles_path(cfg.traces_dir, "Factorial_iter")));
  CHECK(fs::exists(pipeline::manifest_path(cfg.traces_dir)));
  CHECK(fs::exists(fs::path(cfg.reports_dir) / "config.generate.echo.json"));

  // byte-identical rerun
  REQUIRE(cli::cmd_generate(cfg, out, err) == 0);
  CHECK(slurp(pipeline::traces_path(cfg.traces_dir, "Factorial_rec")) == t1);

  // different seed, different bytes
  auto cfg2 = cfg;
  cfg2.seed = 99;
  REQUIRE(cli::cmd_generate(cfg2, out, err) == 0);
  CHECK(slurp(pipeline::traces_path(cfg.traces_dir, "Factorial_rec")) != t1);
}

TEST_CASE("unknown subjects fail with the valid names listed") {
  TempDir tmp("scd_cli_unknown");
  auto cfg = tmp.config();
  cfg.subjects = {"Quicksort"};
  std::stringstream out, err;
  CHECK(cli::cmd_generate(cfg, out, err) == 1);
  CHECK(err.str().find("Quicksort") != std::string::npos);
  CHECK(err.str().find("Factorial_iter") != std::string::npos);
}

TEST_CASE("the full command pipeline runs end to end") {
  TempDir tmp("scd_cli_e2e");
  auto cfg = tmp.config();
  shrink(cfg);
  std::stringstream out, err;
  REQUIRE(cli::cmd_generate(cfg, out, err) == 0);

  SUBCASE("training every executable, then detecting") {
    REQUIRE(cli::cmd_train(cfg, out, err) == 0);
    CHECK(fs::exists(pipeline::model_path(cfg.models_dir, "Factorial_iter")));
    CHECK(fs::exists(pipeline::model_path(cfg.models_dir, "Factorial_rec")));
    CHECK(fs::exists(pipeline::model_path(cfg.models_dir, "Fibonacci_iter")));
    CHECK(fs::exists(fs::path(cfg.models_dir) / "training_summary.json"));

    REQUIRE(cli::cmd_detect(cfg, out, err) == 0);
    const auto csv = slurp((fs::path(cfg.reports_dir) / "verdicts.csv").string());
    CHECK(csv.find("exec_a,exec_b,matching") == 0);
    CHECK(csv.find("Factorial_iter,Factorial_rec") != std::string::npos);

    // detection reruns are byte-identical under a fixed seed
    REQUIRE(cli::cmd_detect(cfg, out, err) == 0);
    CHECK(slurp((fs::path(cfg.reports_dir) / "verdicts.csv").string()) == csv);
  }

  SUBCASE("--only trains exactly one model") {
    auto one = cfg;
    one.only = {"Factorial_iter"};
    REQUIRE(cli::cmd_train(one, out, err) == 0);
    CHECK(fs::exists(pipeline::model_path(cfg.models_dir, "Factorial_iter")));
    CHECK(!fs::exists(pipeline::model_path(cfg.models_dir, "Factorial_rec")));
  }
}

TEST_CASE("missing trace files are a data error naming the executable") {
  TempDir tmp("scd_cli_missing");
  auto cfg = tmp.config();
  shrink(cfg);
  std::stringstream out, err;
  CHECK(cli::cmd_train(cfg, out, err) == 2);
  CHECK(!err.str().empty());

  // traces exist for one subject only; asking for another one by name fails
  REQUIRE(cli::cmd_generate(cfg, out, err) == 0);
  auto only = cfg;
  only.only = {"BubbleSort_iter"};
  CHECK(cli::cmd_train(only, out, err) == 1);
  CHECK(err.str().find("BubbleSort_iter") != std::string::npos);
}

TEST_CASE("alpha outside (0,1) is a usage error at the command boundary") {
  TempDir tmp("scd_cli_alpha");
  auto cfg = tmp.config();
  cfg.detector.alpha = 1.5;
  std::stringstream out, err;
  CHECK(cli::cmd_detect(cfg, out, err) == 1);
  CHECK(err.str().find("alpha") != std::string::npos);
}

TEST_CASE("report rejects tampered grid reports and passes honest ones") {
  TempDir tmp("scd_cli_report");
  auto cfg = tmp.config();
  shrink(cfg);
  // a tiny one-seed, one-cell study keeps this fast
  cfg.subjects = {"Factorial_iter", "Fibonacci_iter"};
  cfg.study_seeds = {5};
  cfg.grid = {{detector::Pooling::soft, 0.01, 10}};
  std::stringstream out, err;
  REQUIRE(cli::cmd_evaluate(cfg, out, err) == 0);
  CHECK(fs::exists(fs::path(cfg.reports_dir) / "grid.csv"));
  REQUIRE(cli::cmd_report(cfg, out, err) == 0);
  CHECK(out.str().find("consistent") != std::string::npos);

  // flip one stored count and the recomputation must catch it
  const auto grid_path = (fs::path(cfg.reports_dir) / "grid.json").string();
  auto text = slurp(grid_path);
  const auto pos = text.find("\"tp\":");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 6, "\"tp\": 4");
  std::ofstream(grid_path, std::ios::trunc) << text;
  std::stringstream out2, err2;
  CHECK(cli::cmd_report(cfg, out2, err2) == 2);
}

#ifdef SCD_CLI_BINARY
TEST_CASE("the installed binary wires the same commands") {
  TempDir tmp("scd_cli_bin");
  const std::string out_root = (tmp.root / "run").string();
  const std::string cmd = std::string(SCD_CLI_BINARY) +
                          " generate --subjects Factorial_iter --invocations 120"
                          " --seed 3 --out " +
                          out_root + " >/dev/null 2>&1";
  REQUIRE(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(fs::path(out_root) / "traces" / "Factorial_iter.traces.jsonl"));

  const std::string bad = std::string(SCD_CLI_BINARY) +
                          " detect --alpha 1.5 --out " + out_root +
                          " >/dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(bad.c_str())) == 1);
}
#endif
