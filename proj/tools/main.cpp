// scd - semantic clone detection over runtime behavior models.
//
// Typical session:
//   scd generate --subjects all --seed 7 --out out
//   scd train    --out out --seed 7
//   scd detect   --out out --pooling soft --alpha 0.01 --particles 100
//   scd evaluate --out out --seeds 7,8,9
//   scd report   --out out

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scd/common.hpp"
#include "scd/runconfig.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_root;
  std::int64_t seed = -1;  // -1: keep config value
  int jobs = -1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file");
  cmd->add_option("--out", flags.out_root,
                  "Output root; sets traces/models/reports dirs beneath it");
  cmd->add_option("--seed", flags.seed, "Global seed");
  cmd->add_option("--jobs", flags.jobs, "Worker threads (0 = all cores)");
}

scd::cli::RunConfig make_config(const CommonFlags& flags) {
  scd::cli::RunConfig cfg;
  if (!flags.config_path.empty())
    cfg = scd::cli::RunConfig::load_file(flags.config_path);
  if (!flags.out_root.empty()) {
    const std::filesystem::path root(flags.out_root);
    cfg.traces_dir = (root / "traces").string();
    cfg.models_dir = (root / "models").string();
    cfg.reports_dir = (root / "reports").string();
  }
  if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
  if (flags.jobs >= 0) cfg.jobs = flags.jobs;
  return cfg;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    seeds.push_back(std::stoull(token));
  }
  if (seeds.empty()) throw scd::ConfigError("empty seed list");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic clone detection via per-executable behavior models"};
  app.require_subcommand(1);

  CommonFlags generate_flags, train_flags, detect_flags, evaluate_flags,
      report_flags;
  std::string subjects_arg = "all";
  std::int64_t invocations = -1;
  std::vector<std::string> only;
  std::string pooling_arg, grid_filter, seeds_arg;
  double alpha = -1.0;
  int particles = -1;

  auto* generate = app.add_subcommand("generate", "Run subjects, emit trace files");
  add_common(generate, generate_flags);
  generate->add_option("--subjects", subjects_arg,
                       "Comma-separated subject keys or 'all'");
  generate->add_option("--invocations", invocations, "Triggers per subject");

  auto* train = app.add_subcommand("train", "Fit one model per executable");
  add_common(train, train_flags);
  train->add_option("--only", only, "Train only these executables/subjects");

  auto* detect = app.add_subcommand("detect", "Pairwise clone detection");
  add_common(detect, detect_flags);
  detect->add_option("--pooling", pooling_arg, "hard | soft");
  detect->add_option("--alpha", alpha, "Type-1 error in (0,1)");
  detect->add_option("--particles", particles, "Samples per link");

  auto* evaluate = app.add_subcommand("evaluate", "Run the experiment grid");
  add_common(evaluate, evaluate_flags);
  evaluate->add_option("--grid", grid_filter,
                       "Restrict grid, e.g. particles=10 or pooling=soft");
  evaluate->add_option("--seeds", seeds_arg, "Comma-separated study seeds");

  auto* report = app.add_subcommand("report", "Re-check reports against verdicts");
  add_common(report, report_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? scd::exit_code::ok : scd::exit_code::usage;
  }

  try {
    if (generate->parsed()) {
      auto cfg = make_config(generate_flags);
      if (subjects_arg != "all" && !subjects_arg.empty()) {
        cfg.subjects.clear();
        std::stringstream ss(subjects_arg);
        std::string token;
        while (std::getline(ss, token, ','))
          if (!token.empty()) cfg.subjects.push_back(token);
      }
      if (invocations >= 0) cfg.invocations = invocations;
      return scd::cli::cmd_generate(cfg, std::cout, std::cerr);
    }
    if (train->parsed()) {
      auto cfg = make_config(train_flags);
      if (!only.empty()) cfg.only = only;
      return scd::cli::cmd_train(cfg, std::cout, std::cerr);
    }
    if (detect->parsed()) {
      auto cfg = make_config(detect_flags);
      if (!pooling_arg.empty())
        cfg.detector.pooling = scd::detector::pooling_from_string(pooling_arg);
      if (alpha >= 0) cfg.detector.alpha = alpha;
      if (particles >= 0) cfg.detector.particles = particles;
      return scd::cli::cmd_detect(cfg, std::cout, std::cerr);
    }
    if (evaluate->parsed()) {
      auto cfg = make_config(evaluate_flags);
      if (!seeds_arg.empty()) cfg.study_seeds = parse_seed_list(seeds_arg);
      if (!grid_filter.empty()) cfg.grid = scd::cli::filter_grid(cfg.grid, grid_filter);
      return scd::cli::cmd_evaluate(cfg, std::cout, std::cerr);
    }
    if (report->parsed()) {
      return scd::cli::cmd_report(make_config(report_flags), std::cout, std::cerr);
    }
  } catch (const scd::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return scd::exit_code::usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return scd::exit_code::data;
  }
  return scd::exit_code::usage;
}
