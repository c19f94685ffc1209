#include "scd/runconfig.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "scd/pipeline.hpp"

namespace scd::cli {

using nlohmann::json;
namespace fs = std::filesystem;

void RunConfig::validate() const {
  if (invocations <= 0) throw ConfigError("invocations must be positive");
  if (jobs < 0) throw ConfigError("jobs must be >= 0");
  if (train.max_epochs < 0 || train.batch_size < 1 || train.learning_rate <= 0 ||
      train.patience < 1 || train.coupling_layers < 1 || train.hidden_units < 1 ||
      !(train.validation_fraction > 0 && train.validation_fraction < 1) ||
      train.scale_clamp <= 0)
    throw ConfigError("invalid train settings");
  detector.validate();
  if (grid.empty()) throw ConfigError("grid must not be empty");
  if (study_seeds.empty()) throw ConfigError("study_seeds must not be empty");
  for (const auto& cell : grid) {
    if (!(cell.alpha > 0 && cell.alpha < 1))
      throw ConfigError("grid alpha must be in (0, 1)");
    if (cell.particles < 1) throw ConfigError("grid particles must be >= 1");
  }
}

namespace {

json grid_to_json(const std::vector<evaluation::GridCell>& grid) {
  json rows = json::array();
  for (const auto& c : grid)
    rows.push_back({{"pooling", detector::to_string(c.pooling)},
                    {"alpha", c.alpha},
                    {"particles", c.particles}});
  return rows;
}

std::vector<evaluation::GridCell> grid_from_json(const json& j) {
  std::vector<evaluation::GridCell> grid;
  if (j.is_array()) {
    for (const auto& cj : j) {
      grid.push_back({detector::pooling_from_string(cj.at("pooling").get<std::string>()),
                      cj.at("alpha").get<double>(),
                      cj.at("particles").get<int>()});
    }
    return grid;
  }
  // factored form: {"pooling": [...], "alpha": [...], "particles": [...]}
  const auto poolings = j.value("pooling", std::vector<std::string>{"hard", "soft"});
  const auto alphas = j.value("alpha", std::vector<double>{0.001, 0.01});
  const auto particles = j.value("particles", std::vector<int>{10, 50, 100});
  for (const auto& p : poolings)
    for (const double a : alphas)
      for (const int n : particles)
        grid.push_back({detector::pooling_from_string(p), a, n});
  return grid;
}

}  // namespace

std::string RunConfig::to_json_string() const {
  const json j = {
      {"paths",
       {{"traces", traces_dir}, {"models", models_dir}, {"reports", reports_dir}}},
      {"subjects", subjects},
      {"invocations", invocations},
      {"train",
       {{"max_epochs", train.max_epochs},
        {"batch_size", train.batch_size},
        {"learning_rate", train.learning_rate},
        {"patience", train.patience},
        {"validation_fraction", train.validation_fraction},
        {"hidden_units", train.hidden_units},
        {"coupling_layers", train.coupling_layers},
        {"scale_clamp", train.scale_clamp},
        {"min_rows", train.min_rows},
        {"max_rows", train.max_rows}}},
      {"only", only},
      {"detector",
       {{"pooling", detector::to_string(detector.pooling)},
        {"alpha", detector.alpha},
        {"particles", detector.particles},
        {"matching_cap", detector.matching_cap},
        {"conditioning",
         {{"step_size", detector.conditioning.step_size},
          {"max_iterations", detector.conditioning.max_iterations},
          {"tolerance", detector.conditioning.tolerance},
          {"prior_weight", detector.conditioning.prior_weight},
          {"retry_data_informed", detector.conditioning.retry_data_informed}}}}},
      {"grid", grid_to_json(grid)},
      {"study_seeds", study_seeds},
      {"seed", seed},
      {"jobs", jobs}};
  return j.dump(2);
}

RunConfig RunConfig::from_json_string(const std::string& text,
                                      const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": malformed JSON: " + e.what());
  }
  RunConfig cfg;
  try {
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      cfg.traces_dir = p.value("traces", cfg.traces_dir);
      cfg.models_dir = p.value("models", cfg.models_dir);
      cfg.reports_dir = p.value("reports", cfg.reports_dir);
    }
    if (j.contains("subjects")) {
      if (j["subjects"].is_string()) {
        if (j["subjects"].get<std::string>() != "all")
          throw ConfigError("subjects must be a list or \"all\"");
      } else {
        cfg.subjects = j["subjects"].get<std::vector<std::string>>();
      }
    }
    cfg.invocations = j.value("invocations", cfg.invocations);
    if (j.contains("train")) {
      const auto& t = j["train"];
      cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.patience = t.value("patience", cfg.train.patience);
      cfg.train.validation_fraction =
          t.value("validation_fraction", cfg.train.validation_fraction);
      cfg.train.hidden_units = t.value("hidden_units", cfg.train.hidden_units);
      cfg.train.coupling_layers =
          t.value("coupling_layers", cfg.train.coupling_layers);
      cfg.train.scale_clamp = t.value("scale_clamp", cfg.train.scale_clamp);
      cfg.train.min_rows = t.value("min_rows", cfg.train.min_rows);
      cfg.train.max_rows = t.value("max_rows", cfg.train.max_rows);
    }
    if (j.contains("only")) cfg.only = j["only"].get<std::vector<std::string>>();
    if (j.contains("detector")) {
      const auto& d = j["detector"];
      if (d.contains("pooling"))
        cfg.detector.pooling =
            detector::pooling_from_string(d["pooling"].get<std::string>());
      cfg.detector.alpha = d.value("alpha", cfg.detector.alpha);
      cfg.detector.particles = d.value("particles", cfg.detector.particles);
      cfg.detector.matching_cap =
          d.value("matching_cap", cfg.detector.matching_cap);
      if (d.contains("conditioning")) {
        const auto& c = d["conditioning"];
        auto& opts = cfg.detector.conditioning;
        opts.step_size = c.value("step_size", opts.step_size);
        opts.max_iterations = c.value("max_iterations", opts.max_iterations);
        opts.tolerance = c.value("tolerance", opts.tolerance);
        opts.prior_weight = c.value("prior_weight", opts.prior_weight);
        opts.retry_data_informed =
            c.value("retry_data_informed", opts.retry_data_informed);
      }
    }
    if (j.contains("grid")) cfg.grid = grid_from_json(j["grid"]);
    if (j.contains("study_seeds"))
      cfg.study_seeds = j["study_seeds"].get<std::vector<std::uint64_t>>();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.jobs = j.value("jobs", cfg.jobs);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": bad config value: " + e.what());
  }
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str(), path);
}

std::vector<evaluation::GridCell> filter_grid(
    const std::vector<evaluation::GridCell>& grid, const std::string& filter) {
  if (filter.empty()) return grid;
  std::map<std::string, std::vector<std::string>> wanted;
  std::stringstream ss(filter);
  std::string clause;
  while (std::getline(ss, clause, ',')) {
    const auto eq = clause.find('=');
    if (eq == std::string::npos)
      throw ConfigError("bad grid filter clause: " + clause +
                        " (expected key=value)");
    const auto key = clause.substr(0, eq);
    if (key != "pooling" && key != "alpha" && key != "particles")
      throw ConfigError("unknown grid filter key: " + key);
    wanted[key].push_back(clause.substr(eq + 1));
  }
  auto matches = [&wanted](const evaluation::GridCell& cell) {
    for (const auto& [key, values] : wanted) {
      bool any = false;
      for (const auto& v : values) {
        if (key == "pooling") {
          any |= detector::to_string(cell.pooling) == v;
        } else if (key == "alpha") {
          any |= std::abs(cell.alpha - std::stod(v)) < 1e-12;
        } else {
          any |= cell.particles == std::stoi(v);
        }
      }
      if (!any) return false;
    }
    return true;
  };
  std::vector<evaluation::GridCell> out;
  std::copy_if(grid.begin(), grid.end(), std::back_inserter(out), matches);
  if (out.empty()) throw ConfigError("grid filter matches no cell: " + filter);
  return out;
}

// --- commands ----------------------------------------------------------------

namespace {

int run_command(const char* /*name*/, std::ostream& err,
                const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::usage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::data;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::numeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::data;
  }
}

void echo_config(const RunConfig& cfg, const std::string& command) {
  std::error_code ec;
  fs::create_directories(cfg.reports_dir, ec);
  if (ec) throw DataError("cannot create " + cfg.reports_dir + ": " + ec.message());
  const auto path =
      (fs::path(cfg.reports_dir) / ("config." + command + ".echo.json")).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << cfg.to_json_string() << '\n';
}

detector::DetectorConfig detector_config(const RunConfig& cfg) {
  auto d = cfg.detector;
  d.seed = cfg.seed;
  return d;
}

}  // namespace

int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_command("generate", err, [&]() {
    cfg.validate();
    echo_config(cfg, "generate");
    pipeline::GenerateOptions opts;
    opts.subjects = cfg.subjects;
    opts.invocations = cfg.invocations;
    opts.seed = cfg.seed;
    opts.out_dir = cfg.traces_dir;
    opts.jobs = cfg.jobs;
    const auto summary = pipeline::generate(opts);
    out << "generated " << summary.trace_files.size() << " trace files ("
        << summary.executables << " executables, " << summary.events
        << " events) in " << cfg.traces_dir << "\n";
    for (const auto& f : summary.trace_files) out << "  " << f << "\n";
    out << "manifest: " << summary.manifest_file << "\n";
    return exit_code::ok;
  });
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_command("train", err, [&]() {
    cfg.validate();
    echo_config(cfg, "train");
    pipeline::TrainOptions opts;
    opts.traces_dir = cfg.traces_dir;
    opts.models_dir = cfg.models_dir;
    opts.only = cfg.only;
    opts.train = cfg.train;
    opts.seed = cfg.seed;
    opts.jobs = cfg.jobs;
    const auto summary = pipeline::train_all(opts);

    json rows = json::array();
    for (const auto& m : summary.models) {
      if (m.error.empty()) {
        out << m.executable_id << ": " << m.rows << " rows, " << m.epochs_run
            << " epochs, best val NLL " << std::setprecision(6) << m.best_val_nll
            << "\n";
        rows.push_back({{"executable", m.executable_id},
                        {"rows", m.rows},
                        {"epochs", m.epochs_run},
                        {"best_val_nll", m.best_val_nll},
                        {"model_file", m.model_file}});
      } else {
        err << m.executable_id << ": FAILED: " << m.error << "\n";
        rows.push_back({{"executable", m.executable_id}, {"error", m.error}});
      }
    }
    const auto path = (fs::path(cfg.models_dir) / "training_summary.json").string();
    std::ofstream sfile(path, std::ios::binary);
    if (!sfile) throw DataError("cannot write " + path);
    sfile << json({{"models", rows}}).dump(2) << '\n';
    return summary.all_ok() ? exit_code::ok : exit_code::numeric;
  });
}

int cmd_detect(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_command("detect", err, [&]() {
    cfg.validate();
    echo_config(cfg, "detect");
    pipeline::DetectOptions opts;
    opts.models_dir = cfg.models_dir;
    opts.reports_dir = cfg.reports_dir;
    opts.config = detector_config(cfg);
    opts.jobs = cfg.jobs;
    const auto report = pipeline::detect(opts);
    std::size_t clones = 0;
    for (const auto& v : report.verdicts) clones += v.is_clone ? 1 : 0;
    out << "evaluated " << report.verdicts.size() << " candidate pairs ("
        << report.skipped_pairs.size() << " skipped without valid matchings), "
        << clones << " clone pairs\n"
        << "reports: " << cfg.reports_dir << "/verdicts.{csv,json}\n";
    return exit_code::ok;
  });
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_command("evaluate", err, [&]() {
    cfg.validate();
    echo_config(cfg, "evaluate");
    pipeline::StudyOptions opts;
    opts.traces_root = cfg.traces_dir;
    opts.models_root = cfg.models_dir;
    opts.subjects = cfg.subjects;
    opts.invocations = cfg.invocations;
    opts.train = cfg.train;
    opts.detector_base = detector_config(cfg);
    opts.grid = cfg.grid;
    opts.seeds = cfg.study_seeds;
    opts.jobs = cfg.jobs;
    opts.log = &out;
    const auto study = pipeline::run_study(opts);

    std::error_code ec;
    fs::create_directories(cfg.reports_dir, ec);
    if (ec) throw DataError("cannot create " + cfg.reports_dir);
    {
      std::ofstream csv(fs::path(cfg.reports_dir) / "grid.csv");
      evaluation::write_grid_csv(csv, study.results);
      std::ofstream js(fs::path(cfg.reports_dir) / "grid.json");
      evaluation::write_grid_json(js, study.results);
      if (!csv || !js) throw DataError("failed writing grid reports");
    }
    out << "pooling  type1  particles  seed  tp  fp  tn  fn  precision  recall"
           "  balanced_accuracy\n";
    for (const auto& r : study.results) {
      auto fmt = [](const evaluation::MetricValue& m) {
        if (!m.defined) return std::string("nan");
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.2f", m.value);
        return std::string(buf);
      };
      out << detector::to_string(r.cell.pooling) << "  " << r.cell.alpha << "  "
          << r.cell.particles << "  " << r.seed << "  " << r.counts.tp << "  "
          << r.counts.fp << "  " << r.counts.tn << "  " << r.counts.fn << "  "
          << fmt(r.precision) << "  " << fmt(r.recall) << "  "
          << fmt(r.balanced_accuracy) << "\n";
    }
    out << "reports: " << cfg.reports_dir << "/grid.{csv,json}\n";
    return exit_code::ok;
  });
}

int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_command("report", err, [&]() {
    cfg.validate();
    const auto grid_path = (fs::path(cfg.reports_dir) / "grid.json").string();
    if (!fs::exists(grid_path))
      throw DataError("no grid report at " + grid_path + "; run evaluate first");

    // ground truth comes from any seed's manifest (pairs are seed-free)
    corpus::Manifest manifest;
    bool have_manifest = false;
    for (const auto seed : cfg.study_seeds) {
      const auto p = pipeline::manifest_path(
          (fs::path(cfg.traces_dir) / ("seed_" + std::to_string(seed))).string());
      if (fs::exists(p)) {
        manifest = corpus::read_manifest_file(p);
        have_manifest = true;
        break;
      }
    }
    if (!have_manifest) {
      const auto p = pipeline::manifest_path(cfg.traces_dir);
      if (!fs::exists(p)) throw DataError("no manifest found under " + cfg.traces_dir);
      manifest = corpus::read_manifest_file(p);
    }
    const auto truth = evaluation::GroundTruth::from_manifest(manifest);

    std::ifstream in(grid_path, std::ios::binary);
    json j;
    in >> j;
    std::size_t failures = 0;
    for (const auto& row : j.at("results")) {
      evaluation::ConfusionCounts recomputed;
      for (const auto& v : row.at("verdicts")) {
        const bool actual = truth.is_positive(v.at("exec_a").get<std::string>(),
                                              v.at("exec_b").get<std::string>());
        const bool predicted = v.at("is_clone").get<bool>();
        if (predicted)
          (actual ? recomputed.tp : recomputed.fp) += 1;
        else
          (actual ? recomputed.fn : recomputed.tn) += 1;
      }
      const evaluation::ConfusionCounts stored{
          row.at("tp").get<long>(), row.at("fp").get<long>(),
          row.at("tn").get<long>(), row.at("fn").get<long>()};
      auto close = [](const json& stored_metric, evaluation::MetricValue m) {
        if (stored_metric.is_null()) return !m.defined;
        return m.defined && std::abs(stored_metric.get<double>() - m.value) < 1e-9;
      };
      const bool counts_ok =
          stored.tp == recomputed.tp && stored.fp == recomputed.fp &&
          stored.tn == recomputed.tn && stored.fn == recomputed.fn;
      const bool metrics_ok =
          close(row.at("precision"), evaluation::precision(stored)) &&
          close(row.at("recall"), evaluation::recall(stored)) &&
          close(row.at("balanced_accuracy"), evaluation::balanced_accuracy(stored));
      const bool ok = counts_ok && metrics_ok;
      failures += ok ? 0 : 1;
      out << (ok ? "[ok]  " : "[FAIL] ") << row.at("pooling").get<std::string>()
          << " alpha=" << row.at("type1").get<double>()
          << " particles=" << row.at("particles").get<int>()
          << " seed=" << row.at("seed").get<std::uint64_t>() << " tp=" << stored.tp
          << " fp=" << stored.fp << " tn=" << stored.tn << " fn=" << stored.fn
          << "\n";
    }
    if (failures > 0) {
      err << failures << " grid rows failed recomputation\n";
      return exit_code::data;
    }
    out << "all grid rows consistent with recomputed counts and metrics\n";
    return exit_code::ok;
  });
}

}  // namespace scd::cli
