#include "scd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "scd/rng.hpp"

namespace scd::pipeline {

namespace fs = std::filesystem;

void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  int n_workers =
      jobs > 0 ? jobs : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::clamp<int>(n_workers, 1, static_cast<int>(n));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::string traces_path(const std::string& dir, const std::string& subject_key) {
  return (fs::path(dir) / (subject_key + ".traces.jsonl")).string();
}

std::string profiles_path(const std::string& dir, const std::string& subject_key) {
  return (fs::path(dir) / (subject_key + ".profiles.jsonl")).string();
}

std::string manifest_path(const std::string& dir) {
  return (fs::path(dir) / "manifest.json").string();
}

std::string model_path(const std::string& dir, const std::string& executable_id) {
  return (fs::path(dir) / (executable_id + ".scdmodel")).string();
}

namespace {

std::vector<corpus::SubjectSpec> select_subjects(
    const std::vector<std::string>& keys) {
  const auto all = corpus::list_subjects();
  if (keys.empty()) return all;
  std::vector<corpus::SubjectSpec> picked;
  for (const auto& key : keys) {
    const auto* spec = corpus::find_subject(all, key);
    if (!spec) {
      std::string valid;
      for (const auto& s : all) {
        if (!valid.empty()) valid += ", ";
        valid += s.key();
      }
      throw ConfigError("unknown subject " + key + " (valid: " + valid + ")");
    }
    picked.push_back(*spec);
  }
  return picked;
}

}  // namespace

GenerateSummary generate(const GenerateOptions& opts) {
  if (opts.out_dir.empty()) throw ConfigError("generate: missing output directory");
  const auto subjects = select_subjects(opts.subjects);
  std::error_code ec;
  fs::create_directories(opts.out_dir, ec);
  if (ec) throw DataError("cannot create " + opts.out_dir + ": " + ec.message());

  GenerateSummary summary;
  summary.trace_files.resize(subjects.size());
  summary.profile_files.resize(subjects.size());
  std::atomic<std::size_t> events{0};
  std::atomic<std::size_t> executables{0};

  parallel_for(subjects.size(), opts.jobs, [&](std::size_t i) {
    const auto& spec = subjects[i];
    corpus::TriggerConfig cfg;
    cfg.invocations = opts.invocations;
    cfg.seed = opts.seed;
    const auto event_map = corpus::run_subject(spec, cfg);

    std::map<std::string, traces::ExecutableProfile> profile_map;
    std::vector<traces::ExecutableProfile> profile_list;
    for (const auto& e : spec.executables) {
      profile_map[e.id] = e;
      profile_list.push_back(e);
    }
    std::vector<traces::RawTraceEvent> all_events;
    for (const auto& [exec_id, evs] : event_map) {
      all_events.insert(all_events.end(), evs.begin(), evs.end());
      executables += 1;
    }
    const auto tpath = traces_path(opts.out_dir, spec.key());
    const auto ppath = profiles_path(opts.out_dir, spec.key());
    traces::write_traces_file(tpath, all_events, profile_map);
    traces::write_profiles_file(ppath, profile_list);
    summary.trace_files[i] = tpath;
    summary.profile_files[i] = ppath;
    events += all_events.size();
  });

  summary.events = events.load();
  summary.executables = executables.load();

  // the manifest always describes the full corpus ground truth
  const auto manifest =
      corpus::make_manifest(corpus::list_subjects(), opts.invocations, opts.seed);
  summary.manifest_file = manifest_path(opts.out_dir);
  corpus::write_manifest_file(summary.manifest_file, manifest);
  return summary;
}

bool TrainSummary::all_ok() const {
  return std::all_of(models.begin(), models.end(),
                     [](const PerModel& m) { return m.error.empty(); });
}

TrainSummary train_all(const TrainOptions& opts) {
  if (opts.traces_dir.empty() || opts.models_dir.empty())
    throw ConfigError("train: missing traces/models directory");
  std::error_code ec;
  fs::create_directories(opts.models_dir, ec);
  if (ec) throw DataError("cannot create " + opts.models_dir + ": " + ec.message());

  struct Task {
    traces::ExecutableProfile profile;
    std::string subject_key;
  };
  std::vector<Task> tasks;
  const auto all = corpus::list_subjects();
  for (const auto& spec : all) {
    const auto ppath = profiles_path(opts.traces_dir, spec.key());
    if (!fs::exists(ppath)) continue;
    for (const auto& profile : traces::read_profiles_file(ppath)) {
      if (!opts.only.empty()) {
        const bool wanted =
            std::any_of(opts.only.begin(), opts.only.end(),
                        [&](const std::string& o) {
                          return o == profile.id || o == spec.key();
                        });
        if (!wanted) continue;
      }
      tasks.push_back({profile, spec.key()});
    }
  }
  if (tasks.empty()) {
    if (!opts.only.empty()) {
      std::string names;
      for (const auto& o : opts.only) {
        if (!names.empty()) names += ", ";
        names += o;
      }
      throw ConfigError("train: no trace data for " + names + " under " +
                        opts.traces_dir);
    }
    throw DataError("train: no trace files found in " + opts.traces_dir);
  }

  // group dataset construction per subject so each trace file is read once
  std::map<std::string, std::vector<traces::RawTraceEvent>> events_by_exec;
  std::set<std::string> subjects_needed;
  for (const auto& t : tasks) subjects_needed.insert(t.subject_key);
  for (const auto& key : subjects_needed) {
    const auto ppath = profiles_path(opts.traces_dir, key);
    const auto tpath = traces_path(opts.traces_dir, key);
    if (!fs::exists(tpath))
      throw DataError("train: missing trace file " + tpath);
    std::map<std::string, traces::ExecutableProfile> profile_map;
    for (const auto& p : traces::read_profiles_file(ppath)) profile_map[p.id] = p;
    for (auto& e : traces::read_traces_file(tpath, profile_map))
      events_by_exec[e.executable_id].push_back(std::move(e));
  }

  TrainSummary summary;
  summary.models.resize(tasks.size());
  parallel_for(tasks.size(), opts.jobs, [&](std::size_t i) {
    const auto& task = tasks[i];
    auto& entry = summary.models[i];
    entry.executable_id = task.profile.id;
    try {
      const auto it = events_by_exec.find(task.profile.id);
      if (it == events_by_exec.end() || it->second.empty())
        throw DataError("no events for executable " + task.profile.id);
      auto ds = traces::build_dataset(task.profile, it->second, opts.train.min_rows);
      entry.rows = ds.row_count();
      const auto model_seed = derive_seed(opts.seed, {"train", task.profile.id});
      auto model = flow::train(ds, opts.train, model_seed);
      entry.model_file = model_path(opts.models_dir, task.profile.id);
      flow::save(model, entry.model_file);
      entry.best_val_nll = model.meta.best_val_nll;
      entry.epochs_run = model.meta.epochs_run;
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
  });
  return summary;
}

std::vector<flow::FlowModel> load_all_models(const std::string& models_dir) {
  if (!fs::exists(models_dir))
    throw DataError("models directory does not exist: " + models_dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(models_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".scdmodel")
      files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw DataError("no model files (*.scdmodel) in " + models_dir);
  std::vector<flow::FlowModel> models;
  models.reserve(files.size());
  for (const auto& f : files) models.push_back(flow::load(f));
  return models;
}

detector::DetectionReport detect(const DetectOptions& opts) {
  const auto models = load_all_models(opts.models_dir);
  auto report = detector::detect_all(models, opts.config, opts.jobs);
  if (!opts.reports_dir.empty()) {
    std::error_code ec;
    fs::create_directories(opts.reports_dir, ec);
    if (ec)
      throw DataError("cannot create " + opts.reports_dir + ": " + ec.message());
    std::ofstream csv(fs::path(opts.reports_dir) / "verdicts.csv");
    detector::write_verdicts_csv(csv, report, models);
    std::ofstream js(fs::path(opts.reports_dir) / "verdicts.json");
    detector::write_verdicts_json(js, report, models);
    if (!csv || !js) throw DataError("failed writing verdict reports");
  }
  return report;
}

StudyResult run_study(const StudyOptions& opts) {
  if (opts.traces_root.empty() || opts.models_root.empty())
    throw ConfigError("study: missing traces/models directory");
  if (opts.seeds.empty()) throw ConfigError("study: no seeds");
  if (opts.grid.empty()) throw ConfigError("study: empty grid");

  StudyResult out;
  bool have_manifest = false;
  for (const auto seed : opts.seeds) {
    const auto tag = "seed_" + std::to_string(seed);
    const auto tdir = (fs::path(opts.traces_root) / tag).string();
    const auto mdir = (fs::path(opts.models_root) / tag).string();

    const bool have_traces =
        opts.reuse_existing && fs::exists(manifest_path(tdir));
    if (!have_traces) {
      if (opts.log) *opts.log << "[study] generating traces for " << tag << "\n";
      GenerateOptions gen;
      gen.subjects = opts.subjects;
      gen.invocations = opts.invocations;
      gen.seed = seed;
      gen.out_dir = tdir;
      gen.jobs = opts.jobs;
      generate(gen);
    }
    if (!have_manifest) {
      out.manifest = corpus::read_manifest_file(manifest_path(tdir));
      have_manifest = true;
    }

    bool have_models = opts.reuse_existing && fs::exists(mdir);
    if (have_models) {
      // all expected model files must be present, else retrain
      for (const auto& spec : select_subjects(opts.subjects))
        for (const auto& e : spec.executables)
          have_models = have_models && fs::exists(model_path(mdir, e.id));
    }
    if (!have_models) {
      if (opts.log) *opts.log << "[study] training models for " << tag << "\n";
      TrainOptions tr;
      tr.traces_dir = tdir;
      tr.models_dir = mdir;
      tr.train = opts.train;
      tr.seed = seed;
      tr.jobs = opts.jobs;
      const auto summary = train_all(tr);
      for (const auto& m : summary.models) {
        if (!m.error.empty())
          throw NumericError("study: training failed for " + m.executable_id +
                             ": " + m.error);
        if (opts.log)
          *opts.log << "[study]   " << m.executable_id << ": val NLL "
                    << m.best_val_nll << " after " << m.epochs_run << " epochs\n";
      }
    }

    const auto models = load_all_models(mdir);
    const auto truth = evaluation::GroundTruth::from_manifest(out.manifest);
    if (opts.log) *opts.log << "[study] running grid for " << tag << "\n";
    auto results = evaluation::run_experiment_grid(
        models, truth, opts.grid, opts.detector_base, seed, opts.jobs);
    for (auto& r : results) out.results.push_back(std::move(r));
  }
  return out;
}

}  // namespace scd::pipeline
