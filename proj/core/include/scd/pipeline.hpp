#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "scd/corpus.hpp"
#include "scd/detector.hpp"
#include "scd/evaluation.hpp"
#include "scd/flow.hpp"

namespace scd::pipeline {

/// Runs fn(0..n-1) on up to `jobs` worker threads (0 = hardware
/// concurrency). Rethrows the first failure after all workers stop.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

// File layout inside a trace directory:
//   <SubjectKey>.traces.jsonl    one event per line
//   <SubjectKey>.profiles.jsonl  executable profiles of the subject
//   manifest.json                subjects, classes, clone ground truth
std::string traces_path(const std::string& dir, const std::string& subject_key);
std::string profiles_path(const std::string& dir, const std::string& subject_key);
std::string manifest_path(const std::string& dir);
std::string model_path(const std::string& dir, const std::string& executable_id);

struct GenerateOptions {
  std::vector<std::string> subjects;  // subject keys; empty = all
  std::int64_t invocations = 2000;
  std::uint64_t seed = 7;
  std::string out_dir;
  int jobs = 1;
};

struct GenerateSummary {
  std::vector<std::string> trace_files;
  std::vector<std::string> profile_files;
  std::size_t executables = 0;
  std::size_t events = 0;
  std::string manifest_file;
};

/// Runs the selected subjects and writes their trace, profile and
/// manifest files. Byte-identical for identical options.
GenerateSummary generate(const GenerateOptions& opts);

struct TrainOptions {
  std::string traces_dir;
  std::string models_dir;
  std::vector<std::string> only;  // executable ids or subject keys; empty = all
  flow::TrainConfig train;
  std::uint64_t seed = 7;
  int jobs = 1;
};

struct TrainSummary {
  struct PerModel {
    std::string executable_id;
    std::string model_file;
    double best_val_nll = 0.0;
    int epochs_run = 0;
    std::size_t rows = 0;
    std::string error;  // non-empty when this model failed
  };
  std::vector<PerModel> models;
  bool all_ok() const;
};

/// Builds one dataset per executable from the trace files and trains one
/// flow per executable (in parallel across executables). A diverging
/// model is reported in its summary entry without aborting the others.
TrainSummary train_all(const TrainOptions& opts);

std::vector<flow::FlowModel> load_all_models(const std::string& models_dir);

struct DetectOptions {
  std::string models_dir;
  std::string reports_dir;
  detector::DetectorConfig config;
  int jobs = 1;
};

detector::DetectionReport detect(const DetectOptions& opts);

struct StudyOptions {
  std::string traces_root;  // per-seed trace dirs are created inside
  std::string models_root;  // per-seed model dirs are created inside
  std::vector<std::string> subjects;
  std::int64_t invocations = 2000;
  flow::TrainConfig train;
  detector::DetectorConfig detector_base;
  std::vector<evaluation::GridCell> grid;
  std::vector<std::uint64_t> seeds{7, 8, 9};
  int jobs = 1;
  bool reuse_existing = true;  // skip generate/train when outputs exist
  std::ostream* log = nullptr;
};

struct StudyResult {
  std::vector<evaluation::ExperimentResult> results;  // grid x seeds
  corpus::Manifest manifest;
};

/// The full experiment: per seed, generate traces and train all models,
/// then run every grid cell and score it against the manifest.
StudyResult run_study(const StudyOptions& opts);

}  // namespace scd::pipeline
