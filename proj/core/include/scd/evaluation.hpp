#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "scd/corpus.hpp"
#include "scd/detector.hpp"

namespace scd::evaluation {

struct GroundTruth {
  std::set<std::pair<std::string, std::string>> positives;  // id-ordered pairs

  static GroundTruth from_manifest(const corpus::Manifest& m);
  bool is_positive(const std::string& a, const std::string& b) const;
};

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  long total() const { return tp + fp + tn + fn; }
};

/// Metric with an explicit undefined flag for empty denominators.
struct MetricValue {
  double value = 0.0;
  bool defined = false;
};

MetricValue precision(const ConfusionCounts& c);          // tp / (tp + fp)
MetricValue recall(const ConfusionCounts& c);             // tp / (tp + fn)
MetricValue balanced_accuracy(const ConfusionCounts& c);  // mean of the two recalls

/// Scores a detection run against ground truth. Skipped pairs do not
/// count; tp+fp+tn+fn equals the number of evaluated pairs.
ConfusionCounts score(const detector::DetectionReport& report,
                      const GroundTruth& truth);

struct GridCell {
  detector::Pooling pooling = detector::Pooling::soft;
  double alpha = 0.01;
  int particles = 100;
};

/// hard/soft x {0.001, 0.01} x {10, 50, 100}; twelve cells.
std::vector<GridCell> default_grid();

struct ExperimentResult {
  GridCell cell;
  std::uint64_t seed = 0;
  ConfusionCounts counts;
  MetricValue precision, recall, balanced_accuracy;
  detector::DetectionReport report;
};

/// Runs detect_all once per grid cell over the given models and scores
/// each run. Detection seeds derive from `seed` and the cell, so results
/// are reproducible cell by cell.
std::vector<ExperimentResult> run_experiment_grid(
    const std::vector<flow::FlowModel>& models, const GroundTruth& truth,
    const std::vector<GridCell>& grid, const detector::DetectorConfig& base,
    std::uint64_t seed, int jobs = 1);

/// CSV: pooling,type1,particles,tp,fp,tn,fn,precision,recall,balanced_accuracy,seed
void write_grid_csv(std::ostream& out,
                    const std::vector<ExperimentResult>& results);
void write_grid_json(std::ostream& out,
                     const std::vector<ExperimentResult>& results);

}  // namespace scd::evaluation
