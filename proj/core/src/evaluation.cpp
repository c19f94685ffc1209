#include "scd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "json.hpp"
#include "scd/rng.hpp"

namespace scd::evaluation {

using detector::DetectionReport;
using detector::DetectorConfig;
using detector::Pooling;

GroundTruth GroundTruth::from_manifest(const corpus::Manifest& m) {
  GroundTruth truth;
  for (const auto& p : m.positive_pairs) {
    auto [lo, hi] = std::minmax(p.first, p.second);
    truth.positives.emplace(lo, hi);
  }
  return truth;
}

bool GroundTruth::is_positive(const std::string& a, const std::string& b) const {
  auto [lo, hi] = std::minmax(a, b);
  return positives.count({lo, hi}) > 0;
}

MetricValue precision(const ConfusionCounts& c) {
  if (c.tp + c.fp <= 0) return {std::nan(""), false};
  return {static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp), true};
}

MetricValue recall(const ConfusionCounts& c) {
  if (c.tp + c.fn <= 0) return {std::nan(""), false};
  return {static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn), true};
}

MetricValue balanced_accuracy(const ConfusionCounts& c) {
  if (c.tp + c.fn <= 0 || c.tn + c.fp <= 0) return {std::nan(""), false};
  const double pos_recall =
      static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double neg_recall =
      static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return {0.5 * (pos_recall + neg_recall), true};
}

ConfusionCounts score(const DetectionReport& report, const GroundTruth& truth) {
  ConfusionCounts c;
  for (const auto& v : report.verdicts) {
    const bool actual =
        truth.is_positive(v.matching.null_model_id, v.matching.alt_model_id);
    if (v.is_clone) {
      (actual ? c.tp : c.fp) += 1;
    } else {
      (actual ? c.fn : c.tn) += 1;
    }
  }
  return c;
}

std::vector<GridCell> default_grid() {
  std::vector<GridCell> grid;
  for (const auto pooling : {Pooling::hard, Pooling::soft})
    for (const double alpha : {0.001, 0.01})
      for (const int particles : {10, 50, 100})
        grid.push_back({pooling, alpha, particles});
  return grid;
}

std::vector<ExperimentResult> run_experiment_grid(
    const std::vector<flow::FlowModel>& models, const GroundTruth& truth,
    const std::vector<GridCell>& grid, const DetectorConfig& base,
    std::uint64_t seed, int jobs) {
  std::vector<ExperimentResult> results;
  results.reserve(grid.size());
  for (const auto& cell : grid) {
    DetectorConfig cfg = base;
    cfg.pooling = cell.pooling;
    cfg.alpha = cell.alpha;
    cfg.particles = cell.particles;
    cfg.seed = derive_seed(
        seed, {"grid", detector::to_string(cell.pooling),
               std::to_string(cell.alpha), std::to_string(cell.particles)});
    ExperimentResult r;
    r.cell = cell;
    r.seed = seed;
    r.report = detector::detect_all(models, cfg, jobs);
    r.counts = score(r.report, truth);
    r.precision = precision(r.counts);
    r.recall = recall(r.counts);
    r.balanced_accuracy = balanced_accuracy(r.counts);
    results.push_back(std::move(r));
  }
  return results;
}

namespace {

std::string fmt_metric(const MetricValue& m) {
  if (!m.defined) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", m.value);
  return buf;
}

}  // namespace

void write_grid_csv(std::ostream& out,
                    const std::vector<ExperimentResult>& results) {
  out << "pooling,type1,particles,tp,fp,tn,fn,precision,recall,"
         "balanced_accuracy,seed\n";
  for (const auto& r : results) {
    out << detector::to_string(r.cell.pooling) << ',' << r.cell.alpha << ','
        << r.cell.particles << ',' << r.counts.tp << ',' << r.counts.fp << ','
        << r.counts.tn << ',' << r.counts.fn << ',' << fmt_metric(r.precision)
        << ',' << fmt_metric(r.recall) << ',' << fmt_metric(r.balanced_accuracy)
        << ',' << r.seed << '\n';
  }
}

void write_grid_json(std::ostream& out,
                     const std::vector<ExperimentResult>& results) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto& r : results) {
    auto metric = [](const MetricValue& m) -> json {
      if (!m.defined) return nullptr;
      return m.value;
    };
    json verdicts = json::array();
    for (const auto& v : r.report.verdicts) {
      verdicts.push_back({{"exec_a", v.matching.null_model_id},
                          {"exec_b", v.matching.alt_model_id},
                          {"is_clone", v.is_clone},
                          {"pooled",
                           std::isinf(v.pooled_statistic)
                               ? json("-inf")
                               : json(v.pooled_statistic)}});
    }
    rows.push_back({{"pooling", detector::to_string(r.cell.pooling)},
                    {"type1", r.cell.alpha},
                    {"particles", r.cell.particles},
                    {"seed", r.seed},
                    {"tp", r.counts.tp},
                    {"fp", r.counts.fp},
                    {"tn", r.counts.tn},
                    {"fn", r.counts.fn},
                    {"precision", metric(r.precision)},
                    {"recall", metric(r.recall)},
                    {"balanced_accuracy", metric(r.balanced_accuracy)},
                    {"skipped_pairs", r.report.skipped_pairs.size()},
                    {"verdicts", verdicts}});
  }
  out << json({{"results", rows}}).dump(2) << '\n';
}

}  // namespace scd::evaluation
