#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "scd/evaluation.hpp"

using namespace scd;
using namespace scd::evaluation;
using detector::Pooling;

namespace {

double round2(double v) { return std::round(v * 100.0) / 100.0; }

detector::CloneVerdict verdict(const std::string& a, const std::string& b,
                               bool is_clone) {
  detector::CloneVerdict v;
  v.matching.null_model_id = a;
  v.matching.alt_model_id = b;
  v.is_clone = is_clone;
  return v;
}

}  // namespace

TEST_CASE("precision and recall reproduce the study table rows at 2 decimals") {
  // row 1: 22/0/14/0, row 2: 18/0/10/8, row 7: 8/0/26/2, row 10: 16/2/10/8
  CHECK(round2(precision({22, 0, 14, 0}).value) == 1.00);
  CHECK(round2(recall({22, 0, 14, 0}).value) == 1.00);
  CHECK(round2(balanced_accuracy({22, 0, 14, 0}).value) == 1.00);

  CHECK(round2(precision({18, 0, 10, 8}).value) == 1.00);
  CHECK(round2(recall({18, 0, 10, 8}).value) == 0.69);

  CHECK(round2(precision({8, 0, 26, 2}).value) == 1.00);
  CHECK(round2(recall({8, 0, 26, 2}).value) == 0.80);

  CHECK(round2(precision({16, 2, 10, 8}).value) == 0.89);
  CHECK(round2(recall({16, 2, 10, 8}).value) == 0.67);
}

TEST_CASE("balanced accuracy follows the formula, not the printed column") {
  // counts of table row 2 give (18/26 + 10/10)/2 = 0.84615...
  CHECK(balanced_accuracy({18, 0, 10, 8}).value ==
        doctest::Approx(0.8461538462).epsilon(1e-9));
  // row 7 counts give (8/10 + 26/26)/2 = 0.90
  CHECK(balanced_accuracy({8, 0, 26, 2}).value == doctest::Approx(0.90));
  // row 10 counts give (16/24 + 10/12)/2 = 0.75
  CHECK(balanced_accuracy({16, 2, 10, 8}).value == doctest::Approx(0.75));
}

TEST_CASE("empty denominators flag the metric as undefined") {
  CHECK(!precision({0, 0, 5, 0}).defined);
  CHECK(!recall({0, 5, 5, 0}).defined);
  CHECK(!balanced_accuracy({0, 3, 0, 0}).defined);
  CHECK(precision({1, 0, 0, 0}).defined);
}

TEST_CASE("swapping positive and negative labels keeps balanced accuracy") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionCounts c{rng.uniform_int(0, 30), rng.uniform_int(0, 30),
                      rng.uniform_int(0, 30), rng.uniform_int(0, 30)};
    const ConfusionCounts swapped{c.tn, c.fn, c.tp, c.fp};
    const auto ba = balanced_accuracy(c);
    const auto ba_swapped = balanced_accuracy(swapped);
    if (ba.defined && ba_swapped.defined)
      CHECK(ba.value == doctest::Approx(ba_swapped.value).epsilon(1e-12));
    // recall of the swapped problem is the specificity of the original
    const auto spec_orig = c.tn + c.fp > 0
                               ? double(c.tn) / double(c.tn + c.fp)
                               : -1.0;
    const auto rec_swapped = recall(swapped);
    if (rec_swapped.defined)
      CHECK(rec_swapped.value == doctest::Approx(spec_orig).epsilon(1e-12));
  }
}

TEST_CASE("metrics recompute exactly from counts") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionCounts c{rng.uniform_int(1, 40), rng.uniform_int(0, 40),
                      rng.uniform_int(1, 40), rng.uniform_int(0, 40)};
    const auto p = precision(c), r = recall(c), b = balanced_accuracy(c);
    CHECK(std::abs(p.value - double(c.tp) / double(c.tp + c.fp)) <= 1e-12);
    CHECK(std::abs(r.value - double(c.tp) / double(c.tp + c.fn)) <= 1e-12);
    CHECK(std::abs(b.value - 0.5 * (double(c.tp) / double(c.tp + c.fn) +
                                    double(c.tn) / double(c.tn + c.fp))) <= 1e-12);
  }
}

TEST_CASE("scoring a report against ground truth") {
  GroundTruth truth;
  truth.positives.insert({"a", "b"});
  truth.positives.insert({"a", "c"});

  detector::DetectionReport report;
  report.verdicts.push_back(verdict("a", "b", true));    // tp
  report.verdicts.push_back(verdict("a", "c", false));   // fn
  report.verdicts.push_back(verdict("b", "c", true));    // fp
  report.verdicts.push_back(verdict("a", "d", false));   // tn
  const auto c = score(report, truth);
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
  CHECK(c.fp == 1);
  CHECK(c.tn == 1);
  CHECK(c.total() == 4);
}

TEST_CASE("degenerate detectors have the expected metric signature") {
  GroundTruth truth;
  truth.positives.insert({"a", "b"});
  detector::DetectionReport accept_all;
  accept_all.verdicts.push_back(verdict("a", "b", true));
  accept_all.verdicts.push_back(verdict("a", "c", true));
  accept_all.verdicts.push_back(verdict("b", "c", true));
  const auto c = score(accept_all, truth);
  CHECK(recall(c).value == 1.0);
  CHECK(precision(c).value == doctest::Approx(1.0 / 3.0));

  detector::DetectionReport perfect;
  perfect.verdicts.push_back(verdict("a", "b", true));
  perfect.verdicts.push_back(verdict("a", "c", false));
  perfect.verdicts.push_back(verdict("b", "c", false));
  const auto pc = score(perfect, truth);
  CHECK(precision(pc).value == 1.0);
  CHECK(recall(pc).value == 1.0);
  CHECK(balanced_accuracy(pc).value == 1.0);
}

TEST_CASE("the default grid is the 12-cell study grid") {
  const auto grid = default_grid();
  REQUIRE(grid.size() == 12);
  int hard = 0, a001 = 0, p10 = 0;
  for (const auto& cell : grid) {
    hard += cell.pooling == Pooling::hard ? 1 : 0;
    a001 += cell.alpha == 0.001 ? 1 : 0;
    p10 += cell.particles == 10 ? 1 : 0;
  }
  CHECK(hard == 6);
  CHECK(a001 == 6);
  CHECK(p10 == 4);
}

TEST_CASE("run_experiment_grid emits one scored result per cell") {
  using scd::testing::ColumnSpec;
  std::vector<flow::FlowModel> models;
  const std::vector<ColumnSpec> cols = {
      {"n", traces::DimKind::input, traces::AbstractType::integer, 0.0, 1.0},
      {"ret", traces::DimKind::output, traces::AbstractType::integer, 0.0, 1.0}};
  models.push_back(scd::testing::make_model("a", cols));
  models.push_back(scd::testing::make_model("b", cols));
  models.push_back(scd::testing::make_model("c", cols));

  GroundTruth truth;
  truth.positives.insert({"a", "b"});
  truth.positives.insert({"a", "c"});
  truth.positives.insert({"b", "c"});

  detector::DetectorConfig base;
  const auto results =
      run_experiment_grid(models, truth, default_grid(), base, 42, 1);
  REQUIRE(results.size() == 12);
  for (const auto& r : results) {
    CHECK(r.counts.total() == 3);
    // identical identity models are clones of each other in every cell
    CHECK(r.counts.tp == 3);
    CHECK(r.recall.value == 1.0);
    CHECK(r.seed == 42);
  }

  std::stringstream csv;
  write_grid_csv(csv, results);
  const auto text = csv.str();
  CHECK(text.find("pooling,type1,particles,tp,fp,tn,fn,precision,recall,"
                  "balanced_accuracy,seed") != std::string::npos);
  CHECK(text.find("hard,0.001,10,3,0,0,0") != std::string::npos);
  std::stringstream js;
  write_grid_json(js, results);
  CHECK(js.str().find("\"results\"") != std::string::npos);
}
