#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scd/conditioning.hpp"
#include "scd/flow.hpp"

namespace scd::detector {

enum class Pooling { hard, soft };
const char* to_string(Pooling p);
Pooling pooling_from_string(const std::string& s);

struct ConditioningOptions {
  double step_size = 0.05;
  int max_iterations = 500;
  double tolerance = 1e-3;
  double prior_weight = 1e-3;
  bool retry_data_informed = true;  // rescue stalled descents, see conditioning
};

struct DetectorConfig {
  Pooling pooling = Pooling::soft;
  double alpha = 0.01;  // Type-1 error of the ratio test
  int particles = 100;
  int matching_cap = 64;
  ConditioningOptions conditioning;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on alpha outside (0,1) etc.
};

/// A candidate dimension mapping between two models: pairs of column
/// indices into the models' retained columns. Valid matchings map at
/// least one input and one output dimension, agree in kind and abstract
/// type pairwise, and repeat no column on either side.
struct CandidateMatching {
  std::string null_model_id, alt_model_id;
  std::vector<std::pair<int, int>> pairs;  // (null column, alt column)

  std::size_t size() const { return pairs.size(); }
};

/// All candidate matchings between the two models' columns, largest
/// first, deduplicated, truncated at cap. Auxiliary padding dimensions
/// never participate. Empty when the input+output requirement cannot be
/// met.
std::vector<CandidateMatching> enumerate_matchings(const flow::FlowModel& a,
                                                   const flow::FlowModel& b,
                                                   int cap);

struct LinkResult {
  double ll_null = 0.0;            // mean per-particle, per-dimension
  double ll_alt_given_null = 0.0;  // same statistic on the conditioned sample
  double lambda = 0.0;             // ll_alt_given_null - ll_null
  bool conditioning_converged = true;
};

/// One direction of the cross-wise evaluation: sample the null model,
/// carry the matched columns through raw space into the alt model's
/// space, condition the alt model on them, and compare the two
/// per-dimension likelihood levels. Non-converged conditioning yields
/// lambda = -inf (certain rejection), never an exception.
LinkResult evaluate_link(const flow::FlowModel& m_null,
                         const flow::FlowModel& m_alt,
                         const std::vector<std::pair<int, int>>& k,
                         int particles, const ConditioningOptions& opts,
                         std::uint64_t seed);

struct CloneVerdict {
  CandidateMatching matching;
  LinkResult link_ab, link_ba;
  Pooling pooling = Pooling::soft;
  double alpha = 0.01;
  double pooled_statistic = 0.0;
  double threshold = 0.0;
  bool is_clone = false;
};

/// Pools the two log-likelihood ratios into the clone decision.
/// hard: both lambdas must exceed ln(alpha/2) (the Type-1 budget is split
/// across the links); soft: the mean lambda must exceed ln(alpha).
CloneVerdict decide(const LinkResult& link_ab, const LinkResult& link_ba,
                    Pooling pooling, double alpha);

/// Best verdict over all enumerated matchings (highest pooled statistic);
/// the pair is a clone when any matching is accepted. Links run in both
/// directions regardless of argument order and the per-pair seed is
/// derived from the two ids, so the result is symmetric. Returns nullopt
/// when no valid matching exists.
std::optional<CloneVerdict> detect_pair(const flow::FlowModel& a,
                                        const flow::FlowModel& b,
                                        const DetectorConfig& cfg);

struct DetectionReport {
  std::vector<CloneVerdict> verdicts;  // one per evaluated pair, id-sorted
  std::vector<std::pair<std::string, std::string>> skipped_pairs;
  DetectorConfig config;
};

/// Runs detect_pair over all unordered pairs of distinct models; pairs
/// without valid matchings are skipped and counted. `jobs` bounds worker
/// threads (0 = hardware concurrency); results are independent of it.
DetectionReport detect_all(const std::vector<flow::FlowModel>& models,
                           const DetectorConfig& cfg, int jobs = 1);

/// Matching rendered as "a.n->b.lo;a.ret->b.mid" using column names.
std::string matching_to_string(const CandidateMatching& m,
                               const flow::FlowModel& a,
                               const flow::FlowModel& b);

void write_verdicts_csv(std::ostream& out, const DetectionReport& report,
                        const std::vector<flow::FlowModel>& models);
void write_verdicts_json(std::ostream& out, const DetectionReport& report,
                         const std::vector<flow::FlowModel>& models);

}  // namespace scd::detector
