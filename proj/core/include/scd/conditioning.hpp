#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "scd/flow.hpp"

namespace scd::conditioning {

/// Which model columns to pin and to what. Targets live in model space
/// (standardized units); one target row per requested particle.
struct ConditionSpec {
  std::vector<int> conditioned_dims;
  Eigen::MatrixXd target;

  double step_size = 0.05;
  int max_iterations = 500;
  double tolerance = 1e-3;      // MSE, standardized units
  double prior_weight = 1e-3;   // eta on ||z||^2 / D, keeps codes near the prior

  /// When plain descent from the prior stalls (saturated couplings leave
  /// J^T r = 0 critical points), restart from a latent code built by
  /// splicing the targets into a decoded prior sample and polish with
  /// adaptive moments. Off by default; the detector enables it.
  bool retry_data_informed = false;
};

struct ConditionedSample {
  Eigen::MatrixXd data;  // full model width, decoded g(z-hat)
  double final_mse = 0.0;
  int iterations_used = 0;
  bool converged = false;
};

/// Mean squared error over all rows and columns of equally shaped batches.
double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Finds latent codes whose decoded rows match the targets on the
/// conditioned dimensions, imputing the rest: starts from prior draws and
/// descends MSE + eta*||z||^2/D by plain gradient steps through the
/// inverse map (plus the optional data-informed retry, see ConditionSpec).
/// Non-convergence is reported via the flag, never silently; non-finite
/// gradients throw NumericError.
ConditionedSample condition(const flow::FlowModel& model,
                            const ConditionSpec& spec, std::uint64_t seed);

}  // namespace scd::conditioning
