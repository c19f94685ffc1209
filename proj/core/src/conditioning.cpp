#include "scd/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "scd/common.hpp"
#include "scd/rng.hpp"

namespace scd::conditioning {

double mse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError("mse: shape mismatch");
  if (a.size() == 0) throw ConfigError("mse: empty batches");
  return (a - b).array().square().mean();
}

namespace {

void validate(const flow::FlowModel& model, const ConditionSpec& spec) {
  const int dim = model.dim_total();
  if (spec.conditioned_dims.empty())
    throw ConfigError("condition: no conditioned dimensions");
  if (static_cast<int>(spec.conditioned_dims.size()) >= dim)
    throw ConfigError("condition: conditioned dimensions must be a strict "
                      "subset of the model columns");
  std::set<int> seen;
  for (const int d : spec.conditioned_dims) {
    if (d < 0 || d >= dim)
      throw ConfigError("condition: dimension index out of range");
    if (!seen.insert(d).second)
      throw ConfigError("condition: duplicate conditioned dimension");
  }
  if (spec.target.cols() != static_cast<Eigen::Index>(spec.conditioned_dims.size()))
    throw ConfigError("condition: target width != conditioned dimension count");
  if (spec.target.rows() < 1) throw ConfigError("condition: empty target");
  if (!spec.target.allFinite())
    throw NumericError("condition: non-finite target");
  if (spec.step_size <= 0 || spec.max_iterations < 1 || spec.tolerance <= 0)
    throw ConfigError("condition: invalid optimizer settings");
}

enum class Stepper { plain, adaptive };
enum class StopRule { at_tolerance, objective_plateau };

// One optimization run over the latent batch. Mutates z in place and
// returns the sample decoded from the final z. With StopRule::at_tolerance
// the run ends as soon as the target error is small enough; the polish
// mode instead descends the full objective (error plus prior pull) until
// it flattens, which is what makes the imputed columns settle onto the
// learned joint.
ConditionedSample descend(const flow::FlowModel& model, const ConditionSpec& spec,
                          Eigen::MatrixXd& z, Stepper stepper, StopRule stop) {
  const auto n = spec.target.rows();
  const int dim = model.dim_total();
  const auto n_cond = static_cast<Eigen::Index>(spec.conditioned_dims.size());

  // no improvement for this many iterations means the descent is stuck
  // (stalled on a plateau or at the eta floor); stop early
  constexpr int kPlateauPatience = 60;

  Eigen::MatrixXd momentum, velocity;
  if (stepper == Stepper::adaptive) {
    momentum = Eigen::MatrixXd::Zero(n, dim);
    velocity = Eigen::MatrixXd::Zero(n, dim);
  }

  flow::FlowModel::Caches caches;
  Eigen::MatrixXd x;
  Eigen::MatrixXd restricted(n, n_cond);
  double best_mse = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  // the polish pass may ride the objective away from the target; keep the
  // most polished iterate that still meets the tolerance (or the smallest
  // error seen) and hand that back instead of the final state
  Eigen::MatrixXd kept_x;
  double kept_mse = std::numeric_limits<double>::infinity();
  bool kept_within_tol = false;
  int iter = 0;
  for (iter = 0; iter < spec.max_iterations; ++iter) {
    const auto inv = model.inverse_with_cache(z, caches);
    x = inv.x;
    if (!x.allFinite()) throw NumericError("condition: non-finite decode");
    for (Eigen::Index c = 0; c < n_cond; ++c)
      restricted.col(c) = x.col(spec.conditioned_dims[static_cast<std::size_t>(c)]);
    const double err = mse(restricted, spec.target);
    const double objective =
        stop == StopRule::at_tolerance
            ? err
            : err + spec.prior_weight * z.array().square().rowwise().sum().mean() /
                        static_cast<double>(dim);
    // progress must be a real fraction of the remaining error, otherwise
    // an unreachable target crawls along the floor for the full budget
    if (!std::isfinite(best_mse) ||
        objective < best_mse - std::max(1e-4 * best_mse, 1e-12)) {
      best_mse = objective;
      best_iter = iter;
    }
    if (stop == StopRule::objective_plateau) {
      if (err <= spec.tolerance) {
        kept_x = x;
        kept_mse = err;
        kept_within_tol = true;
      } else if (!kept_within_tol && err < kept_mse) {
        kept_x = x;
        kept_mse = err;
      }
    }
    if (stop == StopRule::at_tolerance && err <= spec.tolerance) break;
    if (iter - best_iter > kPlateauPatience) break;

    Eigen::MatrixXd g_x = Eigen::MatrixXd::Zero(n, dim);
    const double denom = static_cast<double>(n_cond);
    for (Eigen::Index c = 0; c < n_cond; ++c) {
      g_x.col(spec.conditioned_dims[static_cast<std::size_t>(c)]) =
          2.0 * (restricted.col(c) - spec.target.col(c)) / denom;
    }
    Eigen::MatrixXd g_z = model.inverse_backward(caches, g_x);
    g_z += (2.0 * spec.prior_weight / static_cast<double>(dim)) * z;
    if (!g_z.allFinite()) throw NumericError("condition: non-finite gradient");

    if (stepper == Stepper::plain) {
      z -= spec.step_size * g_z;
    } else {
      const double t = static_cast<double>(iter + 1);
      momentum = 0.9 * momentum + 0.1 * g_z;
      velocity =
          (0.999 * velocity.array() + 0.001 * g_z.array().square()).matrix();
      const double bc1 = 1.0 - std::pow(0.9, t);
      const double bc2 = 1.0 - std::pow(0.999, t);
      z.array() -= spec.step_size * (momentum.array() / bc1) /
                   ((velocity.array() / bc2).sqrt() + 1e-8);
    }
  }

  ConditionedSample out;
  if (stop == StopRule::objective_plateau && kept_x.size() > 0) {
    out.final_mse = kept_mse;
    out.data = std::move(kept_x);
  } else {
    for (Eigen::Index c = 0; c < n_cond; ++c)
      restricted.col(c) =
          x.col(spec.conditioned_dims[static_cast<std::size_t>(c)]);
    out.final_mse = mse(restricted, spec.target);
    out.data = std::move(x);
  }
  out.iterations_used = std::min(iter + 1, spec.max_iterations);
  out.converged = out.final_mse <= spec.tolerance;
  return out;
}

}  // namespace

ConditionedSample condition(const flow::FlowModel& model,
                            const ConditionSpec& spec, std::uint64_t seed) {
  validate(model, spec);
  const auto n = spec.target.rows();
  const int dim = model.dim_total();

  Rng rng(derive_seed(seed, {"condition", model.executable_id}));
  Eigen::MatrixXd z(n, dim);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < dim; ++c) z(r, c) = rng.normal();

  auto out = descend(model, spec, z, Stepper::plain, StopRule::at_tolerance);
  if (out.converged || !spec.retry_data_informed) return out;

  // Plain descent from the prior can stall where the conditioned
  // coordinates' Jacobian loses rank. The map is bijective, so a latent
  // code that hits the targets exactly always exists: decode a fresh
  // prior draw, splice the targets in, and map back. The polish pass then
  // trades a little target error for imputations nearer the joint (the
  // eta term pulls the code back into high-density latent space).
  Rng retry_rng(derive_seed(seed, {"condition-retry", model.executable_id}));
  Eigen::MatrixXd z0(n, dim);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < dim; ++c) z0(r, c) = retry_rng.normal();
  Eigen::MatrixXd x0 = model.inverse(z0).x;
  for (std::size_t c = 0; c < spec.conditioned_dims.size(); ++c)
    x0.col(spec.conditioned_dims[c]) = spec.target.col(static_cast<Eigen::Index>(c));
  z = model.forward(x0).z;

  auto retried =
      descend(model, spec, z, Stepper::adaptive, StopRule::objective_plateau);
  retried.iterations_used += out.iterations_used;
  return retried;
}

}  // namespace scd::conditioning
