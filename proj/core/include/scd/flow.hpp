#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "scd/rng.hpp"
#include "scd/traces.hpp"

namespace scd::flow {

struct TrainConfig {
  int max_epochs = 300;
  int batch_size = 256;
  double learning_rate = 1e-3;
  int patience = 30;  // epochs without validation improvement before stopping
  double validation_fraction = 0.10;
  int hidden_units = 64;
  int coupling_layers = 6;
  double scale_clamp = 3.0;
  std::size_t min_rows = 100;
  std::size_t max_rows = 12000;  // training-row cap, seeded subsample; 0 = off
};

/// Fully connected tanh network with two hidden layers; rows are samples.
/// Output weights start at zero so a fresh coupling layer is the identity.
class Mlp {
public:
  Mlp() = default;
  Mlp(int in, int hidden, int out);

  void init_hidden(Rng& rng);

  struct Cache {
    Eigen::MatrixXd x, h1, h2;
  };
  struct Grads {
    Eigen::MatrixXd w1, w2, w3;
    Eigen::RowVectorXd b1, b2, b3;
    void set_zero();
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;

  /// Backprop. Returns the gradient w.r.t. the input batch; accumulates
  /// parameter gradients into `grads` when non-null.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& g_out,
                           Grads* grads) const;

  Grads make_grads() const;

  Eigen::MatrixXd w1, w2, w3;
  Eigen::RowVectorXd b1, b2, b3;
};

/// One affine coupling transformation. Coordinates flagged true in `mask`
/// pass through unchanged and drive the scale/translation of the rest:
///   y_b = x_b * exp(s(x_a)) + t(x_a)
/// with s bounded to (-scale_clamp, scale_clamp).
struct CouplingLayer {
  std::vector<bool> mask;
  Mlp scale_net, translate_net;
  double scale_clamp = 3.0;

  std::vector<Eigen::Index> pass_idx, trans_idx;
  void rebuild_index();
};

struct Preprocessing {
  std::vector<std::string> column_names;  // retained columns, model order
  std::vector<traces::AbstractType> column_types;
  std::vector<traces::DimKind> column_kinds;
  std::vector<traces::ColumnStats> stats;
  std::vector<std::string> dropped_columns;
  int aux_dims = 0;  // unit-Gaussian padding appended when only 1 column survives
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_nll = 0.0;
  std::vector<double> train_curve, val_curve;
};

struct LayerGrads {
  Mlp::Grads scale, translate;
};
using FlowGrads = std::vector<LayerGrads>;

/// Density estimator over one executable's dimensions: a stack of coupling
/// layers mapping data to an isotropic unit Gaussian. All public math runs
/// in model space (standardized columns plus any auxiliary padding); the
/// preprocessing block converts to and from raw trace units.
class FlowModel {
public:
  std::string executable_id;
  std::vector<CouplingLayer> layers;
  Preprocessing prep;
  TrainingMeta meta;

  int dim_total() const {
    return static_cast<int>(prep.column_names.size()) + prep.aux_dims;
  }
  int dim_real() const { return static_cast<int>(prep.column_names.size()); }

  struct ForwardResult {
    Eigen::MatrixXd z;
    Eigen::VectorXd log_det;  // of the data-to-latent map, per row
  };
  struct InverseResult {
    Eigen::MatrixXd x;
    Eigen::VectorXd log_det;  // of the latent-to-data map, per row
  };

  ForwardResult forward(const Eigen::MatrixXd& x) const;
  InverseResult inverse(const Eigen::MatrixXd& z) const;

  /// ln p_X(x) = ln p_Z(f(x)) + log|det df/dx| per row.
  Eigen::VectorXd log_likelihood(const Eigen::MatrixXd& x) const;

  /// n rows of g(z), z ~ N(0, I). Full model width (including aux).
  Eigen::MatrixXd sample(int n, Rng& rng) const;

  Eigen::VectorXd log_prior(const Eigen::MatrixXd& z) const;

  /// Raw trace units -> model space (standardize, pad aux with zeros).
  Eigen::MatrixXd to_model_space(const Eigen::MatrixXd& raw) const;
  /// Model space -> raw trace units (drop aux, destandardize).
  Eigen::MatrixXd to_raw_space(const Eigen::MatrixXd& model_rows) const;

  // --- gradient machinery ---------------------------------------------

  struct LayerCache {
    Mlp::Cache scale, translate;
    Eigen::MatrixXd s, exp_s, in_b, out_b;
  };
  using Caches = std::vector<LayerCache>;

  ForwardResult forward_with_cache(const Eigen::MatrixXd& x, Caches& caches) const;
  /// Backprop through the forward pass. g_z is dL/dz, g_log_det is
  /// dL/d(log_det) per row. Accumulates parameter gradients when `grads`
  /// is non-null; returns dL/dx.
  Eigen::MatrixXd forward_backward(const Caches& caches, const Eigen::MatrixXd& g_z,
                                   const Eigen::VectorXd& g_log_det,
                                   FlowGrads* grads) const;

  InverseResult inverse_with_cache(const Eigen::MatrixXd& z, Caches& caches) const;
  /// Backprop through the inverse pass w.r.t. the latent input only
  /// (used by conditioning). Returns dL/dz given dL/dx.
  Eigen::MatrixXd inverse_backward(const Caches& caches,
                                   const Eigen::MatrixXd& g_x) const;

  FlowGrads make_grads() const;
};

/// Mean negative log-likelihood of the batch; accumulates parameter
/// gradients when `grads` is non-null. Throws NumericError on non-finite
/// intermediates.
double nll_loss(const FlowModel& model, const Eigen::MatrixXd& batch,
                FlowGrads* grads = nullptr);

/// Flat views over all trainable parameters (and matching gradient
/// buffers), fixed order. Used by the optimizer and by finite-difference
/// checks.
struct ParamView {
  double* data;
  std::size_t size;
};
std::vector<ParamView> parameter_views(FlowModel& model);
std::vector<ParamView> grad_views(FlowGrads& grads);

/// Fits a flow to the raw dataset by mini-batch gradient descent with
/// adaptive moment estimation (Adam): drops constant columns, caps rows,
/// dequantizes integer columns, splits 90/10, standardizes on the
/// training split, then minimizes mean NLL keeping the best-validation
/// weights. Deterministic given the seed.
FlowModel train(const traces::TraceDataset& raw, const TrainConfig& cfg,
                std::uint64_t seed);

/// Versioned container: JSON metadata header plus raw little-endian
/// 64-bit float weight blocks (see docs/model-format.md).
void save(const FlowModel& model, const std::string& path);
FlowModel load(const std::string& path);

/// max |f(g(z)) - z| over n prior samples; the round-trip error.
double bijectivity_error(const FlowModel& model, int n, Rng& rng);

}  // namespace scd::flow
