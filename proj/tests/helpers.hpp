#pragma once

// Shared builders for the test suites: hand-assembled flow models with
// known weights (zero-initialized couplings are exact identities) and
// synthetic datasets.

#include <Eigen/Core>
#include <string>
#include <vector>

#include "scd/flow.hpp"
#include "scd/rng.hpp"
#include "scd/traces.hpp"

namespace scd::testing {

struct ColumnSpec {
  std::string name;
  traces::DimKind kind = traces::DimKind::input;
  traces::AbstractType type = traces::AbstractType::floating;
  double mean = 0.0;
  double stddev = 1.0;
};

inline flow::FlowModel make_model(const std::string& id,
                                  const std::vector<ColumnSpec>& columns,
                                  int n_layers = 2, int hidden = 8,
                                  double clamp = 3.0) {
  flow::FlowModel m;
  m.executable_id = id;
  for (const auto& c : columns) {
    m.prep.column_names.push_back(c.name);
    m.prep.column_kinds.push_back(c.kind);
    m.prep.column_types.push_back(c.type);
    m.prep.stats.push_back({c.mean, c.stddev});
  }
  const int dim = static_cast<int>(columns.size());
  for (int l = 0; l < n_layers; ++l) {
    flow::CouplingLayer layer;
    layer.scale_clamp = clamp;
    layer.mask.resize(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i)
      layer.mask[static_cast<std::size_t>(i)] = (i + l) % 2 == 0;
    layer.rebuild_index();
    const int da = static_cast<int>(layer.pass_idx.size());
    const int db = static_cast<int>(layer.trans_idx.size());
    layer.scale_net = flow::Mlp(da, hidden, db);
    layer.translate_net = flow::Mlp(da, hidden, db);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

/// Fills every weight (including output layers) with small random values
/// so the flow is a nontrivial bijection.
inline void randomize(flow::FlowModel& m, Rng& rng, double scale = 0.3) {
  for (auto& layer : m.layers) {
    for (flow::Mlp* net : {&layer.scale_net, &layer.translate_net}) {
      for (Eigen::MatrixXd* w : {&net->w1, &net->w2, &net->w3})
        for (Eigen::Index i = 0; i < w->size(); ++i)
          w->data()[i] = scale * rng.normal();
      for (Eigen::RowVectorXd* b : {&net->b1, &net->b2, &net->b3})
        for (Eigen::Index i = 0; i < b->size(); ++i)
          b->data()[i] = 0.1 * scale * rng.normal();
    }
  }
}

inline traces::TraceDataset make_dataset(
    const std::string& id, Eigen::MatrixXd rows,
    std::vector<traces::AbstractType> types,
    std::vector<traces::DimKind> kinds = {}) {
  traces::TraceDataset ds;
  ds.executable_id = id;
  ds.rows = std::move(rows);
  for (std::size_t c = 0; c < types.size(); ++c) {
    ds.column_order.push_back("c" + std::to_string(c));
    ds.column_types.push_back(types[c]);
    ds.column_kinds.push_back(
        kinds.empty() ? (c == 0 ? traces::DimKind::input : traces::DimKind::output)
                      : kinds[c]);
  }
  return ds;
}

/// y = slope * x + noise; x ~ N(0, x_sigma). Columns (x, y), float-typed.
inline traces::TraceDataset make_line_dataset(const std::string& id, int rows,
                                              double slope, double noise_sigma,
                                              double x_sigma, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, 2);
  for (int r = 0; r < rows; ++r) {
    const double x = x_sigma * rng.normal();
    m(r, 0) = x;
    m(r, 1) = slope * x + noise_sigma * rng.normal();
  }
  return make_dataset(id, std::move(m),
                      {traces::AbstractType::floating, traces::AbstractType::floating});
}

inline traces::TraceDataset make_gaussian_dataset(const std::string& id, int rows,
                                                  int cols, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.normal();
  std::vector<traces::AbstractType> types(static_cast<std::size_t>(cols),
                                          traces::AbstractType::floating);
  return make_dataset(id, std::move(m), types);
}

}  // namespace scd::testing
