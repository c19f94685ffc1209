#include "scd/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "scd/common.hpp"

namespace scd::flow {

using nlohmann::json;

namespace {

constexpr double kLn2Pi = 1.8378770664093453;

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& x,
                            const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) = x.col(idx[i]);
  return out;
}

void scatter_cols(Eigen::MatrixXd& out, const Eigen::MatrixXd& sub,
                  const std::vector<Eigen::Index>& idx) {
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.col(idx[i]) = sub.col(static_cast<Eigen::Index>(i));
}

}  // namespace

// --- Mlp -------------------------------------------------------------------

Mlp::Mlp(int in, int hidden, int out)
    : w1(Eigen::MatrixXd::Zero(in, hidden)),
      w2(Eigen::MatrixXd::Zero(hidden, hidden)),
      w3(Eigen::MatrixXd::Zero(hidden, out)),
      b1(Eigen::RowVectorXd::Zero(hidden)),
      b2(Eigen::RowVectorXd::Zero(hidden)),
      b3(Eigen::RowVectorXd::Zero(out)) {}

void Mlp::init_hidden(Rng& rng) {
  auto fill = [&rng](Eigen::MatrixXd& w) {
    const double scale = std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = scale * rng.normal();
  };
  fill(w1);
  fill(w2);
  // w3/b3 stay zero: the coupling starts as the identity map
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  Eigen::MatrixXd h1 = ((x * w1).rowwise() + b1).array().tanh().matrix();
  Eigen::MatrixXd h2 = ((h1 * w2).rowwise() + b2).array().tanh().matrix();
  Eigen::MatrixXd out = (h2 * w3).rowwise() + b3;
  if (cache) {
    cache->x = x;
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
    return out;
  }
  return out;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& g_out,
                              Grads* grads) const {
  const Eigen::MatrixXd g_a2 =
      ((g_out * w3.transpose()).array() * (1.0 - cache.h2.array().square()))
          .matrix();
  const Eigen::MatrixXd g_a1 =
      ((g_a2 * w2.transpose()).array() * (1.0 - cache.h1.array().square()))
          .matrix();
  if (grads) {
    grads->w3.noalias() += cache.h2.transpose() * g_out;
    grads->b3 += g_out.colwise().sum();
    grads->w2.noalias() += cache.h1.transpose() * g_a2;
    grads->b2 += g_a2.colwise().sum();
    grads->w1.noalias() += cache.x.transpose() * g_a1;
    grads->b1 += g_a1.colwise().sum();
  }
  return g_a1 * w1.transpose();
}

Mlp::Grads Mlp::make_grads() const {
  Grads g;
  g.w1 = Eigen::MatrixXd::Zero(w1.rows(), w1.cols());
  g.w2 = Eigen::MatrixXd::Zero(w2.rows(), w2.cols());
  g.w3 = Eigen::MatrixXd::Zero(w3.rows(), w3.cols());
  g.b1 = Eigen::RowVectorXd::Zero(b1.cols());
  g.b2 = Eigen::RowVectorXd::Zero(b2.cols());
  g.b3 = Eigen::RowVectorXd::Zero(b3.cols());
  return g;
}

void Mlp::Grads::set_zero() {
  w1.setZero();
  w2.setZero();
  w3.setZero();
  b1.setZero();
  b2.setZero();
  b3.setZero();
}

void CouplingLayer::rebuild_index() {
  pass_idx.clear();
  trans_idx.clear();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    (mask[i] ? pass_idx : trans_idx).push_back(static_cast<Eigen::Index>(i));
  }
  if (pass_idx.empty() || trans_idx.empty())
    throw ConfigError("coupling mask must keep and transform at least one coordinate");
}

// --- FlowModel: forward / inverse -------------------------------------------

FlowModel::ForwardResult FlowModel::forward_with_cache(const Eigen::MatrixXd& x,
                                                       Caches& caches) const {
  caches.resize(layers.size());
  Eigen::MatrixXd cur = x;
  Eigen::VectorXd log_det = Eigen::VectorXd::Zero(x.rows());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    auto& cache = caches[l];
    const Eigen::MatrixXd x_a = gather_cols(cur, layer.pass_idx);
    cache.in_b = gather_cols(cur, layer.trans_idx);
    const Eigen::MatrixXd s_raw = layer.scale_net.forward(x_a, &cache.scale);
    cache.s =
        (layer.scale_clamp * (s_raw / layer.scale_clamp).array().tanh()).matrix();
    cache.exp_s = cache.s.array().exp().matrix();  // e^{+s} on the forward pass
    const Eigen::MatrixXd t = layer.translate_net.forward(x_a, &cache.translate);
    cache.out_b =
        (cache.in_b.array() * cache.exp_s.array() + t.array()).matrix();
    log_det += cache.s.rowwise().sum();
    scatter_cols(cur, cache.out_b, layer.trans_idx);
  }
  return {std::move(cur), std::move(log_det)};
}

FlowModel::ForwardResult FlowModel::forward(const Eigen::MatrixXd& x) const {
  Caches caches;
  return forward_with_cache(x, caches);
}

Eigen::MatrixXd FlowModel::forward_backward(const Caches& caches,
                                            const Eigen::MatrixXd& g_z,
                                            const Eigen::VectorXd& g_log_det,
                                            FlowGrads* grads) const {
  Eigen::MatrixXd g = g_z;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    const auto& cache = caches[li];
    const Eigen::MatrixXd g_ya = gather_cols(g, layer.pass_idx);
    const Eigen::MatrixXd g_yb = gather_cols(g, layer.trans_idx);

    const Eigen::MatrixXd g_xb = (g_yb.array() * cache.exp_s.array()).matrix();
    Eigen::MatrixXd g_s =
        (g_yb.array() * cache.in_b.array() * cache.exp_s.array()).matrix();
    g_s.colwise() += g_log_det;
    const Eigen::MatrixXd g_s_raw =
        (g_s.array() * (1.0 - (cache.s / layer.scale_clamp).array().square()))
            .matrix();

    Mlp::Grads* sg = grads ? &(*grads)[li].scale : nullptr;
    Mlp::Grads* tg = grads ? &(*grads)[li].translate : nullptr;
    Eigen::MatrixXd g_xa = g_ya;
    g_xa += layer.scale_net.backward(cache.scale, g_s_raw, sg);
    g_xa += layer.translate_net.backward(cache.translate, g_yb, tg);

    scatter_cols(g, g_xa, layer.pass_idx);
    scatter_cols(g, g_xb, layer.trans_idx);
  }
  return g;
}

FlowModel::InverseResult FlowModel::inverse_with_cache(const Eigen::MatrixXd& z,
                                                       Caches& caches) const {
  caches.resize(layers.size());
  Eigen::MatrixXd cur = z;
  Eigen::VectorXd log_det = Eigen::VectorXd::Zero(z.rows());
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& layer = layers[li];
    auto& cache = caches[li];
    const Eigen::MatrixXd y_a = gather_cols(cur, layer.pass_idx);
    cache.in_b = gather_cols(cur, layer.trans_idx);
    const Eigen::MatrixXd s_raw = layer.scale_net.forward(y_a, &cache.scale);
    cache.s =
        (layer.scale_clamp * (s_raw / layer.scale_clamp).array().tanh()).matrix();
    cache.exp_s = (-cache.s).array().exp().matrix();  // e^{-s} on the inverse pass
    const Eigen::MatrixXd t = layer.translate_net.forward(y_a, &cache.translate);
    cache.out_b = ((cache.in_b - t).array() * cache.exp_s.array()).matrix();
    log_det -= cache.s.rowwise().sum();
    scatter_cols(cur, cache.out_b, layer.trans_idx);
  }
  return {std::move(cur), std::move(log_det)};
}

FlowModel::InverseResult FlowModel::inverse(const Eigen::MatrixXd& z) const {
  Caches caches;
  return inverse_with_cache(z, caches);
}

Eigen::MatrixXd FlowModel::inverse_backward(const Caches& caches,
                                            const Eigen::MatrixXd& g_x) const {
  Eigen::MatrixXd g = g_x;
  // the inverse pass ran layers in reverse, so its backward runs them forward
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& layer = layers[li];
    const auto& cache = caches[li];
    const Eigen::MatrixXd g_xa = gather_cols(g, layer.pass_idx);
    const Eigen::MatrixXd g_xb = gather_cols(g, layer.trans_idx);

    const Eigen::MatrixXd g_yb = (g_xb.array() * cache.exp_s.array()).matrix();
    const Eigen::MatrixXd g_s = (-(g_xb.array() * cache.out_b.array())).matrix();
    const Eigen::MatrixXd g_s_raw =
        (g_s.array() * (1.0 - (cache.s / layer.scale_clamp).array().square()))
            .matrix();
    const Eigen::MatrixXd g_t = -g_yb;

    Eigen::MatrixXd g_ya = g_xa;
    g_ya += layer.scale_net.backward(cache.scale, g_s_raw, nullptr);
    g_ya += layer.translate_net.backward(cache.translate, g_t, nullptr);

    scatter_cols(g, g_ya, layer.pass_idx);
    scatter_cols(g, g_yb, layer.trans_idx);
  }
  return g;
}

Eigen::VectorXd FlowModel::log_prior(const Eigen::MatrixXd& z) const {
  const double d = static_cast<double>(z.cols());
  Eigen::VectorXd out = -0.5 * z.array().square().rowwise().sum().matrix();
  out.array() -= 0.5 * d * kLn2Pi;
  return out;
}

Eigen::VectorXd FlowModel::log_likelihood(const Eigen::MatrixXd& x) const {
  if (x.cols() != dim_total())
    throw ConfigError("log_likelihood: batch width " + std::to_string(x.cols()) +
                      " != model dimension " + std::to_string(dim_total()));
  if (!x.allFinite()) throw NumericError("log_likelihood: non-finite input");
  const auto fr = forward(x);
  return log_prior(fr.z) + fr.log_det;
}

Eigen::MatrixXd FlowModel::sample(int n, Rng& rng) const {
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  Eigen::MatrixXd z(n, dim_total());
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.normal();
  return inverse(z).x;
}

Eigen::MatrixXd FlowModel::to_model_space(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != dim_real())
    throw ConfigError("to_model_space: expected " + std::to_string(dim_real()) +
                      " columns");
  Eigen::MatrixXd out(raw.rows(), dim_total());
  out.leftCols(dim_real()) = traces::standardize_rows(raw, prep.stats);
  if (prep.aux_dims > 0) out.rightCols(prep.aux_dims).setZero();
  return out;
}

Eigen::MatrixXd FlowModel::to_raw_space(const Eigen::MatrixXd& model_rows) const {
  if (model_rows.cols() != dim_total())
    throw ConfigError("to_raw_space: expected " + std::to_string(dim_total()) +
                      " columns");
  return traces::destandardize_rows(model_rows.leftCols(dim_real()), prep.stats);
}

FlowGrads FlowModel::make_grads() const {
  FlowGrads g;
  g.reserve(layers.size());
  for (const auto& layer : layers)
    g.push_back({layer.scale_net.make_grads(), layer.translate_net.make_grads()});
  return g;
}

// --- loss ---------------------------------------------------------------

double nll_loss(const FlowModel& model, const Eigen::MatrixXd& batch,
                FlowGrads* grads) {
  const auto n = batch.rows();
  FlowModel::Caches caches;
  const auto fr = model.forward_with_cache(batch, caches);
  if (!fr.z.allFinite() || !fr.log_det.allFinite())
    throw NumericError("flow forward produced non-finite values");
  const double d = static_cast<double>(batch.cols());
  const double nll =
      (0.5 * d * kLn2Pi) +
      (0.5 * fr.z.array().square().sum() - fr.log_det.sum()) / static_cast<double>(n);
  if (!std::isfinite(nll)) throw NumericError("non-finite training loss");
  if (grads) {
    const Eigen::MatrixXd g_z = fr.z / static_cast<double>(n);
    const Eigen::VectorXd g_log_det =
        Eigen::VectorXd::Constant(n, -1.0 / static_cast<double>(n));
    model.forward_backward(caches, g_z, g_log_det, grads);
  }
  return nll;
}

std::vector<ParamView> parameter_views(FlowModel& model) {
  std::vector<ParamView> views;
  for (auto& layer : model.layers) {
    for (Mlp* net : {&layer.scale_net, &layer.translate_net}) {
      views.push_back({net->w1.data(), static_cast<std::size_t>(net->w1.size())});
      views.push_back({net->b1.data(), static_cast<std::size_t>(net->b1.size())});
      views.push_back({net->w2.data(), static_cast<std::size_t>(net->w2.size())});
      views.push_back({net->b2.data(), static_cast<std::size_t>(net->b2.size())});
      views.push_back({net->w3.data(), static_cast<std::size_t>(net->w3.size())});
      views.push_back({net->b3.data(), static_cast<std::size_t>(net->b3.size())});
    }
  }
  return views;
}

std::vector<ParamView> grad_views(FlowGrads& grads) {
  std::vector<ParamView> views;
  for (auto& lg : grads) {
    for (Mlp::Grads* g : {&lg.scale, &lg.translate}) {
      views.push_back({g->w1.data(), static_cast<std::size_t>(g->w1.size())});
      views.push_back({g->b1.data(), static_cast<std::size_t>(g->b1.size())});
      views.push_back({g->w2.data(), static_cast<std::size_t>(g->w2.size())});
      views.push_back({g->b2.data(), static_cast<std::size_t>(g->b2.size())});
      views.push_back({g->w3.data(), static_cast<std::size_t>(g->w3.size())});
      views.push_back({g->b3.data(), static_cast<std::size_t>(g->b3.size())});
    }
  }
  return views;
}

// --- training -------------------------------------------------------------

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m,
                          const std::vector<std::size_t>& idx, std::size_t begin,
                          std::size_t end) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(end - begin), m.cols());
  for (std::size_t i = begin; i < end; ++i)
    out.row(static_cast<Eigen::Index>(i - begin)) =
        m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Eigen::ArrayXd> m, v;
  long t = 0;

  Adam(double lr_, const std::vector<ParamView>& params) : lr(lr_) {
    for (const auto& p : params) {
      m.emplace_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(p.size)));
      v.emplace_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(p.size)));
    }
  }

  void step(const std::vector<ParamView>& params,
            const std::vector<ParamView>& grads) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Eigen::Map<Eigen::ArrayXd> w(params[i].data,
                                   static_cast<Eigen::Index>(params[i].size));
      Eigen::Map<const Eigen::ArrayXd> g(grads[i].data,
                                         static_cast<Eigen::Index>(grads[i].size));
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g.square();
      w -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
    }
  }
};

}  // namespace

FlowModel train(const traces::TraceDataset& raw, const TrainConfig& cfg,
                std::uint64_t seed) {
  if (raw.standardized)
    throw ConfigError("train expects a raw (unstandardized) dataset");
  traces::TraceDataset ds = raw;
  if (ds.row_count() < cfg.min_rows || ds.row_count() < 4)
    throw DataError("train: dataset for " + ds.executable_id + " has " +
                    std::to_string(ds.row_count()) + " rows, need " +
                    std::to_string(std::max<std::size_t>(cfg.min_rows, 4)));
  if (!ds.rows.allFinite())
    throw NumericError("train: non-finite values in dataset");

  traces::drop_constant_columns(ds);
  if (ds.column_count() == 0)
    throw DataError("train: all columns constant for " + ds.executable_id +
                    "; model untrainable");

  if (cfg.max_rows > 0 && ds.row_count() > cfg.max_rows) {
    Rng sub_rng(derive_seed(seed, {"subsample", ds.executable_id}));
    auto perm = sub_rng.permutation(ds.row_count());
    perm.resize(cfg.max_rows);
    std::sort(perm.begin(), perm.end());
    Eigen::MatrixXd kept(static_cast<Eigen::Index>(cfg.max_rows), ds.rows.cols());
    for (std::size_t i = 0; i < perm.size(); ++i)
      kept.row(static_cast<Eigen::Index>(i)) =
          ds.rows.row(static_cast<Eigen::Index>(perm[i]));
    ds.rows = std::move(kept);
  }

  traces::dequantize(ds, seed);

  const std::size_t n_rows = ds.row_count();
  Rng split_rng(derive_seed(seed, {"split", ds.executable_id}));
  const auto perm = split_rng.permutation(n_rows);
  auto n_val = static_cast<std::size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(n_rows)));
  n_val = std::clamp<std::size_t>(n_val, 1, n_rows - 2);
  std::vector<std::size_t> val_idx(perm.begin(),
                                   perm.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(perm.begin() + static_cast<long>(n_val),
                                     perm.end());

  traces::standardize(ds, train_idx);

  const int n_real = static_cast<int>(ds.column_count());
  const int aux = n_real == 1 ? 1 : 0;
  const int dim = n_real + aux;

  Eigen::MatrixXd data(static_cast<Eigen::Index>(n_rows), dim);
  data.leftCols(n_real) = ds.rows;
  if (aux) {
    Rng aux_rng(derive_seed(seed, {"aux", ds.executable_id}));
    for (Eigen::Index r = 0; r < data.rows(); ++r)
      data(r, n_real) = aux_rng.normal();
  }

  FlowModel model;
  model.executable_id = ds.executable_id;
  model.prep.column_names = ds.column_order;
  model.prep.column_types = ds.column_types;
  model.prep.column_kinds = ds.column_kinds;
  model.prep.stats = ds.stats;
  model.prep.dropped_columns = ds.dropped_columns;
  model.prep.aux_dims = aux;
  model.meta.seed = seed;

  Rng init_rng(derive_seed(seed, {"init", ds.executable_id}));
  for (int l = 0; l < cfg.coupling_layers; ++l) {
    CouplingLayer layer;
    layer.scale_clamp = cfg.scale_clamp;
    layer.mask.resize(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) layer.mask[static_cast<std::size_t>(i)] = (i + l) % 2 == 0;
    layer.rebuild_index();
    const int da = static_cast<int>(layer.pass_idx.size());
    const int db = static_cast<int>(layer.trans_idx.size());
    layer.scale_net = Mlp(da, cfg.hidden_units, db);
    layer.scale_net.init_hidden(init_rng);
    layer.translate_net = Mlp(da, cfg.hidden_units, db);
    layer.translate_net.init_hidden(init_rng);
    model.layers.push_back(std::move(layer));
  }

  std::vector<std::size_t> all_train(train_idx);
  const Eigen::MatrixXd val_data = take_rows(data, val_idx, 0, val_idx.size());

  auto evaluate = [&model](const Eigen::MatrixXd& rows) {
    return nll_loss(model, rows, nullptr);
  };

  const Eigen::MatrixXd train_data = take_rows(data, all_train, 0, all_train.size());
  double val_nll = evaluate(val_data);
  model.meta.train_curve.push_back(evaluate(train_data));
  model.meta.val_curve.push_back(val_nll);
  model.meta.best_val_nll = val_nll;
  model.meta.best_epoch = 0;

  auto best_layers = model.layers;

  auto params = parameter_views(model);
  FlowGrads grads = model.make_grads();
  auto gviews = grad_views(grads);
  Adam adam(cfg.learning_rate, params);

  Rng shuffle_rng(derive_seed(seed, {"shuffle", ds.executable_id}));
  const std::size_t n_train = all_train.size();
  const auto batch_size = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  int stale = 0;
  int epoch = 0;

  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(n_train);
    std::vector<std::size_t> shuffled(n_train);
    for (std::size_t i = 0; i < n_train; ++i) shuffled[i] = all_train[order[i]];

    double epoch_loss = 0.0;
    try {
      for (std::size_t start = 0; start < n_train; start += batch_size) {
        const std::size_t end = std::min(n_train, start + batch_size);
        const Eigen::MatrixXd batch = take_rows(data, shuffled, start, end);
        for (auto& gv : gviews)
          Eigen::Map<Eigen::ArrayXd>(gv.data, static_cast<Eigen::Index>(gv.size))
              .setZero();
        const double loss = nll_loss(model, batch, &grads);
        epoch_loss += loss * static_cast<double>(end - start);
        adam.step(params, gviews);
      }
    } catch (const NumericError& e) {
      throw NumericError("training " + ds.executable_id + " diverged at epoch " +
                         std::to_string(epoch) + ": " + e.what());
    }
    epoch_loss /= static_cast<double>(n_train);
    val_nll = evaluate(val_data);
    model.meta.train_curve.push_back(epoch_loss);
    model.meta.val_curve.push_back(val_nll);

    if (val_nll < model.meta.best_val_nll) {
      model.meta.best_val_nll = val_nll;
      model.meta.best_epoch = epoch;
      best_layers = model.layers;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  model.meta.epochs_run = std::min(epoch, cfg.max_epochs);
  model.layers = std::move(best_layers);
  return model;
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'C', 'D', 'F', 'L', 'O', 'W', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void append_tensor_sizes(const Mlp& net, std::size_t& total) {
  total += static_cast<std::size_t>(net.w1.size()) + static_cast<std::size_t>(net.b1.size());
  total += static_cast<std::size_t>(net.w2.size()) + static_cast<std::size_t>(net.b2.size());
  total += static_cast<std::size_t>(net.w3.size()) + static_cast<std::size_t>(net.b3.size());
}

template <typename Op>
void for_each_tensor(Mlp& net, Op&& op) {
  op(net.w1.data(), static_cast<std::size_t>(net.w1.size()));
  op(net.b1.data(), static_cast<std::size_t>(net.b1.size()));
  op(net.w2.data(), static_cast<std::size_t>(net.w2.size()));
  op(net.b2.data(), static_cast<std::size_t>(net.b2.size()));
  op(net.w3.data(), static_cast<std::size_t>(net.w3.size()));
  op(net.b3.data(), static_cast<std::size_t>(net.b3.size()));
}

}  // namespace

void save(const FlowModel& model, const std::string& path) {
  json layers = json::array();
  for (const auto& layer : model.layers) {
    json mask = json::array();
    for (const bool b : layer.mask) mask.push_back(b ? 1 : 0);
    layers.push_back({{"mask", mask},
                      {"hidden", layer.scale_net.w2.rows()},
                      {"scale_clamp", layer.scale_clamp}});
  }
  json columns = json::array();
  for (std::size_t i = 0; i < model.prep.column_names.size(); ++i) {
    columns.push_back({{"name", model.prep.column_names[i]},
                       {"type", traces::to_string(model.prep.column_types[i])},
                       {"kind", traces::to_string(model.prep.column_kinds[i])},
                       {"mean", model.prep.stats[i].mean},
                       {"stddev", model.prep.stats[i].stddev}});
  }
  const json header = {
      {"executable_id", model.executable_id},
      {"layers", layers},
      {"prep",
       {{"columns", columns},
        {"dropped", model.prep.dropped_columns},
        {"aux_dims", model.prep.aux_dims}}},
      {"meta",
       {{"seed", model.meta.seed},
        {"epochs_run", model.meta.epochs_run},
        {"best_epoch", model.meta.best_epoch},
        {"best_val_nll", model.meta.best_val_nll},
        {"train_curve", model.meta.train_curve},
        {"val_curve", model.meta.val_curve}}}};
  const std::string header_str = header.dump();

  std::size_t n_doubles = 0;
  for (const auto& layer : model.layers) {
    append_tensor_sizes(layer.scale_net, n_doubles);
    append_tensor_sizes(layer.translate_net, n_doubles);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  const std::uint64_t blob_len = n_doubles;
  out.write(reinterpret_cast<const char*>(&blob_len), sizeof(blob_len));
  for (const auto& layer : model.layers) {
    for (const Mlp* net : {&layer.scale_net, &layer.translate_net}) {
      for_each_tensor(const_cast<Mlp&>(*net), [&out](double* data, std::size_t n) {
        out.write(reinterpret_cast<const char*>(data),
                  static_cast<std::streamsize>(n * sizeof(double)));
      });
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

FlowModel load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  auto read_exact = [&in, &path](void* dst, std::size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
      throw DataError("corrupt model file (truncated): " + path);
  };

  char magic[8];
  read_exact(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a model file: " + path);
  std::uint32_t version = 0;
  read_exact(&version, sizeof(version));
  if (version != kFormatVersion)
    throw DataError("unsupported model file version " + std::to_string(version) +
                    " (expected " + std::to_string(kFormatVersion) + "): " + path);
  std::uint64_t header_len = 0;
  read_exact(&header_len, sizeof(header_len));
  if (header_len > (1u << 26))
    throw DataError("corrupt model file (header too large): " + path);
  std::string header_str(header_len, '\0');
  read_exact(header_str.data(), header_len);
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::parse_error& e) {
    throw DataError("corrupt model file (bad header): " + path + ": " + e.what());
  }

  FlowModel model;
  model.executable_id = header.at("executable_id").get<std::string>();
  const auto& prep = header.at("prep");
  for (const auto& col : prep.at("columns")) {
    model.prep.column_names.push_back(col.at("name").get<std::string>());
    model.prep.column_types.push_back(
        traces::abstract_type_from_string(col.at("type").get<std::string>()));
    model.prep.column_kinds.push_back(
        col.at("kind").get<std::string>() == "input" ? traces::DimKind::input
                                                     : traces::DimKind::output);
    model.prep.stats.push_back(
        {col.at("mean").get<double>(), col.at("stddev").get<double>()});
  }
  model.prep.dropped_columns =
      prep.at("dropped").get<std::vector<std::string>>();
  model.prep.aux_dims = prep.at("aux_dims").get<int>();
  const auto& meta = header.at("meta");
  model.meta.seed = meta.at("seed").get<std::uint64_t>();
  model.meta.epochs_run = meta.at("epochs_run").get<int>();
  model.meta.best_epoch = meta.at("best_epoch").get<int>();
  model.meta.best_val_nll = meta.at("best_val_nll").get<double>();
  model.meta.train_curve = meta.at("train_curve").get<std::vector<double>>();
  model.meta.val_curve = meta.at("val_curve").get<std::vector<double>>();

  const int dim = model.dim_total();
  for (const auto& lj : header.at("layers")) {
    CouplingLayer layer;
    layer.scale_clamp = lj.at("scale_clamp").get<double>();
    const auto mask = lj.at("mask").get<std::vector<int>>();
    if (static_cast<int>(mask.size()) != dim)
      throw DataError("corrupt model file (mask width): " + path);
    for (const int b : mask) layer.mask.push_back(b != 0);
    layer.rebuild_index();
    const int hidden = lj.at("hidden").get<int>();
    const int da = static_cast<int>(layer.pass_idx.size());
    const int db = static_cast<int>(layer.trans_idx.size());
    layer.scale_net = Mlp(da, hidden, db);
    layer.translate_net = Mlp(da, hidden, db);
    model.layers.push_back(std::move(layer));
  }

  std::uint64_t blob_len = 0;
  read_exact(&blob_len, sizeof(blob_len));
  std::size_t expected = 0;
  for (const auto& layer : model.layers) {
    append_tensor_sizes(layer.scale_net, expected);
    append_tensor_sizes(layer.translate_net, expected);
  }
  if (blob_len != expected)
    throw DataError("corrupt model file (weight count mismatch): " + path);
  for (auto& layer : model.layers) {
    for (Mlp* net : {&layer.scale_net, &layer.translate_net}) {
      for_each_tensor(*net, [&read_exact](double* data, std::size_t n) {
        read_exact(data, n * sizeof(double));
      });
    }
  }
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw DataError("corrupt model file (trailing bytes): " + path);
  return model;
}

double bijectivity_error(const FlowModel& model, int n, Rng& rng) {
  Eigen::MatrixXd z(n, model.dim_total());
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.normal();
  const auto x = model.inverse(z);
  const auto z2 = model.forward(x.x);
  return (z2.z - z).array().abs().maxCoeff();
}

}  // namespace scd::flow
