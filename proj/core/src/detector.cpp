#include "scd/detector.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "json.hpp"
#include "scd/common.hpp"
#include "scd/rng.hpp"

namespace scd::detector {

using flow::FlowModel;
using nlohmann::json;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

const char* to_string(Pooling p) { return p == Pooling::hard ? "hard" : "soft"; }

Pooling pooling_from_string(const std::string& s) {
  if (s == "hard") return Pooling::hard;
  if (s == "soft") return Pooling::soft;
  throw ConfigError("unknown pooling: " + s + " (expected hard or soft)");
}

void DetectorConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("alpha must be in (0, 1), got " + std::to_string(alpha));
  if (particles < 1) throw ConfigError("particles must be >= 1");
  if (matching_cap < 1) throw ConfigError("matching cap must be >= 1");
  if (conditioning.step_size <= 0 || conditioning.max_iterations < 1 ||
      conditioning.tolerance <= 0 || conditioning.prior_weight < 0)
    throw ConfigError("invalid conditioning settings");
}

// --- matching enumeration ---------------------------------------------------

namespace {

struct DimPool {
  std::vector<int> inputs, outputs;  // column indices
};

DimPool pool_of(const FlowModel& m) {
  DimPool pool;
  for (int c = 0; c < m.dim_real(); ++c) {
    if (m.prep.column_kinds[static_cast<std::size_t>(c)] == traces::DimKind::input)
      pool.inputs.push_back(c);
    else
      pool.outputs.push_back(c);
  }
  return pool;
}

bool compatible(const FlowModel& a, const FlowModel& b, int ca, int cb) {
  return a.prep.column_types[static_cast<std::size_t>(ca)] ==
         b.prep.column_types[static_cast<std::size_t>(cb)];
}

/// All injective, type-compatible mappings of exactly `size` columns from
/// `from` into `to`, lexicographic in the chosen `from` columns and, per
/// column, in the `to` column. Appends to `out`.
void enumerate_partial(const FlowModel& a, const FlowModel& b,
                       const std::vector<int>& from, const std::vector<int>& to,
                       std::size_t size,
                       std::vector<std::vector<std::pair<int, int>>>& out) {
  std::vector<std::pair<int, int>> current;
  std::vector<bool> used(to.size(), false);
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (current.size() == size) {
      out.push_back(current);
      return;
    }
    const std::size_t needed = size - current.size();
    for (std::size_t i = start; i + needed <= from.size(); ++i) {
      for (std::size_t j = 0; j < to.size(); ++j) {
        if (used[j] || !compatible(a, b, from[i], to[j])) continue;
        used[j] = true;
        current.emplace_back(from[i], to[j]);
        rec(i + 1);
        current.pop_back();
        used[j] = false;
      }
    }
  };
  rec(0);
}

}  // namespace

std::vector<CandidateMatching> enumerate_matchings(const FlowModel& a,
                                                   const FlowModel& b, int cap) {
  if (cap < 1) throw ConfigError("matching cap must be >= 1");
  const DimPool pa = pool_of(a);
  const DimPool pb = pool_of(b);
  const std::size_t max_in = std::min(pa.inputs.size(), pb.inputs.size());
  const std::size_t max_out = std::min(pa.outputs.size(), pb.outputs.size());
  std::vector<CandidateMatching> result;
  if (max_in == 0 || max_out == 0) return result;  // requirement unmet

  for (std::size_t total = max_in + max_out; total >= 2; --total) {
    for (std::size_t s_in = std::min(max_in, total - 1);
         s_in >= 1 && s_in + max_out >= total; --s_in) {
      const std::size_t s_out = total - s_in;
      if (s_out > max_out) continue;
      std::vector<std::vector<std::pair<int, int>>> ins, outs;
      enumerate_partial(a, b, pa.inputs, pb.inputs, s_in, ins);
      if (ins.empty()) continue;
      enumerate_partial(a, b, pa.outputs, pb.outputs, s_out, outs);
      for (const auto& im : ins) {
        for (const auto& om : outs) {
          CandidateMatching m;
          m.null_model_id = a.executable_id;
          m.alt_model_id = b.executable_id;
          m.pairs = im;
          m.pairs.insert(m.pairs.end(), om.begin(), om.end());
          result.push_back(std::move(m));
          if (result.size() == static_cast<std::size_t>(cap)) return result;
        }
      }
    }
  }
  return result;
}

// --- link evaluation --------------------------------------------------------

LinkResult evaluate_link(const FlowModel& m_null, const FlowModel& m_alt,
                         const std::vector<std::pair<int, int>>& k,
                         int particles, const ConditioningOptions& opts,
                         std::uint64_t seed) {
  if (particles < 1) throw ConfigError("particles must be >= 1");
  if (k.empty()) throw ConfigError("evaluate_link: empty matching");

  LinkResult res;
  Rng rng(derive_seed(seed, {"sample", m_null.executable_id, m_alt.executable_id}));
  const Eigen::MatrixXd x_null = m_null.sample(particles, rng);
  res.ll_null = m_null.log_likelihood(x_null).mean() /
                static_cast<double>(m_null.dim_real());

  // carry matched columns through raw units into the alt model's space
  const Eigen::MatrixXd raw_null = m_null.to_raw_space(x_null);
  Eigen::MatrixXd target(particles, static_cast<Eigen::Index>(k.size()));
  std::vector<int> cond_dims;
  cond_dims.reserve(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const auto [null_col, alt_col] = k[i];
    const auto& st = m_alt.prep.stats[static_cast<std::size_t>(alt_col)];
    target.col(static_cast<Eigen::Index>(i)) =
        (raw_null.col(null_col).array() - st.mean) / st.stddev;
    cond_dims.push_back(alt_col);
  }

  Eigen::MatrixXd x_alt;
  bool converged = true;
  if (static_cast<int>(cond_dims.size()) == m_alt.dim_total()) {
    // every alt column pinned: the conditioned sample is the mapped data
    x_alt.resize(particles, m_alt.dim_total());
    for (std::size_t i = 0; i < cond_dims.size(); ++i)
      x_alt.col(cond_dims[i]) = target.col(static_cast<Eigen::Index>(i));
  } else {
    conditioning::ConditionSpec spec;
    spec.conditioned_dims = cond_dims;
    spec.target = std::move(target);
    spec.step_size = opts.step_size;
    spec.max_iterations = opts.max_iterations;
    spec.tolerance = opts.tolerance;
    spec.prior_weight = opts.prior_weight;
    spec.retry_data_informed = opts.retry_data_informed;
    try {
      auto cs = conditioning::condition(
          m_alt, spec,
          derive_seed(seed, {"cond", m_null.executable_id, m_alt.executable_id}));
      x_alt = std::move(cs.data);
      converged = cs.converged;
    } catch (const NumericError&) {
      converged = false;  // unreachable target blew up; treat as rejection
    }
  }

  res.conditioning_converged = converged;
  if (!converged) {
    res.ll_alt_given_null = kNegInf;
    res.lambda = kNegInf;
    return res;
  }
  res.ll_alt_given_null = m_alt.log_likelihood(x_alt).mean() /
                          static_cast<double>(m_alt.dim_real());
  res.lambda = res.ll_alt_given_null - res.ll_null;
  return res;
}

// --- decision ---------------------------------------------------------------

CloneVerdict decide(const LinkResult& link_ab, const LinkResult& link_ba,
                    Pooling pooling, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("alpha must be in (0, 1)");
  CloneVerdict v;
  v.link_ab = link_ab;
  v.link_ba = link_ba;
  v.pooling = pooling;
  v.alpha = alpha;
  if (pooling == Pooling::hard) {
    // per-link critical value splits the total Type-1 budget
    v.threshold = std::log(alpha / 2.0);
    v.pooled_statistic = std::min(link_ab.lambda, link_ba.lambda);
  } else {
    v.threshold = std::log(alpha);
    v.pooled_statistic = 0.5 * (link_ab.lambda + link_ba.lambda);
  }
  v.is_clone = v.pooled_statistic > v.threshold;
  return v;
}

// --- pair & corpus detection -------------------------------------------------

std::optional<CloneVerdict> detect_pair(const FlowModel& a, const FlowModel& b,
                                        const DetectorConfig& cfg) {
  cfg.validate();
  const bool a_first = a.executable_id <= b.executable_id;
  const FlowModel& first = a_first ? a : b;
  const FlowModel& second = a_first ? b : a;
  const std::uint64_t pair_seed = derive_seed(
      cfg.seed, {"pair", first.executable_id, second.executable_id});

  const auto matchings = enumerate_matchings(first, second, cfg.matching_cap);
  if (matchings.empty()) return std::nullopt;

  std::optional<CloneVerdict> best;
  for (std::size_t mi = 0; mi < matchings.size(); ++mi) {
    const auto& m = matchings[mi];
    const std::uint64_t m_seed =
        derive_seed(pair_seed, {"matching", std::to_string(mi)});
    const LinkResult ab = evaluate_link(first, second, m.pairs, cfg.particles,
                                        cfg.conditioning, m_seed);
    std::vector<std::pair<int, int>> swapped;
    swapped.reserve(m.pairs.size());
    for (const auto& [x, y] : m.pairs) swapped.emplace_back(y, x);
    const LinkResult ba = evaluate_link(second, first, swapped, cfg.particles,
                                        cfg.conditioning, m_seed);
    CloneVerdict v = decide(ab, ba, cfg.pooling, cfg.alpha);
    v.matching = m;
    if (!best || v.pooled_statistic > best->pooled_statistic) best = std::move(v);
  }
  return best;
}

DetectionReport detect_all(const std::vector<FlowModel>& models,
                           const DetectorConfig& cfg, int jobs) {
  cfg.validate();
  if (models.size() < 2)
    throw ConfigError("detect_all needs at least two models");

  std::vector<std::size_t> order(models.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&models](std::size_t x, std::size_t y) {
    return models[x].executable_id < models[y].executable_id;
  });

  std::vector<std::pair<std::size_t, std::size_t>> tasks;
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j)
      tasks.emplace_back(order[i], order[j]);

  std::vector<std::optional<CloneVerdict>> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      try {
        outcomes[t] =
            detect_pair(models[tasks[t].first], models[tasks[t].second], cfg);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  int n_workers = jobs > 0 ? jobs
                           : static_cast<int>(std::thread::hardware_concurrency());
  n_workers = std::clamp<int>(n_workers, 1, static_cast<int>(tasks.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  DetectionReport report;
  report.config = cfg;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (outcomes[t]) {
      report.verdicts.push_back(std::move(*outcomes[t]));
    } else {
      report.skipped_pairs.emplace_back(models[tasks[t].first].executable_id,
                                        models[tasks[t].second].executable_id);
    }
  }
  return report;
}

// --- reports -----------------------------------------------------------------

namespace {

const FlowModel& model_by_id(const std::vector<FlowModel>& models,
                             const std::string& id) {
  for (const auto& m : models)
    if (m.executable_id == id) return m;
  throw DataError("report references unknown model " + id);
}

std::string fmt_stat(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string matching_to_string(const CandidateMatching& m, const FlowModel& a,
                               const FlowModel& b) {
  std::string s;
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    if (i) s += ';';
    s += a.prep.column_names[static_cast<std::size_t>(m.pairs[i].first)];
    s += "->";
    s += b.prep.column_names[static_cast<std::size_t>(m.pairs[i].second)];
  }
  return s;
}

void write_verdicts_csv(std::ostream& out, const DetectionReport& report,
                        const std::vector<FlowModel>& models) {
  out << "exec_a,exec_b,matching,lambda_ab,lambda_ba,pooled,threshold,pooling,"
         "alpha,particles,is_clone,converged_ab,converged_ba\n";
  for (const auto& v : report.verdicts) {
    const auto& a = model_by_id(models, v.matching.null_model_id);
    const auto& b = model_by_id(models, v.matching.alt_model_id);
    out << a.executable_id << ',' << b.executable_id << ','
        << matching_to_string(v.matching, a, b) << ','
        << fmt_stat(v.link_ab.lambda) << ',' << fmt_stat(v.link_ba.lambda) << ','
        << fmt_stat(v.pooled_statistic) << ',' << fmt_stat(v.threshold) << ','
        << to_string(v.pooling) << ',' << v.alpha << ','
        << report.config.particles << ',' << (v.is_clone ? "true" : "false")
        << ',' << (v.link_ab.conditioning_converged ? "true" : "false") << ','
        << (v.link_ba.conditioning_converged ? "true" : "false") << '\n';
  }
}

namespace {

json link_to_json(const LinkResult& l) {
  auto num = [](double v) -> json {
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    return v;
  };
  return {{"ll_null", num(l.ll_null)},
          {"ll_alt_given_null", num(l.ll_alt_given_null)},
          {"lambda", num(l.lambda)},
          {"conditioning_converged", l.conditioning_converged}};
}

}  // namespace

void write_verdicts_json(std::ostream& out, const DetectionReport& report,
                         const std::vector<FlowModel>& models) {
  json verdicts = json::array();
  for (const auto& v : report.verdicts) {
    const auto& a = model_by_id(models, v.matching.null_model_id);
    const auto& b = model_by_id(models, v.matching.alt_model_id);
    json pairs = json::array();
    for (const auto& [ca, cb] : v.matching.pairs) {
      pairs.push_back(
          {{"null_column", a.prep.column_names[static_cast<std::size_t>(ca)]},
           {"alt_column", b.prep.column_names[static_cast<std::size_t>(cb)]},
           {"null_index", ca},
           {"alt_index", cb}});
    }
    verdicts.push_back(
        {{"exec_a", a.executable_id},
         {"exec_b", b.executable_id},
         {"matching", pairs},
         {"link_ab", link_to_json(v.link_ab)},
         {"link_ba", link_to_json(v.link_ba)},
         {"pooled",
          std::isinf(v.pooled_statistic) ? json("-inf") : json(v.pooled_statistic)},
         {"threshold", v.threshold},
         {"is_clone", v.is_clone}});
  }
  json skipped = json::array();
  for (const auto& [a, b] : report.skipped_pairs) skipped.push_back({a, b});
  const json j = {{"config",
                   {{"pooling", to_string(report.config.pooling)},
                    {"alpha", report.config.alpha},
                    {"particles", report.config.particles},
                    {"matching_cap", report.config.matching_cap},
                    {"seed", report.config.seed}}},
                  {"verdicts", verdicts},
                  {"skipped_pairs", skipped}};
  out << j.dump(2) << '\n';
}

}  // namespace scd::detector
