#include "scd/traces.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "scd/rng.hpp"

namespace scd::traces {

using nlohmann::json;

DimKind kind_of(DimSource source) {
  switch (source) {
    case DimSource::parameter:
    case DimSource::property_read:
    case DimSource::invocation_return:
      return DimKind::input;
    case DimSource::return_value:
    case DimSource::property_write:
    case DimSource::invocation_param:
      return DimKind::output;
  }
  throw DataError("unknown dimension source");
}

const char* to_string(DimKind k) {
  return k == DimKind::input ? "input" : "output";
}

const char* to_string(DimSource s) {
  switch (s) {
    case DimSource::parameter: return "parameter";
    case DimSource::return_value: return "return_value";
    case DimSource::property_read: return "property_read";
    case DimSource::property_write: return "property_write";
    case DimSource::invocation_param: return "invocation_param";
    case DimSource::invocation_return: return "invocation_return";
  }
  return "?";
}

const char* to_string(AbstractType t) {
  switch (t) {
    case AbstractType::integer: return "integer";
    case AbstractType::floating: return "float";
    case AbstractType::text: return "text";
  }
  return "?";
}

DimSource dim_source_from_string(const std::string& s) {
  if (s == "parameter") return DimSource::parameter;
  if (s == "return_value") return DimSource::return_value;
  if (s == "property_read") return DimSource::property_read;
  if (s == "property_write") return DimSource::property_write;
  if (s == "invocation_param") return DimSource::invocation_param;
  if (s == "invocation_return") return DimSource::invocation_return;
  throw DataError("unknown dimension source: " + s);
}

AbstractType abstract_type_from_string(const std::string& s) {
  if (s == "integer") return AbstractType::integer;
  if (s == "float") return AbstractType::floating;
  if (s == "text") return AbstractType::text;
  throw DataError("unknown abstract type: " + s);
}

void ExecutableProfile::validate() const {
  if (input_count() == 0 || output_count() == 0) {
    throw DataError("profile " + id +
                    ": needs at least one input and one output dimension");
  }
  std::set<std::string> names;
  for (const auto& d : dims) {
    if (!names.insert(d.name).second) {
      throw DataError("profile " + id + ": duplicate dimension " + d.name);
    }
  }
}

std::size_t ExecutableProfile::input_count() const {
  return static_cast<std::size_t>(
      std::count_if(dims.begin(), dims.end(),
                    [](const Dimension& d) { return d.kind() == DimKind::input; }));
}

std::size_t ExecutableProfile::output_count() const {
  return dims.size() - input_count();
}

std::size_t ExecutableProfile::parameter_count() const {
  return static_cast<std::size_t>(
      std::count_if(dims.begin(), dims.end(), [](const Dimension& d) {
        return d.source == DimSource::parameter;
      }));
}

const Dimension* ExecutableProfile::find(const std::string& name) const {
  for (const auto& d : dims)
    if (d.name == name) return &d;
  return nullptr;
}

std::optional<std::size_t> TraceDataset::column_index(
    const std::string& name) const {
  for (std::size_t i = 0; i < column_order.size(); ++i)
    if (column_order[i] == name) return i;
  return std::nullopt;
}

std::vector<Eigen::RowVectorXd> explode(const ExecutableProfile& profile,
                                        const RawTraceEvent& event) {
  const std::size_t d = profile.dims.size();
  if (event.values.size() != d) {
    throw DataError("event for " + profile.id + ": expected " +
                    std::to_string(d) + " dimensions, got " +
                    std::to_string(event.values.size()));
  }
  std::size_t list_len = 0;
  std::vector<const TraceValue*> vals(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto it = event.values.find(profile.dims[i].name);
    if (it == event.values.end()) {
      throw DataError("event for " + profile.id + ": missing dimension " +
                      profile.dims[i].name);
    }
    vals[i] = &it->second;
    if (it->second.is_list) {
      const std::size_t len = it->second.values.size();
      if (list_len != 0 && len != list_len) {
        throw DataError("event for " + profile.id + ": ragged lists (" +
                        std::to_string(list_len) + " vs " +
                        std::to_string(len) + ") on dimension " +
                        profile.dims[i].name);
      }
      list_len = len;
    } else if (it->second.values.size() != 1) {
      throw DataError("event for " + profile.id +
                      ": scalar dimension with != 1 value");
    }
  }
  const std::size_t n_rows = list_len == 0 ? 1 : list_len;
  std::vector<Eigen::RowVectorXd> rows(n_rows, Eigen::RowVectorXd(d));
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const TraceValue& v = *vals[i];
      rows[r](static_cast<Eigen::Index>(i)) =
          v.is_list ? v.values[r] : v.values[0];
    }
  }
  return rows;
}

TraceDataset build_dataset(const ExecutableProfile& profile,
                           const std::vector<RawTraceEvent>& events,
                           std::size_t min_rows) {
  profile.validate();
  std::vector<Eigen::RowVectorXd> all;
  for (const auto& e : events) {
    if (e.executable_id != profile.id) {
      throw DataError("event executable " + e.executable_id +
                      " does not match profile " + profile.id);
    }
    auto rows = explode(profile, e);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  if (all.size() < min_rows) {
    throw DataError("dataset for " + profile.id + ": " +
                    std::to_string(all.size()) + " rows < minimum " +
                    std::to_string(min_rows));
  }
  TraceDataset ds;
  ds.executable_id = profile.id;
  ds.rows.resize(static_cast<Eigen::Index>(all.size()),
                 static_cast<Eigen::Index>(profile.dims.size()));
  for (std::size_t r = 0; r < all.size(); ++r)
    ds.rows.row(static_cast<Eigen::Index>(r)) = all[r];
  for (const auto& dim : profile.dims) {
    ds.column_order.push_back(dim.name);
    ds.column_types.push_back(dim.type);
    ds.column_kinds.push_back(dim.kind());
  }
  if (!ds.rows.allFinite())
    throw NumericError("dataset for " + profile.id + ": non-finite values");
  return ds;
}

void drop_constant_columns(TraceDataset& ds) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < ds.rows.cols(); ++c) {
    const double first = ds.rows(0, c);
    const bool constant = (ds.rows.col(c).array() == first).all();
    if (constant) {
      ds.dropped_columns.push_back(ds.column_order[static_cast<std::size_t>(c)]);
    } else {
      keep.push_back(c);
    }
  }
  if (keep.size() == static_cast<std::size_t>(ds.rows.cols())) return;
  Eigen::MatrixXd pruned(ds.rows.rows(), static_cast<Eigen::Index>(keep.size()));
  std::vector<std::string> order;
  std::vector<AbstractType> types;
  std::vector<DimKind> kinds;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    pruned.col(static_cast<Eigen::Index>(i)) = ds.rows.col(keep[i]);
    order.push_back(ds.column_order[static_cast<std::size_t>(keep[i])]);
    types.push_back(ds.column_types[static_cast<std::size_t>(keep[i])]);
    kinds.push_back(ds.column_kinds[static_cast<std::size_t>(keep[i])]);
  }
  ds.rows = std::move(pruned);
  ds.column_order = std::move(order);
  ds.column_types = std::move(types);
  ds.column_kinds = std::move(kinds);
}

void dequantize(TraceDataset& ds, std::uint64_t seed) {
  for (Eigen::Index c = 0; c < ds.rows.cols(); ++c) {
    if (ds.column_types[static_cast<std::size_t>(c)] != AbstractType::integer)
      continue;
    Rng rng(derive_seed(seed,
                        {"dequantize", ds.executable_id,
                         ds.column_order[static_cast<std::size_t>(c)]}));
    for (Eigen::Index r = 0; r < ds.rows.rows(); ++r)
      ds.rows(r, c) += rng.uniform();
  }
}

void standardize(TraceDataset& ds, const std::vector<std::size_t>& stat_rows) {
  const Eigen::Index r_total = ds.rows.rows();
  if (r_total < 2) throw DataError("standardize: need at least 2 rows");
  std::vector<std::size_t> idx = stat_rows;
  if (idx.empty()) {
    idx.resize(static_cast<std::size_t>(r_total));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }
  const double n = static_cast<double>(idx.size());
  ds.stats.assign(ds.column_order.size(), ColumnStats{});
  for (Eigen::Index c = 0; c < ds.rows.cols(); ++c) {
    double sum = 0.0;
    for (const auto r : idx) sum += ds.rows(static_cast<Eigen::Index>(r), c);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto r : idx) {
      const double d = ds.rows(static_cast<Eigen::Index>(r), c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1.0));  // sample convention
    if (sd <= 0.0) {
      throw DataError("standardize: column " +
                      ds.column_order[static_cast<std::size_t>(c)] +
                      " is constant over the stat rows");
    }
    ds.stats[static_cast<std::size_t>(c)] = {mean, sd};
    ds.rows.col(c) = (ds.rows.col(c).array() - mean) / sd;
  }
  ds.standardized = true;
}

Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& raw,
                                 const std::vector<ColumnStats>& stats) {
  Eigen::MatrixXd out = raw;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const auto& s = stats[static_cast<std::size_t>(c)];
    out.col(c) = (out.col(c).array() - s.mean) / s.stddev;
  }
  return out;
}

Eigen::MatrixXd destandardize_rows(const Eigen::MatrixXd& standardized,
                                   const std::vector<ColumnStats>& stats) {
  Eigen::MatrixXd out = standardized;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const auto& s = stats[static_cast<std::size_t>(c)];
    out.col(c) = out.col(c).array() * s.stddev + s.mean;
  }
  return out;
}

namespace {

json value_to_json(const TraceValue& v, AbstractType type) {
  auto one = [type](double x) -> json {
    if (type == AbstractType::integer && std::floor(x) == x &&
        std::abs(x) < 9.0e18) {
      return static_cast<std::int64_t>(x);
    }
    return x;
  };
  if (!v.is_list) return one(v.values[0]);
  json arr = json::array();
  for (const double x : v.values) arr.push_back(one(x));
  return arr;
}

TraceValue value_from_json(const json& j) {
  if (j.is_array()) {
    std::vector<double> xs;
    xs.reserve(j.size());
    for (const auto& e : j) {
      if (!e.is_number()) throw DataError("non-numeric list element");
      xs.push_back(e.get<double>());
    }
    return TraceValue::list(std::move(xs));
  }
  if (!j.is_number()) throw DataError("non-numeric value");
  return TraceValue::scalar(j.get<double>());
}

}  // namespace

void write_traces(std::ostream& out, const std::vector<RawTraceEvent>& events,
                  const std::map<std::string, ExecutableProfile>& profiles) {
  for (const auto& e : events) {
    const auto it = profiles.find(e.executable_id);
    if (it == profiles.end())
      throw DataError("write_traces: unknown executable " + e.executable_id);
    const auto& profile = it->second;
    json values = json::object();
    // serialize in profile dimension order so output is stable
    for (const auto& dim : profile.dims) {
      const auto vit = e.values.find(dim.name);
      if (vit == e.values.end())
        throw DataError("write_traces: event missing dimension " + dim.name);
      values[dim.name] = value_to_json(vit->second, dim.type);
    }
    json line = {{"exec", e.executable_id}, {"values", values}};
    out << line.dump() << '\n';
  }
}

void write_traces_file(const std::string& path,
                       const std::vector<RawTraceEvent>& events,
                       const std::map<std::string, ExecutableProfile>& profiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  write_traces(out, events, profiles);
  if (!out) throw DataError("write failed: " + path);
}

std::vector<RawTraceEvent> read_traces(
    std::istream& in, const std::map<std::string, ExecutableProfile>& profiles,
    const std::string& origin) {
  std::vector<RawTraceEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(origin + ":" + std::to_string(line_no) +
                      ": malformed line: " + e.what());
    }
    if (!j.contains("exec") || !j.contains("values")) {
      throw DataError(origin + ":" + std::to_string(line_no) +
                      ": missing exec/values");
    }
    RawTraceEvent e;
    e.executable_id = j["exec"].get<std::string>();
    const auto pit = profiles.find(e.executable_id);
    if (pit == profiles.end()) {
      throw DataError(origin + ":" + std::to_string(line_no) +
                      ": unknown executable id " + e.executable_id);
    }
    const auto& values = j["values"];
    for (const auto& dim : pit->second.dims) {
      if (!values.contains(dim.name)) {
        throw DataError(origin + ":" + std::to_string(line_no) +
                        ": missing dimension " + dim.name);
      }
      try {
        e.values[dim.name] = value_from_json(values[dim.name]);
      } catch (const DataError& err) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": dimension " +
                        dim.name + ": " + err.what());
      }
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<RawTraceEvent> read_traces_file(
    const std::string& path,
    const std::map<std::string, ExecutableProfile>& profiles) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return read_traces(in, profiles, path);
}

void write_profiles_file(const std::string& path,
                         const std::vector<ExecutableProfile>& profiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto& p : profiles) {
    json dims = json::array();
    for (const auto& d : p.dims) {
      dims.push_back({{"name", d.name},
                      {"kind", to_string(d.kind())},
                      {"source", to_string(d.source)},
                      {"type", to_string(d.type)}});
    }
    json line = {{"id", p.id}, {"subject", p.subject}, {"dims", dims}};
    out << line.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<ExecutableProfile> read_profiles_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<ExecutableProfile> profiles;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": malformed line: " + e.what());
    }
    ExecutableProfile p;
    p.id = j.at("id").get<std::string>();
    p.subject = j.at("subject").get<std::string>();
    for (const auto& dj : j.at("dims")) {
      Dimension d;
      d.name = dj.at("name").get<std::string>();
      d.source = dim_source_from_string(dj.at("source").get<std::string>());
      d.type = abstract_type_from_string(dj.at("type").get<std::string>());
      const auto kind = dj.at("kind").get<std::string>();
      if (kind != to_string(d.kind())) {
        throw DataError(path + ":" + std::to_string(line_no) + ": dimension " +
                        d.name + " kind " + kind +
                        " contradicts source " + to_string(d.source));
      }
      p.dims.push_back(std::move(d));
    }
    p.validate();
    profiles.push_back(std::move(p));
  }
  return profiles;
}

}  // namespace scd::traces
