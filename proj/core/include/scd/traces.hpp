#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scd/common.hpp"

namespace scd::traces {

enum class DimKind { input, output };
enum class DimSource {
  parameter,
  return_value,
  property_read,
  property_write,
  invocation_param,
  invocation_return,
};
enum class AbstractType { integer, floating, text };

/// Input/output role is fully determined by how the value enters or leaves
/// the executable; parameters, property reads and invocation returns flow
/// in, everything else flows out.
DimKind kind_of(DimSource source);

const char* to_string(DimKind k);
const char* to_string(DimSource s);
const char* to_string(AbstractType t);
DimSource dim_source_from_string(const std::string& s);
AbstractType abstract_type_from_string(const std::string& s);

struct Dimension {
  std::string name;
  DimSource source = DimSource::parameter;
  AbstractType type = AbstractType::integer;

  DimKind kind() const { return kind_of(source); }
};

struct ExecutableProfile {
  std::string id;
  std::string subject;
  std::vector<Dimension> dims;

  /// Throws DataError unless there is at least one input and one output
  /// dimension and all dimension names are unique.
  void validate() const;

  std::size_t input_count() const;
  std::size_t output_count() const;
  std::size_t parameter_count() const;  // dims with source == parameter
  const Dimension* find(const std::string& name) const;
};

/// One observed invocation. Values are scalars or lists of scalars keyed
/// by dimension name; keys must match the profile exactly.
struct TraceValue {
  std::vector<double> values;
  bool is_list = false;

  static TraceValue scalar(double v) { return {{v}, false}; }
  static TraceValue list(std::vector<double> v) { return {std::move(v), true}; }
};

struct RawTraceEvent {
  std::string executable_id;
  std::map<std::string, TraceValue> values;
};

/// Rectangular table of observations for one executable plus the
/// normalization state needed to invert preprocessing.
struct ColumnStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct TraceDataset {
  std::string executable_id;
  std::vector<std::string> column_order;
  std::vector<AbstractType> column_types;
  std::vector<DimKind> column_kinds;
  Eigen::MatrixXd rows;  // R x D
  std::vector<ColumnStats> stats;              // filled by standardize
  std::vector<std::string> dropped_columns;    // constant columns, recorded
  bool standardized = false;

  std::size_t row_count() const { return static_cast<std::size_t>(rows.rows()); }
  std::size_t column_count() const { return static_cast<std::size_t>(rows.cols()); }
  std::optional<std::size_t> column_index(const std::string& name) const;
};

/// Flattens one event into row vectors: list-valued dimensions of equal
/// length L are paired index-wise, scalars broadcast to all L rows.
/// Ragged lists signal an instrumentation bug and throw DataError.
std::vector<Eigen::RowVectorXd> explode(const ExecutableProfile& profile,
                                        const RawTraceEvent& event);

/// Builds the raw dataset for one executable out of its exploded events.
TraceDataset build_dataset(const ExecutableProfile& profile,
                           const std::vector<RawTraceEvent>& events,
                           std::size_t min_rows = 100);

/// Removes zero-variance columns in place and records their names.
void drop_constant_columns(TraceDataset& ds);

/// Adds uniform [0, 1) noise to integer columns so continuous density
/// models do not collapse onto the integer lattice. Deterministic given
/// the seed; flooring recovers the original values.
void dequantize(TraceDataset& ds, std::uint64_t seed);

/// Computes per-column stats (mean, sample standard deviation) over
/// stat_rows (all rows when empty) and maps every column to mean 0 /
/// stddev 1 under those stats. Throws DataError when a column is
/// constant over stat_rows; call drop_constant_columns first.
void standardize(TraceDataset& ds,
                 const std::vector<std::size_t>& stat_rows = {});

Eigen::MatrixXd standardize_rows(const Eigen::MatrixXd& raw,
                                 const std::vector<ColumnStats>& stats);
Eigen::MatrixXd destandardize_rows(const Eigen::MatrixXd& standardized,
                                   const std::vector<ColumnStats>& stats);

// --- trace & profile files (JSON Lines, UTF-8, '\n') ---------------------
//
// Trace line:   {"exec": "<id>", "values": {"<dim>": <number | [numbers]>}}
// Profile line: {"id": ..., "subject": ..., "dims": [{"name","kind","source","type"}]}

void write_traces(std::ostream& out, const std::vector<RawTraceEvent>& events,
                  const std::map<std::string, ExecutableProfile>& profiles);
void write_traces_file(const std::string& path,
                       const std::vector<RawTraceEvent>& events,
                       const std::map<std::string, ExecutableProfile>& profiles);

/// Streaming read; malformed lines are reported with their line number,
/// events for executables absent from `profiles` are an error.
std::vector<RawTraceEvent> read_traces(
    std::istream& in, const std::map<std::string, ExecutableProfile>& profiles,
    const std::string& origin = "<stream>");
std::vector<RawTraceEvent> read_traces_file(
    const std::string& path,
    const std::map<std::string, ExecutableProfile>& profiles);

void write_profiles_file(const std::string& path,
                         const std::vector<ExecutableProfile>& profiles);
std::vector<ExecutableProfile> read_profiles_file(const std::string& path);

}  // namespace scd::traces
