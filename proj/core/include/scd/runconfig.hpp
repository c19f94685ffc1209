#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "scd/detector.hpp"
#include "scd/evaluation.hpp"
#include "scd/flow.hpp"

namespace scd::cli {

/// Everything one run needs; serializable so the effective configuration
/// can be echoed next to the reports and replayed later. Command-line
/// flags override file values.
struct RunConfig {
  std::string traces_dir = "out/traces";
  std::string models_dir = "out/models";
  std::string reports_dir = "out/reports";

  std::vector<std::string> subjects;  // empty = all
  std::int64_t invocations = 2000;

  flow::TrainConfig train;
  std::vector<std::string> only;  // cmd_train filter

  detector::DetectorConfig detector;

  std::vector<evaluation::GridCell> grid = evaluation::default_grid();
  std::vector<std::uint64_t> study_seeds{7, 8, 9};

  std::uint64_t seed = 7;
  int jobs = 0;  // 0 = all cores

  void validate() const;
  std::string to_json_string() const;

  static RunConfig from_json_string(const std::string& text,
                                    const std::string& origin = "<config>");
  static RunConfig load_file(const std::string& path);
};

/// Grid restriction in "key=value[,value...]" form, keys pooling | alpha |
/// particles, e.g. "particles=10" or "pooling=soft,alpha=0.01".
std::vector<evaluation::GridCell> filter_grid(
    const std::vector<evaluation::GridCell>& grid, const std::string& filter);

// Command entry points. They print human-readable progress to `out`,
// errors to `err`, echo the effective config into the reports directory
// and map exceptions to exit codes (1 usage, 2 data, 3 numeric).
int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_detect(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace scd::cli
