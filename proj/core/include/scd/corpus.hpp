#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scd/traces.hpp"

namespace scd::corpus {

enum class Style { iterative, recursive };
enum class CloneClass { A, B, C };

const char* to_string(Style s);
const char* to_string(CloneClass c);
Style style_from_string(const std::string& s);
CloneClass clone_class_from_string(const std::string& s);

struct ValueRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
};

/// Trigger-parameter ranges. Scalar subjects draw n from `scalar`; sort
/// subjects draw a length from `length` and that many elements from
/// `element`. All draws are i.i.d. uniform.
struct InputDomain {
  ValueRange scalar{1, 12};
  ValueRange length{2, 16};
  ValueRange element{0, 100};
};

struct SubjectSpec {
  std::string name;  // Factorial, Fibonacci, BubbleSort, MergeSort
  Style style = Style::iterative;
  CloneClass clone_class = CloneClass::A;
  std::vector<traces::ExecutableProfile> executables;
  InputDomain domain;

  /// Short unique key, e.g. "Factorial_iter".
  std::string key() const;
  /// Total parameter-source dimensions across the subject's executables.
  std::size_t parameter_count() const;
};

struct TriggerConfig {
  std::int64_t invocations = 2000;
  std::uint64_t seed = 0;
  std::optional<InputDomain> domain_override;
};

/// The eight subjects: {Factorial, Fibonacci, BubbleSort, MergeSort} x
/// {iterative, recursive}, clone classes A/A/B/B/C/C/C/C, with 22
/// parameters over 12 executables in total.
std::vector<SubjectSpec> list_subjects();

const SubjectSpec* find_subject(const std::vector<SubjectSpec>& subjects,
                                const std::string& key);

/// Event streams per executable id, in invocation order (recursive
/// self-calls appear as separate events for the same executable).
using EventMap = std::map<std::string, std::vector<traces::RawTraceEvent>>;

/// Runs the subject cfg.invocations times with uniform random triggers.
/// Deterministic given cfg.seed. Throws NumericError when a computed
/// value overflows (input domain too large) and ConfigError for invalid
/// configs or domains.
EventMap run_subject(const SubjectSpec& spec, const TriggerConfig& cfg);

/// Independent reference behavior computed by a second, structurally
/// different implementation; used to cross-check the instrumented
/// subjects. Scalar subjects take {n}, sorts take the array.
std::vector<std::int64_t> oracle_behavior(const SubjectSpec& spec,
                                          const std::vector<std::int64_t>& input);

// --- ground-truth manifest -----------------------------------------------

/// Which executable pairs count as semantic clones for scoring. Classes A
/// and B pair their two implementations; class C pairs the four top-level
/// sorts, the two window-merge helpers with each other, and the
/// window-sorting helpers with the sorts they behave as on their observed
/// windows.
struct Manifest {
  struct SubjectInfo {
    std::string key;
    std::string name;
    Style style = Style::iterative;
    CloneClass clone_class = CloneClass::A;
    std::size_t parameters = 0;
    std::vector<std::string> executables;
  };
  std::vector<SubjectInfo> subjects;
  std::vector<std::pair<std::string, std::string>> positive_pairs;
  std::int64_t invocations = 0;
  std::uint64_t seed = 0;

  bool is_positive(const std::string& a, const std::string& b) const;
};

Manifest make_manifest(const std::vector<SubjectSpec>& subjects,
                       std::int64_t invocations, std::uint64_t seed);
void write_manifest_file(const std::string& path, const Manifest& m);
Manifest read_manifest_file(const std::string& path);

}  // namespace scd::corpus
