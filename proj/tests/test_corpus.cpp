#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "scd/corpus.hpp"
#include "scd/traces.hpp"

using namespace scd::corpus;
using scd::NumericError;
using scd::traces::RawTraceEvent;

namespace {

std::vector<std::int64_t> scalars_of(const RawTraceEvent& e,
                                     const std::vector<std::string>& names) {
  std::vector<std::int64_t> out;
  for (const auto& n : names)
    out.push_back(static_cast<std::int64_t>(e.values.at(n).values[0]));
  return out;
}

std::vector<std::int64_t> list_of(const RawTraceEvent& e, const std::string& name) {
  std::vector<std::int64_t> out;
  for (const double v : e.values.at(name).values)
    out.push_back(static_cast<std::int64_t>(v));
  return out;
}

}  // namespace

TEST_CASE("the eight subjects match the study table") {
  const auto subjects = list_subjects();
  REQUIRE(subjects.size() == 8);

  struct Row {
    const char* name;
    Style style;
    CloneClass cls;
    std::size_t params;
    std::size_t execs;
  };
  const std::vector<Row> expected = {
      {"Factorial", Style::iterative, CloneClass::A, 1, 1},
      {"Factorial", Style::recursive, CloneClass::A, 1, 1},
      {"Fibonacci", Style::iterative, CloneClass::B, 1, 1},
      {"Fibonacci", Style::recursive, CloneClass::B, 1, 1},
      {"BubbleSort", Style::iterative, CloneClass::C, 1, 1},
      {"BubbleSort", Style::recursive, CloneClass::C, 3, 2},
      {"MergeSort", Style::iterative, CloneClass::C, 6, 2},
      {"MergeSort", Style::recursive, CloneClass::C, 8, 3},
  };
  std::size_t total_params = 0, total_execs = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(subjects[i].name == expected[i].name);
    CHECK(subjects[i].style == expected[i].style);
    CHECK(subjects[i].clone_class == expected[i].cls);
    CHECK(subjects[i].parameter_count() == expected[i].params);
    CHECK(subjects[i].executables.size() == expected[i].execs);
    total_params += subjects[i].parameter_count();
    total_execs += subjects[i].executables.size();
    for (const auto& e : subjects[i].executables) {
      CHECK(e.input_count() >= 1);
      CHECK(e.output_count() >= 1);
    }
  }
  CHECK(total_params == 22);
  CHECK(total_execs == 12);
}

TEST_CASE("oracle behavior on known points") {
  const auto subjects = list_subjects();
  const auto* fib = find_subject(subjects, "Fibonacci_iter");
  const auto* fact = find_subject(subjects, "Factorial_iter");
  const auto* merge = find_subject(subjects, "MergeSort_rec");
  REQUIRE(fib);
  REQUIRE(fact);
  REQUIRE(merge);
  CHECK(oracle_behavior(*fib, {10}) == std::vector<std::int64_t>{55});
  CHECK(oracle_behavior(*fact, {0}) == std::vector<std::int64_t>{1});
  CHECK(oracle_behavior(*fact, {5}) == std::vector<std::int64_t>{120});
  CHECK(oracle_behavior(*merge, {2, 2, 1}) == std::vector<std::int64_t>({1, 2, 2}));
}

TEST_CASE("factorial events match the oracle, and n=5 maps to 120") {
  const auto subjects = list_subjects();
  const auto* spec = find_subject(subjects, "Factorial_iter");
  TriggerConfig cfg;
  cfg.invocations = 200;
  cfg.seed = 3;
  const auto events = run_subject(*spec, cfg);
  const auto& evs = events.at("Factorial_iter");
  REQUIRE(evs.size() == 200);
  bool saw_five = false;
  for (const auto& e : evs) {
    const auto v = scalars_of(e, {"n", "ret"});
    CHECK(oracle_behavior(*spec, {v[0]}) == std::vector<std::int64_t>{v[1]});
    if (v[0] == 5) {
      saw_five = true;
      CHECK(v[1] == 120);
    }
  }
  CHECK(saw_five);
}

TEST_CASE("recursive factorial unrolls into one event per self-call") {
  const auto subjects = list_subjects();
  const auto* spec = find_subject(subjects, "Factorial_rec");
  // find a deterministic seed whose first trigger draws n = 3
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    TriggerConfig cfg;
    cfg.invocations = 1;
    cfg.seed = seed;
    const auto events = run_subject(*spec, cfg);
    const auto& evs = events.at("Factorial_rec");
    if (scalars_of(evs[0], {"n"})[0] != 3) continue;
    REQUIRE(evs.size() == 3);
    CHECK(scalars_of(evs[0], {"n", "ret"}) == std::vector<std::int64_t>({3, 6}));
    CHECK(scalars_of(evs[1], {"n", "ret"}) == std::vector<std::int64_t>({2, 2}));
    CHECK(scalars_of(evs[2], {"n", "ret"}) == std::vector<std::int64_t>({1, 1}));
    return;
  }
  FAIL("no seed drew n=3 first; generator misbehaving");
}

TEST_CASE("every subject's top-level events agree with the oracle") {
  const auto subjects = list_subjects();
  for (const auto& spec : subjects) {
    TriggerConfig cfg;
    cfg.invocations = 40;
    cfg.seed = 11;
    const auto events = run_subject(spec, cfg);
    const auto& top = events.at(spec.key());
    const bool is_scalar = spec.name == "Factorial" || spec.name == "Fibonacci";
    std::size_t checked = 0;
    for (const auto& e : top) {
      if (is_scalar) {
        const auto v = scalars_of(e, {"n", "ret"});
        // recursive subjects interleave self-call events; all must be correct
        CHECK(oracle_behavior(spec, {v[0]}) == std::vector<std::int64_t>{v[1]});
      } else {
        const auto in = list_of(e, "arr");
        const auto out = list_of(e, "ret");
        CHECK(oracle_behavior(spec, in) == out);
      }
      ++checked;
    }
    CHECK(checked >= 40);
  }
}

TEST_CASE("sorting events preserve the value multiset") {
  const auto subjects = list_subjects();
  const auto* spec = find_subject(subjects, "BubbleSort_iter");
  TriggerConfig cfg;
  cfg.invocations = 60;
  cfg.seed = 21;
  const auto events = run_subject(*spec, cfg);
  for (const auto& e : events.at("BubbleSort_iter")) {
    auto in = list_of(e, "arr");
    auto out = list_of(e, "ret");
    CHECK(std::is_sorted(out.begin(), out.end()));
    std::sort(in.begin(), in.end());
    CHECK(in == out);
  }
}

TEST_CASE("merge helper events merge their window and keep the rest") {
  const auto subjects = list_subjects();
  const auto* spec = find_subject(subjects, "MergeSort_iter");
  TriggerConfig cfg;
  cfg.invocations = 30;
  cfg.seed = 5;
  const auto events = run_subject(*spec, cfg);
  const auto& merges = events.at("MergeSort_iter_merge");
  CHECK(!merges.empty());
  for (const auto& e : merges) {
    const auto arr = list_of(e, "arr");
    const auto ret = list_of(e, "ret");
    const auto v = scalars_of(e, {"lo", "mid", "hi", "n"});
    const auto lo = static_cast<std::size_t>(v[0]);
    const auto mid = static_cast<std::size_t>(v[1]);
    const auto hi = static_cast<std::size_t>(v[2]);
    REQUIRE(arr.size() == ret.size());
    CHECK(static_cast<std::size_t>(v[3]) == arr.size());
    CHECK(lo < mid);
    CHECK(mid < hi);
    CHECK(hi <= arr.size());
    CHECK(std::is_sorted(ret.begin() + lo, ret.begin() + hi));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (i < lo || i >= hi) CHECK(arr[i] == ret[i]);
    }
    std::multiset<std::int64_t> win_in(arr.begin() + lo, arr.begin() + hi);
    std::multiset<std::int64_t> win_out(ret.begin() + lo, ret.begin() + hi);
    CHECK(win_in == win_out);
  }
}

TEST_CASE("comparator helper emits 0/1 flags consistent with its inputs") {
  const auto subjects = list_subjects();
  const auto* spec = find_subject(subjects, "BubbleSort_rec");
  TriggerConfig cfg;
  cfg.invocations = 30;
  cfg.seed = 9;
  const auto events = run_subject(*spec, cfg);
  const auto& less_events = events.at("BubbleSort_rec_less");
  CHECK(!less_events.empty());
  for (const auto& e : less_events) {
    const auto v = scalars_of(e, {"x", "y", "flag"});
    CHECK((v[2] == 0 || v[2] == 1));
    CHECK(v[2] == (v[0] < v[1] ? 1 : 0));
  }
}

TEST_CASE("event streams are reproducible for equal seeds") {
  const auto subjects = list_subjects();
  const auto* spec = find_subject(subjects, "MergeSort_rec");
  TriggerConfig cfg;
  cfg.invocations = 25;
  cfg.seed = 77;
  const auto a = run_subject(*spec, cfg);
  const auto b = run_subject(*spec, cfg);
  REQUIRE(a.size() == b.size());
  for (const auto& [exec, evs] : a) {
    const auto& other = b.at(exec);
    REQUIRE(evs.size() == other.size());
    for (std::size_t i = 0; i < evs.size(); ++i) {
      for (const auto& [name, val] : evs[i].values) {
        CHECK(other[i].values.at(name).values == val.values);
      }
    }
  }
  TriggerConfig different = cfg;
  different.seed = 78;
  const auto c = run_subject(*spec, different);
  bool all_equal = true;
  for (const auto& [exec, evs] : a) {
    const auto& other = c.at(exec);
    if (evs.size() != other.size()) {
      all_equal = false;
      break;
    }
    for (std::size_t i = 0; i < evs.size() && all_equal; ++i)
      for (const auto& [name, val] : evs[i].values)
        all_equal &= other[i].values.at(name).values == val.values;
  }
  CHECK(!all_equal);
}

TEST_CASE("oversized input domains abort with an overflow error") {
  const auto subjects = list_subjects();
  const auto* spec = find_subject(subjects, "Factorial_iter");
  TriggerConfig cfg;
  cfg.invocations = 5;
  cfg.seed = 1;
  InputDomain dom = spec->domain;
  dom.scalar = {23, 30};  // 23! does not fit in 64 bits
  cfg.domain_override = dom;
  CHECK_THROWS_AS((void)run_subject(*spec, cfg), NumericError);
}

TEST_CASE("invalid trigger configs are rejected") {
  const auto subjects = list_subjects();
  const auto* fact = find_subject(subjects, "Factorial_iter");
  TriggerConfig cfg;
  cfg.invocations = 0;
  CHECK_THROWS_AS((void)run_subject(*fact, cfg), scd::ConfigError);
  cfg.invocations = 1;
  InputDomain dom = fact->domain;
  dom.scalar = {0, 5};  // triggers must be strictly positive
  cfg.domain_override = dom;
  CHECK_THROWS_AS((void)run_subject(*fact, cfg), scd::ConfigError);
}

TEST_CASE("manifest ground truth contains the expected positives") {
  const auto subjects = list_subjects();
  const auto m = make_manifest(subjects, 2000, 7);
  CHECK(m.subjects.size() == 8);

  CHECK(m.is_positive("Factorial_iter", "Factorial_rec"));
  CHECK(m.is_positive("Factorial_rec", "Factorial_iter"));  // order-free
  CHECK(m.is_positive("Fibonacci_iter", "Fibonacci_rec"));
  CHECK(m.is_positive("BubbleSort_iter", "MergeSort_rec"));
  CHECK(m.is_positive("MergeSort_iter_merge", "MergeSort_rec_merge"));
  CHECK(m.is_positive("MergeSort_rec_range", "BubbleSort_iter"));

  CHECK(!m.is_positive("Factorial_iter", "Fibonacci_iter"));
  CHECK(!m.is_positive("Factorial_iter", "Factorial_iter"));
  CHECK(!m.is_positive("BubbleSort_rec_less", "BubbleSort_iter"));
  CHECK(!m.is_positive("BubbleSort_rec_less", "MergeSort_rec_merge"));

  // classes A and B contribute one pair each; class C contributes the four
  // tops, the three window helpers, and their cross pairs
  CHECK(m.positive_pairs.size() == 2 + 6 + 3 + 12);
}

TEST_CASE("manifest files round-trip") {
  const auto subjects = list_subjects();
  const auto m = make_manifest(subjects, 123, 9);
  const std::string path = "/tmp/scd_test_manifest.json";
  write_manifest_file(path, m);
  const auto got = read_manifest_file(path);
  CHECK(got.invocations == 123);
  CHECK(got.seed == 9);
  CHECK(got.positive_pairs == m.positive_pairs);
  CHECK(got.subjects.size() == m.subjects.size());
  CHECK(got.subjects[5].parameters == 3);
}
