#include "scd/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>

#include "json.hpp"
#include "scd/rng.hpp"

namespace scd::corpus {

using nlohmann::json;
using traces::AbstractType;
using traces::DimSource;
using traces::ExecutableProfile;
using traces::RawTraceEvent;
using traces::TraceValue;

const char* to_string(Style s) {
  return s == Style::iterative ? "iterative" : "recursive";
}

const char* to_string(CloneClass c) {
  switch (c) {
    case CloneClass::A: return "A";
    case CloneClass::B: return "B";
    case CloneClass::C: return "C";
  }
  return "?";
}

Style style_from_string(const std::string& s) {
  if (s == "iterative") return Style::iterative;
  if (s == "recursive") return Style::recursive;
  throw DataError("unknown style: " + s);
}

CloneClass clone_class_from_string(const std::string& s) {
  if (s == "A") return CloneClass::A;
  if (s == "B") return CloneClass::B;
  if (s == "C") return CloneClass::C;
  throw DataError("unknown clone class: " + s);
}

std::string SubjectSpec::key() const {
  return name + (style == Style::iterative ? "_iter" : "_rec");
}

std::size_t SubjectSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : executables) n += e.parameter_count();
  return n;
}

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r))
    throw NumericError("integer overflow in subject computation (input domain too large)");
  return r;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r))
    throw NumericError("integer overflow in subject computation (input domain too large)");
  return r;
}

ExecutableProfile make_profile(std::string id, std::string subject,
                               std::vector<std::pair<std::string, DimSource>> dims) {
  ExecutableProfile p;
  p.id = std::move(id);
  p.subject = std::move(subject);
  for (auto& [name, source] : dims) {
    p.dims.push_back({name, source, AbstractType::integer});
  }
  p.validate();
  return p;
}

// Captures events in invocation order; recursive calls reserve their slot
// on entry so the stream reads top-down.
class Recorder {
public:
  explicit Recorder(EventMap& events) : events_(events) {}

  std::size_t reserve(const std::string& exec_id) {
    auto& v = events_[exec_id];
    v.emplace_back();
    v.back().executable_id = exec_id;
    return v.size() - 1;
  }

  void fill(const std::string& exec_id, std::size_t slot,
            std::map<std::string, TraceValue> values) {
    events_[exec_id][slot].values = std::move(values);
  }

  void record(const std::string& exec_id,
              std::map<std::string, TraceValue> values) {
    fill(exec_id, reserve(exec_id), std::move(values));
  }

private:
  EventMap& events_;
};

TraceValue scalar(std::int64_t v) {
  return TraceValue::scalar(static_cast<double>(v));
}

TraceValue list(const std::vector<std::int64_t>& v) {
  std::vector<double> xs(v.size());
  std::transform(v.begin(), v.end(), xs.begin(),
                 [](std::int64_t x) { return static_cast<double>(x); });
  return TraceValue::list(std::move(xs));
}

// --- subject implementations ---------------------------------------------

std::int64_t factorial_iter(std::int64_t n, Recorder& rec) {
  std::int64_t product = 1;
  for (std::int64_t i = 2; i <= n; ++i) product = checked_mul(product, i);
  rec.record("Factorial_iter", {{"n", scalar(n)}, {"ret", scalar(product)}});
  return product;
}

std::int64_t factorial_rec(std::int64_t n, Recorder& rec) {
  const std::size_t slot = rec.reserve("Factorial_rec");
  const std::int64_t r = n <= 1 ? 1 : checked_mul(n, factorial_rec(n - 1, rec));
  rec.fill("Factorial_rec", slot, {{"n", scalar(n)}, {"ret", scalar(r)}});
  return r;
}

std::int64_t fibonacci_iter(std::int64_t n, Recorder& rec) {
  std::int64_t a = 1, b = 1;  // fib(1), fib(2)
  for (std::int64_t i = 3; i <= n; ++i) {
    const std::int64_t c = checked_add(a, b);
    a = b;
    b = c;
  }
  rec.record("Fibonacci_iter", {{"n", scalar(n)}, {"ret", scalar(b)}});
  return b;
}

std::int64_t fibonacci_rec(std::int64_t n, std::map<std::int64_t, std::int64_t>& memo,
                           Recorder& rec) {
  const std::size_t slot = rec.reserve("Fibonacci_rec");
  std::int64_t r;
  if (n <= 2) {
    r = 1;
  } else if (const auto it = memo.find(n); it != memo.end()) {
    r = it->second;
  } else {
    r = checked_add(fibonacci_rec(n - 1, memo, rec), fibonacci_rec(n - 2, memo, rec));
  }
  memo[n] = r;
  rec.fill("Fibonacci_rec", slot, {{"n", scalar(n)}, {"ret", scalar(r)}});
  return r;
}

std::vector<std::int64_t> bubble_sort_iter(std::vector<std::int64_t> a,
                                           Recorder& rec) {
  const auto input = a;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) {
    for (std::size_t j = 0; j + 1 < a.size() - i; ++j) {
      if (a[j] > a[j + 1]) std::swap(a[j], a[j + 1]);
    }
  }
  rec.record("BubbleSort_iter", {{"arr", list(input)}, {"ret", list(a)}});
  return a;
}

bool less_helper(std::int64_t x, std::int64_t y, Recorder& rec) {
  const bool f = x < y;
  rec.record("BubbleSort_rec_less",
             {{"x", scalar(x)}, {"y", scalar(y)}, {"flag", scalar(f ? 1 : 0)}});
  return f;
}

std::vector<std::int64_t> bubble_sort_rec(std::vector<std::int64_t> a,
                                          Recorder& rec) {
  const std::size_t slot = rec.reserve("BubbleSort_rec");
  const auto input = a;
  std::vector<std::int64_t> result;
  if (a.size() <= 1) {
    result = a;
  } else {
    for (std::size_t j = 0; j + 1 < a.size(); ++j) {
      if (less_helper(a[j + 1], a[j], rec)) std::swap(a[j], a[j + 1]);
    }
    const std::int64_t biggest = a.back();
    a.pop_back();
    result = bubble_sort_rec(std::move(a), rec);
    result.push_back(biggest);
  }
  rec.fill("BubbleSort_rec", slot, {{"arr", list(input)}, {"ret", list(result)}});
  return result;
}

std::vector<std::int64_t> merge_window_iter(std::vector<std::int64_t> a,
                                            std::int64_t lo, std::int64_t mid,
                                            std::int64_t hi, std::int64_t n,
                                            Recorder& rec) {
  const auto input = a;
  std::vector<std::int64_t> buf;
  buf.reserve(static_cast<std::size_t>(hi - lo));
  std::int64_t i = lo, j = mid;
  while (i < mid && j < hi) {
    if (a[static_cast<std::size_t>(j)] < a[static_cast<std::size_t>(i)])
      buf.push_back(a[static_cast<std::size_t>(j++)]);
    else
      buf.push_back(a[static_cast<std::size_t>(i++)]);
  }
  while (i < mid) buf.push_back(a[static_cast<std::size_t>(i++)]);
  while (j < hi) buf.push_back(a[static_cast<std::size_t>(j++)]);
  std::copy(buf.begin(), buf.end(), a.begin() + lo);
  rec.record("MergeSort_iter_merge",
             {{"arr", list(input)},
              {"lo", scalar(lo)},
              {"mid", scalar(mid)},
              {"hi", scalar(hi)},
              {"n", scalar(n)},
              {"ret", list(a)}});
  return a;
}

std::vector<std::int64_t> merge_sort_iter(std::vector<std::int64_t> a,
                                          Recorder& rec) {
  const auto input = a;
  const auto n = static_cast<std::int64_t>(a.size());
  for (std::int64_t w = 1; w < n; w *= 2) {
    for (std::int64_t lo = 0; lo + w < n; lo += 2 * w) {
      a = merge_window_iter(std::move(a), lo, lo + w, std::min(lo + 2 * w, n), n,
                            rec);
    }
  }
  rec.record("MergeSort_iter", {{"arr", list(input)}, {"ret", list(a)}});
  return a;
}

// Walks the left run out of a scratch copy instead of a two-pointer pass
// over a merge buffer; same behavior as the iterative helper.
std::vector<std::int64_t> merge_window_rec(std::vector<std::int64_t> a,
                                           std::int64_t lo, std::int64_t mid,
                                           std::int64_t hi, Recorder& rec) {
  const auto input = a;
  const std::vector<std::int64_t> left(a.begin() + lo, a.begin() + mid);
  std::size_t i = 0;
  std::int64_t j = mid, k = lo;
  while (i < left.size() && j < hi) {
    if (a[static_cast<std::size_t>(j)] < left[i])
      a[static_cast<std::size_t>(k++)] = a[static_cast<std::size_t>(j++)];
    else
      a[static_cast<std::size_t>(k++)] = left[i++];
  }
  while (i < left.size()) a[static_cast<std::size_t>(k++)] = left[i++];
  rec.record("MergeSort_rec_merge",
             {{"arr", list(input)},
              {"lo", scalar(lo)},
              {"mid", scalar(mid)},
              {"hi", scalar(hi)},
              {"ret", list(a)}});
  return a;
}

std::vector<std::int64_t> sort_range_rec(std::vector<std::int64_t> a,
                                         std::int64_t lo, std::int64_t hi,
                                         Recorder& rec) {
  const std::size_t slot = rec.reserve("MergeSort_rec_range");
  const auto input = a;
  if (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    a = sort_range_rec(std::move(a), lo, mid, rec);
    a = sort_range_rec(std::move(a), mid, hi, rec);
    a = merge_window_rec(std::move(a), lo, mid, hi, rec);
  }
  rec.fill("MergeSort_rec_range", slot,
           {{"arr", list(input)},
            {"lo", scalar(lo)},
            {"hi", scalar(hi)},
            {"ret", list(a)}});
  return a;
}

std::vector<std::int64_t> merge_sort_rec(std::vector<std::int64_t> a,
                                         Recorder& rec) {
  const auto input = a;
  a = sort_range_rec(std::move(a), 0, static_cast<std::int64_t>(a.size()), rec);
  rec.record("MergeSort_rec", {{"arr", list(input)}, {"ret", list(a)}});
  return a;
}

void validate_domain(const SubjectSpec& spec, const InputDomain& dom) {
  auto check = [](const ValueRange& r, std::int64_t min_lo, const char* what) {
    if (r.lo > r.hi || r.lo < min_lo)
      throw ConfigError(std::string("invalid input domain for ") + what);
  };
  if (spec.name == "Factorial" || spec.name == "Fibonacci") {
    check(dom.scalar, 1, spec.name.c_str());  // positive triggers only
  } else {
    check(dom.length, 2, "sort length");
    check(dom.element, 0, "sort elements");
  }
}

}  // namespace

std::vector<SubjectSpec> list_subjects() {
  std::vector<SubjectSpec> subjects;

  auto scalar_subject = [](std::string name, Style style, CloneClass cls,
                           std::int64_t n_max) {
    SubjectSpec s;
    s.name = std::move(name);
    s.style = style;
    s.clone_class = cls;
    s.domain.scalar = {1, n_max};
    s.executables.push_back(make_profile(s.key(), s.key(),
                                         {{"n", DimSource::parameter},
                                          {"ret", DimSource::return_value}}));
    return s;
  };

  subjects.push_back(scalar_subject("Factorial", Style::iterative, CloneClass::A, 12));
  subjects.push_back(scalar_subject("Factorial", Style::recursive, CloneClass::A, 12));
  subjects.push_back(scalar_subject("Fibonacci", Style::iterative, CloneClass::B, 20));
  subjects.push_back(scalar_subject("Fibonacci", Style::recursive, CloneClass::B, 20));

  auto sort_subject = [](std::string name, Style style) {
    SubjectSpec s;
    s.name = std::move(name);
    s.style = style;
    s.clone_class = CloneClass::C;
    s.executables.push_back(make_profile(s.key(), s.key(),
                                         {{"arr", DimSource::parameter},
                                          {"ret", DimSource::return_value}}));
    return s;
  };

  subjects.push_back(sort_subject("BubbleSort", Style::iterative));

  {
    auto s = sort_subject("BubbleSort", Style::recursive);
    s.executables.push_back(make_profile("BubbleSort_rec_less", s.key(),
                                         {{"x", DimSource::parameter},
                                          {"y", DimSource::parameter},
                                          {"flag", DimSource::return_value}}));
    subjects.push_back(std::move(s));
  }
  {
    auto s = sort_subject("MergeSort", Style::iterative);
    s.executables.push_back(make_profile("MergeSort_iter_merge", s.key(),
                                         {{"arr", DimSource::parameter},
                                          {"lo", DimSource::parameter},
                                          {"mid", DimSource::parameter},
                                          {"hi", DimSource::parameter},
                                          {"n", DimSource::parameter},
                                          {"ret", DimSource::return_value}}));
    subjects.push_back(std::move(s));
  }
  {
    auto s = sort_subject("MergeSort", Style::recursive);
    s.executables.push_back(make_profile("MergeSort_rec_range", s.key(),
                                         {{"arr", DimSource::parameter},
                                          {"lo", DimSource::parameter},
                                          {"hi", DimSource::parameter},
                                          {"ret", DimSource::return_value}}));
    s.executables.push_back(make_profile("MergeSort_rec_merge", s.key(),
                                         {{"arr", DimSource::parameter},
                                          {"lo", DimSource::parameter},
                                          {"mid", DimSource::parameter},
                                          {"hi", DimSource::parameter},
                                          {"ret", DimSource::return_value}}));
    subjects.push_back(std::move(s));
  }
  return subjects;
}

const SubjectSpec* find_subject(const std::vector<SubjectSpec>& subjects,
                                const std::string& key) {
  for (const auto& s : subjects)
    if (s.key() == key) return &s;
  return nullptr;
}

EventMap run_subject(const SubjectSpec& spec, const TriggerConfig& cfg) {
  if (cfg.invocations <= 0)
    throw ConfigError("invocations must be positive");
  const InputDomain dom = cfg.domain_override.value_or(spec.domain);
  validate_domain(spec, dom);

  EventMap events;
  for (const auto& e : spec.executables) events[e.id];  // stable key set
  Recorder rec(events);
  Rng rng(derive_seed(cfg.seed, {"corpus", spec.key()}));

  for (std::int64_t t = 0; t < cfg.invocations; ++t) {
    if (spec.name == "Factorial" || spec.name == "Fibonacci") {
      const std::int64_t n = rng.uniform_int(dom.scalar.lo, dom.scalar.hi);
      if (spec.name == "Factorial") {
        if (spec.style == Style::iterative)
          factorial_iter(n, rec);
        else
          factorial_rec(n, rec);
      } else {
        if (spec.style == Style::iterative) {
          fibonacci_iter(n, rec);
        } else {
          std::map<std::int64_t, std::int64_t> memo;
          fibonacci_rec(n, memo, rec);
        }
      }
    } else {
      const auto len = static_cast<std::size_t>(
          rng.uniform_int(dom.length.lo, dom.length.hi));
      std::vector<std::int64_t> a(len);
      for (auto& x : a) x = rng.uniform_int(dom.element.lo, dom.element.hi);
      if (spec.name == "BubbleSort") {
        if (spec.style == Style::iterative)
          bubble_sort_iter(std::move(a), rec);
        else
          bubble_sort_rec(std::move(a), rec);
      } else {
        if (spec.style == Style::iterative)
          merge_sort_iter(std::move(a), rec);
        else
          merge_sort_rec(std::move(a), rec);
      }
    }
  }
  return events;
}

std::vector<std::int64_t> oracle_behavior(const SubjectSpec& spec,
                                          const std::vector<std::int64_t>& input) {
  if (spec.name == "Factorial") {
    if (input.size() != 1 || input[0] < 0)
      throw ConfigError("factorial oracle expects one non-negative value");
    std::vector<std::int64_t> range(static_cast<std::size_t>(input[0]));
    std::iota(range.begin(), range.end(), 1);
    return {std::accumulate(range.begin(), range.end(), std::int64_t{1},
                            checked_mul)};
  }
  if (spec.name == "Fibonacci") {
    if (input.size() != 1 || input[0] < 0)
      throw ConfigError("fibonacci oracle expects one non-negative value");
    // fast doubling on (F(k), F(k+1)), standard indexing F(0)=0
    std::function<std::pair<std::int64_t, std::int64_t>(std::int64_t)> fd =
        [&](std::int64_t k) -> std::pair<std::int64_t, std::int64_t> {
      if (k == 0) return {0, 1};
      const auto [f, g] = fd(k / 2);
      const std::int64_t c = checked_mul(f, checked_add(checked_mul(2, g), -f));
      const std::int64_t d = checked_add(checked_mul(f, f), checked_mul(g, g));
      if (k % 2 == 0) return {c, d};
      return {d, checked_add(c, d)};
    };
    return {fd(input[0]).first};
  }
  // sorts
  std::vector<std::int64_t> out = input;
  std::stable_sort(out.begin(), out.end());
  return out;
}

bool Manifest::is_positive(const std::string& a, const std::string& b) const {
  const auto [lo, hi] = std::minmax(a, b);
  for (const auto& p : positive_pairs)
    if (p.first == lo && p.second == hi) return true;
  return false;
}

Manifest make_manifest(const std::vector<SubjectSpec>& subjects,
                       std::int64_t invocations, std::uint64_t seed) {
  Manifest m;
  m.invocations = invocations;
  m.seed = seed;
  for (const auto& s : subjects) {
    Manifest::SubjectInfo info;
    info.key = s.key();
    info.name = s.name;
    info.style = s.style;
    info.clone_class = s.clone_class;
    info.parameters = s.parameter_count();
    for (const auto& e : s.executables) info.executables.push_back(e.id);
    m.subjects.push_back(std::move(info));
  }

  auto add = [&m](std::string a, std::string b) {
    auto [lo, hi] = std::minmax(a, b);
    m.positive_pairs.emplace_back(std::move(lo), std::move(hi));
  };

  add("Factorial_iter", "Factorial_rec");
  add("Fibonacci_iter", "Fibonacci_rec");

  // Class C: the four top-level sorts are mutual clones. The window
  // helpers (the two merges and the range sorter) leave every observed
  // array with the addressed window sorted and the rest untouched; on
  // top-level windows they coincide with a full sort, so they are
  // declared equivalent to the sorts and to each other as observed
  // sorting behavior.
  const std::vector<std::string> tops = {"BubbleSort_iter", "BubbleSort_rec",
                                         "MergeSort_iter", "MergeSort_rec"};
  const std::vector<std::string> window_helpers = {
      "MergeSort_iter_merge", "MergeSort_rec_merge", "MergeSort_rec_range"};
  for (std::size_t i = 0; i < tops.size(); ++i)
    for (std::size_t j = i + 1; j < tops.size(); ++j) add(tops[i], tops[j]);
  for (std::size_t i = 0; i < window_helpers.size(); ++i)
    for (std::size_t j = i + 1; j < window_helpers.size(); ++j)
      add(window_helpers[i], window_helpers[j]);
  for (const auto& t : tops)
    for (const auto& h : window_helpers) add(t, h);

  std::sort(m.positive_pairs.begin(), m.positive_pairs.end());
  return m;
}

void write_manifest_file(const std::string& path, const Manifest& m) {
  json subjects = json::array();
  for (const auto& s : m.subjects) {
    subjects.push_back({{"key", s.key},
                        {"name", s.name},
                        {"style", to_string(s.style)},
                        {"clone_class", to_string(s.clone_class)},
                        {"parameters", s.parameters},
                        {"executables", s.executables}});
  }
  json pairs = json::array();
  for (const auto& p : m.positive_pairs) pairs.push_back({p.first, p.second});
  const json j = {{"invocations", m.invocations},
                  {"seed", m.seed},
                  {"subjects", subjects},
                  {"positive_pairs", pairs}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path);
}

Manifest read_manifest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError(path + ": malformed manifest: " + e.what());
  }
  Manifest m;
  m.invocations = j.at("invocations").get<std::int64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& sj : j.at("subjects")) {
    Manifest::SubjectInfo s;
    s.key = sj.at("key").get<std::string>();
    s.name = sj.at("name").get<std::string>();
    s.style = style_from_string(sj.at("style").get<std::string>());
    s.clone_class = clone_class_from_string(sj.at("clone_class").get<std::string>());
    s.parameters = sj.at("parameters").get<std::size_t>();
    s.executables = sj.at("executables").get<std::vector<std::string>>();
    m.subjects.push_back(std::move(s));
  }
  for (const auto& pj : j.at("positive_pairs"))
    m.positive_pairs.emplace_back(pj.at(0).get<std::string>(),
                                  pj.at(1).get<std::string>());
  return m;
}

}  // namespace scd::corpus
