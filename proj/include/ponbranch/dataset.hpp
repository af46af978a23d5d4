#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ponbranch/common.hpp"
#include "ponbranch/sim.hpp"

namespace ponbranch::data {

inline constexpr std::size_t kWindowLength = 50;

enum class EventClass : int { C0 = 0, C1 = 1, C2 = 2 };

inline int class_index(EventClass c) { return static_cast<int>(c); }

inline EventClass class_from_index(int i) {
  if (i < 0 || i > 2) throw ValidationError("class index out of range: " + std::to_string(i));
  return static_cast<EventClass>(i);
}

using Positions = std::array<std::optional<double>, 2>;

struct Window {
  std::array<double, kWindowLength> values{};
  EventClass label = EventClass::C0;
  Positions positions{};  // fractional in-window sample indices, ascending
  std::string source;     // fingerprint of the generating trace
  std::int64_t start = 0;

  void validate() const {
    const int present = static_cast<int>(positions[0].has_value()) + static_cast<int>(positions[1].has_value());
    switch (label) {
      case EventClass::C0:
        if (present != 0) throw ValidationError("C0 window must not carry positions");
        break;
      case EventClass::C1:
        if (!positions[0] || positions[1]) throw ValidationError("C1 window needs exactly slot 0 present");
        break;
      case EventClass::C2:
        if (present != 2) throw ValidationError("C2 window needs both positions");
        if (!(*positions[0] < *positions[1])) throw ValidationError("C2 positions must be ascending");
        break;
    }
    for (const auto& p : positions)
      if (p && !(*p >= 0.0 && *p <= static_cast<double>(kWindowLength - 1)))
        throw ValidationError("position outside window");
    for (double v : values)
      if (!std::isfinite(v)) throw ValidationError("non-finite window value");
  }

  bool operator==(const Window&) const = default;
};

/// Per-window min-max scaling onto [0, 1]; constant input maps to 0.5.
inline std::array<double, kWindowLength> normalize_window(std::span<const double> raw) {
  if (raw.size() != kWindowLength) throw ValidationError("normalize_window expects 50 samples");
  std::array<double, kWindowLength> out{};
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("non-finite window sample");
  if (hi == lo) {
    out.fill(0.5);
    return out;
  }
  const double span = hi - lo;
  for (std::size_t i = 0; i < kWindowLength; ++i) out[i] = (raw[i] - lo) / span;
  return out;
}

class OverfullWindow : public std::runtime_error {
 public:
  OverfullWindow() : std::runtime_error("overfull window") {}
};

struct Label {
  EventClass label = EventClass::C0;
  Positions positions{};
};

/// Class and in-window positions of the ground-truth events covered by
/// samples [start, start + 49].
inline Label label_window(const sim::Trace& trace, std::int64_t start) {
  if (start < 0 || static_cast<std::size_t>(start) + kWindowLength > trace.size())
    throw ValidationError("window start out of range");
  std::vector<double> inside;
  for (const auto& e : trace.events) {
    const double idx = e.position / trace.sample_spacing - static_cast<double>(start);
    if (idx >= 0.0 && idx <= static_cast<double>(kWindowLength - 1)) inside.push_back(idx);
  }
  if (inside.size() > 2) throw OverfullWindow();
  std::sort(inside.begin(), inside.end());
  Label l;
  l.label = class_from_index(static_cast<int>(inside.size()));
  for (std::size_t i = 0; i < inside.size(); ++i) l.positions[i] = inside[i];
  return l;
}

struct Range {
  double lo = 0;
  double hi = 0;
  bool operator==(const Range&) const = default;
};

/**
 * Sampling space of the synthetic plant and the window extraction/splitting
 * recipe. Each sampled plant ("condition") has `isolated_branches` branch
 * ends spaced well apart, followed by a pair of neighbouring branches whose
 * lengths differ by `branch_delta`.
 */
struct DatasetSpec {
  // plant template
  double feeder_length = 1000.0;
  double fiber_attenuation = 0.3;
  int splitter_ratio = 32;
  int isolated_branches = 1;
  Range first_branch_length{60.0, 200.0};
  Range branch_spacing{60.0, 160.0};
  Range branch_delta{1.0, 3.0};
  Range attenuation{1.0, 16.0};
  // Upper bound on |a1 - a2| between the two neighbouring branches (dB).
  double max_pair_attenuation_gap = 15.0;
  Range voa{0.0, 12.0};
  Range laser_power{0.0, 12.0};
  Range averaging_time{0.002, 2.0};  // sampled log-uniformly
  double reflector_probability = 0.5;  // else open PC connector
  double connector_reflectance = sim::kOpenConnectorReflectance;
  double reflector_reflectance = sim::kReflectorReflectance;
  sim::SimConfig sim{};  // acquisition template; laser/averaging/seed overridden per trace

  // extraction and splitting
  int traces_per_condition = 1;
  int windows_per_event = 4;
  int target_per_class = 3000;
  int max_traces = 0;  // 0: four times the traces needed
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t rng_seed = 2022;

  void validate() const {
    sim.validate();
    if (std::abs(train_fraction + validation_fraction + test_fraction - 1.0) > 1e-9)
      throw ValidationError("split fractions must sum to 1");
    if (train_fraction < 0 || validation_fraction < 0 || test_fraction < 0)
      throw ValidationError("split fractions must be non-negative");
    if (windows_per_event < 1) throw ValidationError("windows_per_event must be >= 1");
    if (traces_per_condition < 1) throw ValidationError("traces_per_condition must be >= 1");
    if (target_per_class < 1) throw ValidationError("target_per_class must be >= 1");
    if (isolated_branches < 0) throw ValidationError("isolated_branches must be >= 0");
    if (isolated_branches + 2 > splitter_ratio) throw ValidationError("more branches than splitter ports");
    for (const auto* r : {&first_branch_length, &branch_spacing, &branch_delta, &attenuation, &voa,
                          &laser_power, &averaging_time})
      if (!(r->lo <= r->hi)) throw ValidationError("sampling range with lo > hi");
    if (!(averaging_time.lo > 0)) throw ValidationError("averaging time must be positive");
    if (!(branch_delta.lo > 0)) throw ValidationError("branch delta must be positive");
    if (!(max_pair_attenuation_gap >= 0)) throw ValidationError("pair attenuation gap must be >= 0");
    if (branch_spacing.lo / sim.sample_spacing < static_cast<double>(2 * kWindowLength))
      throw ValidationError("branch spacing must exceed two windows");
  }

  std::string fingerprint() const;
};

inline void write_config(KeyValueConfig& kv, const DatasetSpec& s) {
  kv.set("feeder_length", s.feeder_length);
  kv.set("fiber_attenuation", s.fiber_attenuation);
  kv.set("splitter_ratio", s.splitter_ratio);
  kv.set("isolated_branches", s.isolated_branches);
  auto range = [&](const std::string& k, const Range& r) {
    kv.set(k + "_min", r.lo);
    kv.set(k + "_max", r.hi);
  };
  range("first_branch_length", s.first_branch_length);
  range("branch_spacing", s.branch_spacing);
  range("branch_delta", s.branch_delta);
  range("attenuation", s.attenuation);
  kv.set("max_pair_attenuation_gap", s.max_pair_attenuation_gap);
  range("voa", s.voa);
  range("laser_power", s.laser_power);
  range("averaging_time", s.averaging_time);
  kv.set("reflector_probability", s.reflector_probability);
  kv.set("connector_reflectance", s.connector_reflectance);
  kv.set("reflector_reflectance", s.reflector_reflectance);
  sim::write_config(kv, s.sim, "sim.");
  kv.set("traces_per_condition", s.traces_per_condition);
  kv.set("windows_per_event", s.windows_per_event);
  kv.set("target_per_class", s.target_per_class);
  kv.set("max_traces", s.max_traces);
  kv.set("train_fraction", s.train_fraction);
  kv.set("validation_fraction", s.validation_fraction);
  kv.set("test_fraction", s.test_fraction);
  kv.set("rng_seed", s.rng_seed);
}

inline DatasetSpec read_dataset_spec(const KeyValueConfig& kv, DatasetSpec s = {}) {
  s.feeder_length = kv.get_double("feeder_length", s.feeder_length);
  s.fiber_attenuation = kv.get_double("fiber_attenuation", s.fiber_attenuation);
  s.splitter_ratio = static_cast<int>(kv.get_int("splitter_ratio", s.splitter_ratio));
  s.isolated_branches = static_cast<int>(kv.get_int("isolated_branches", s.isolated_branches));
  auto range = [&](const std::string& k, Range& r) {
    r.lo = kv.get_double(k + "_min", r.lo);
    r.hi = kv.get_double(k + "_max", r.hi);
  };
  range("first_branch_length", s.first_branch_length);
  range("branch_spacing", s.branch_spacing);
  range("branch_delta", s.branch_delta);
  range("attenuation", s.attenuation);
  s.max_pair_attenuation_gap = kv.get_double("max_pair_attenuation_gap", s.max_pair_attenuation_gap);
  range("voa", s.voa);
  range("laser_power", s.laser_power);
  range("averaging_time", s.averaging_time);
  s.reflector_probability = kv.get_double("reflector_probability", s.reflector_probability);
  s.connector_reflectance = kv.get_double("connector_reflectance", s.connector_reflectance);
  s.reflector_reflectance = kv.get_double("reflector_reflectance", s.reflector_reflectance);
  {
    KeyValueConfig merged;
    sim::write_config(merged, s.sim, "sim.");
    for (const auto& [k, v] : kv.entries())
      if (k.rfind("sim.", 0) == 0) merged.set(k, v);
    s.sim = sim::read_sim_config(merged, "sim.");
  }
  s.traces_per_condition = static_cast<int>(kv.get_int("traces_per_condition", s.traces_per_condition));
  s.windows_per_event = static_cast<int>(kv.get_int("windows_per_event", s.windows_per_event));
  s.target_per_class = static_cast<int>(kv.get_int("target_per_class", s.target_per_class));
  s.max_traces = static_cast<int>(kv.get_int("max_traces", s.max_traces));
  s.train_fraction = kv.get_double("train_fraction", s.train_fraction);
  s.validation_fraction = kv.get_double("validation_fraction", s.validation_fraction);
  s.test_fraction = kv.get_double("test_fraction", s.test_fraction);
  s.rng_seed = kv.get_uint("rng_seed", s.rng_seed);
  s.validate();
  return s;
}

inline std::string DatasetSpec::fingerprint() const {
  KeyValueConfig kv;
  write_config(kv, *this);
  const auto text = kv.serialize();
  return Hasher::to_hex(hash_bytes(text));
}

/// Alternate plant used for generalization tests: longer feeder, a deeper
/// two-stage split (1:4 x 1:16), more isolated branches and longer drops.
inline DatasetSpec setup_b_spec(DatasetSpec base = {}) {
  base.feeder_length = 2000.0;
  base.splitter_ratio = 64;
  base.isolated_branches = 2;
  base.first_branch_length = {150.0, 400.0};
  base.branch_spacing = {80.0, 200.0};
  return base;
}

// ---------------------------------------------------------------------------
// plant sampling

namespace detail {

inline double uniform(std::mt19937_64& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

inline double log_uniform(std::mt19937_64& rng, const Range& r) {
  if (r.lo == r.hi) return r.lo;
  return std::exp(std::uniform_real_distribution<double>(std::log(r.lo), std::log(r.hi))(rng));
}

}  // namespace detail

inline sim::FiberPlan sample_plan(const DatasetSpec& spec, std::mt19937_64& rng) {
  sim::FiberPlan plan;
  plan.feeder_length = spec.feeder_length;
  plan.splitter_position = spec.feeder_length;
  plan.fiber_attenuation = spec.fiber_attenuation;
  plan.splitter_ratio = spec.splitter_ratio;
  plan.voa_attenuation = detail::uniform(rng, spec.voa);
  const bool reflector = std::bernoulli_distribution(spec.reflector_probability)(rng);
  const double reflectance = reflector ? spec.reflector_reflectance : spec.connector_reflectance;

  double length = detail::uniform(rng, spec.first_branch_length);
  for (int i = 0; i < spec.isolated_branches; ++i) {
    plan.branches.push_back({length, reflectance, detail::uniform(rng, spec.attenuation)});
    length += detail::uniform(rng, spec.branch_spacing);
  }
  const double a1 = detail::uniform(rng, spec.attenuation);
  const Range second{std::max(spec.attenuation.lo, a1 - spec.max_pair_attenuation_gap),
                     std::min(spec.attenuation.hi, a1 + spec.max_pair_attenuation_gap)};
  const double a2 = detail::uniform(rng, second);
  const double delta = detail::uniform(rng, spec.branch_delta);
  plan.branches.push_back({length, reflectance, a1});
  plan.branches.push_back({length + delta, reflectance, a2});
  plan.validate();
  return plan;
}

inline sim::SimConfig sample_acquisition(const DatasetSpec& spec, std::mt19937_64& rng) {
  sim::SimConfig c = spec.sim;
  c.laser_power = detail::uniform(rng, spec.laser_power);
  c.averaging_time = detail::log_uniform(rng, spec.averaging_time);
  return c;
}

// ---------------------------------------------------------------------------
// window extraction

namespace detail {

inline Window make_window(const sim::Trace& trace, std::int64_t start) {
  Window w;
  const auto l = label_window(trace, start);
  w.label = l.label;
  w.positions = l.positions;
  w.values = normalize_window(std::span<const double>(trace.samples).subspan(static_cast<std::size_t>(start), kWindowLength));
  w.source = trace.plan_fingerprint;
  w.start = start;
  return w;
}

/// Up to `count` distinct values drawn uniformly without replacement.
inline std::vector<std::int64_t> draw_distinct(std::vector<std::int64_t> candidates, int count, std::mt19937_64& rng) {
  const auto n = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(n);
  return candidates;
}

}  // namespace detail

/**
 * Random windows around every event group of the trace, plus event-free
 * windows. A group is a run of events closer than one window length. Windows
 * contain the whole pattern of their group (event +/- pulse half-width) and
 * no part of any other group's pattern. Groups with more than two events are
 * skipped. Each group yields `windows_per_event` windows with distinct
 * starts, or none if fewer placements are feasible; likewise for C0.
 */
inline std::vector<Window> extract_windows(const sim::Trace& trace, const DatasetSpec& spec, std::uint64_t seed) {
  if (trace.size() <= kWindowLength) throw ValidationError("trace shorter than window");
  std::mt19937_64 rng(seed);
  const auto margin = static_cast<double>(sim::kernel_half_width(spec.sim));
  const auto last_start = static_cast<std::int64_t>(trace.size() - kWindowLength);
  const auto span = static_cast<std::int64_t>(kWindowLength);

  std::vector<double> idx;
  for (const auto& e : trace.events) idx.push_back(e.position / trace.sample_spacing);

  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [first, last] event index
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (!groups.empty() && idx[i] - idx[groups.back().second] < static_cast<double>(kWindowLength))
      groups.back().second = i;
    else
      groups.emplace_back(i, i);
  }

  std::vector<Window> out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto [first, last] = groups[g];
    if (last - first + 1 > 2) continue;
    std::int64_t lo = static_cast<std::int64_t>(std::ceil(idx[last] + margin)) - (span - 1);
    std::int64_t hi = static_cast<std::int64_t>(std::floor(idx[first] - margin));
    if (g > 0) lo = std::max(lo, static_cast<std::int64_t>(std::floor(idx[groups[g - 1].second] + margin)) + 1);
    if (g + 1 < groups.size())
      hi = std::min(hi, static_cast<std::int64_t>(std::ceil(idx[groups[g + 1].first] - margin)) - span);
    lo = std::max<std::int64_t>(lo, 0);
    hi = std::min(hi, last_start);
    if (hi - lo + 1 < spec.windows_per_event) continue;
    std::vector<std::int64_t> starts;
    for (auto s = lo; s <= hi; ++s) starts.push_back(s);
    for (auto s : detail::draw_distinct(std::move(starts), spec.windows_per_event, rng))
      out.push_back(detail::make_window(trace, s));
  }

  // C0: windows clear of every pattern
  std::vector<int> blocked(trace.size() + 1, 0);
  for (double e : idx) {
    const auto a = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(e - margin)) - 1);
    const auto b = std::min<std::int64_t>(static_cast<std::int64_t>(trace.size()) - 1,
                                          static_cast<std::int64_t>(std::floor(e + margin)) + 1);
    for (auto i = a; i <= b; ++i) blocked[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<int> prefix(trace.size() + 1, 0);
  for (std::size_t i = 0; i < trace.size(); ++i) prefix[i + 1] = prefix[i] + blocked[i];
  std::vector<std::int64_t> free_starts;
  for (std::int64_t s = 0; s <= last_start; ++s)
    if (prefix[static_cast<std::size_t>(s + span)] - prefix[static_cast<std::size_t>(s)] == 0) free_starts.push_back(s);
  if (static_cast<int>(free_starts.size()) >= spec.windows_per_event)
    for (auto s : detail::draw_distinct(std::move(free_starts), spec.windows_per_event, rng))
      out.push_back(detail::make_window(trace, s));
  return out;
}

// ---------------------------------------------------------------------------
// dataset assembly

struct SplitSet {
  std::vector<Window> train;
  std::vector<Window> validation;
  std::vector<Window> test;
  std::string provenance;  // DatasetSpec fingerprint
  double sample_spacing = 0.5;

  std::size_t size() const { return train.size() + validation.size() + test.size(); }
  bool operator==(const SplitSet&) const = default;
};

class InsufficientData : public std::runtime_error {
 public:
  InsufficientData(std::array<std::size_t, 3> counts, int target)
      : std::runtime_error("insufficient data: reached C0=" + std::to_string(counts[0]) +
                           " C1=" + std::to_string(counts[1]) + " C2=" + std::to_string(counts[2]) +
                           " of " + std::to_string(target) + " per class"),
        achieved(counts) {}
  std::array<std::size_t, 3> achieved;
};

inline std::array<std::size_t, 3> class_counts(std::span<const Window> ws) {
  std::array<std::size_t, 3> c{};
  for (const auto& w : ws) ++c[static_cast<std::size_t>(class_index(w.label))];
  return c;
}

/// Windows of one sampled plant condition (all its traces).
struct ConditionGroup {
  std::vector<Window> windows;
};

namespace detail {

inline std::vector<Window> balance(std::vector<Window> ws, std::mt19937_64& rng) {
  const auto counts = class_counts(ws);
  const auto keep = *std::min_element(counts.begin(), counts.end());
  std::vector<Window> out;
  for (int c = 0; c < 3; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ws.size(); ++i)
      if (class_index(ws[i].label) == c) members.push_back(i);
    std::vector<std::int64_t> picks(members.begin(), members.end());
    auto chosen = draw_distinct(std::move(picks), static_cast<int>(keep), rng);
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) out.push_back(std::move(ws[static_cast<std::size_t>(i)]));
  }
  std::stable_sort(out.begin(), out.end(), [](const Window& a, const Window& b) {
    return std::tie(a.source, a.start) < std::tie(b.source, b.start);
  });
  return out;
}

}  // namespace detail

/// Simulated windows grouped by plant condition, until every class reaches
/// `target` windows or the trace budget runs out.
inline std::vector<ConditionGroup> simulate_groups(const DatasetSpec& spec, int target, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 plant_rng(sub_seed(seed, "plants"));
  const int per_trace = spec.windows_per_event;
  const int needed = (target + per_trace - 1) / per_trace;
  const int budget = spec.max_traces > 0 ? spec.max_traces : 4 * needed + 16;
  std::vector<ConditionGroup> groups;
  std::array<std::size_t, 3> totals{};
  int traces = 0;
  while (traces < budget && *std::min_element(totals.begin(), totals.end()) < static_cast<std::size_t>(target)) {
    const auto plan = sample_plan(spec, plant_rng);
    ConditionGroup group;
    for (int k = 0; k < spec.traces_per_condition && traces < budget; ++k, ++traces) {
      auto acq = sample_acquisition(spec, plant_rng);
      acq.rng_seed = sub_seed(seed, "noise", static_cast<std::uint64_t>(traces));
      const auto trace = sim::synthesize_trace(plan, acq);
      auto ws = extract_windows(trace, spec, sub_seed(seed, "windows", static_cast<std::uint64_t>(traces)));
      for (auto& w : ws) group.windows.push_back(std::move(w));
    }
    const auto c = class_counts(group.windows);
    for (int i = 0; i < 3; ++i) totals[static_cast<std::size_t>(i)] += c[static_cast<std::size_t>(i)];
    groups.push_back(std::move(group));
  }
  if (*std::min_element(totals.begin(), totals.end()) < static_cast<std::size_t>(target))
    throw InsufficientData(totals, target);
  return groups;
}

/// Balanced windows from freshly simulated plants (no splitting); used for
/// sweeps and out-of-distribution tests.
inline std::vector<Window> simulate_windows(const DatasetSpec& spec, int per_class, std::uint64_t seed) {
  auto groups = simulate_groups(spec, per_class, seed);
  std::vector<Window> all;
  for (auto& g : groups)
    for (auto& w : g.windows) all.push_back(std::move(w));
  std::mt19937_64 rng(sub_seed(seed, "balance"));
  return detail::balance(std::move(all), rng);
}

/**
 * Samples plants, extracts windows, splits by plant condition (no condition
 * contributes to two splits) and balances each split by downsampling the
 * majority classes.
 */
inline SplitSet build_dataset(const DatasetSpec& spec) {
  auto groups = simulate_groups(spec, spec.target_per_class, spec.rng_seed);
  std::mt19937_64 rng(sub_seed(spec.rng_seed, "split"));
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);

  const auto g = static_cast<double>(groups.size());
  const auto n_train = static_cast<std::size_t>(std::llround(g * spec.train_fraction));
  const auto n_val = std::min(groups.size() - n_train,
                              static_cast<std::size_t>(std::llround(g * spec.validation_fraction)));
  std::vector<Window> parts[3];
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int which = k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
    for (auto& w : groups[order[k]].windows) parts[which].push_back(std::move(w));
  }
  SplitSet out;
  out.provenance = spec.fingerprint();
  out.sample_spacing = spec.sim.sample_spacing;
  std::mt19937_64 bal(sub_seed(spec.rng_seed, "balance"));
  out.train = detail::balance(std::move(parts[0]), bal);
  out.validation = detail::balance(std::move(parts[1]), bal);
  out.test = detail::balance(std::move(parts[2]), bal);
  return out;
}

// ---------------------------------------------------------------------------
// persistence

inline nlohmann::json window_json(const Window& w) {
  nlohmann::json j;
  j["v"] = w.values;
  j["c"] = class_index(w.label);
  nlohmann::json p = nlohmann::json::array();
  for (const auto& slot : w.positions) p.push_back(slot ? nlohmann::json(*slot) : nlohmann::json(nullptr));
  j["p"] = p;
  j["src"] = w.source;
  j["start"] = w.start;
  return j;
}

inline Window window_from_json(const nlohmann::json& j) {
  Window w;
  const auto& v = j.at("v");
  if (!v.is_array() || v.size() != kWindowLength) throw ValidationError("\"v\" must hold 50 numbers");
  for (std::size_t i = 0; i < kWindowLength; ++i) w.values[i] = v[i].get<double>();
  w.label = class_from_index(j.at("c").get<int>());
  const auto& p = j.at("p");
  if (!p.is_array() || p.size() != 2) throw ValidationError("\"p\" must hold two slots");
  for (std::size_t i = 0; i < 2; ++i)
    if (!p[i].is_null()) w.positions[i] = p[i].get<double>();
  w.source = j.at("src").get<std::string>();
  w.start = j.at("start").get<std::int64_t>();
  w.validate();
  return w;
}

inline std::string windows_jsonl(std::span<const Window> ws) {
  std::string out;
  for (const auto& w : ws) {
    out += window_json(w).dump();
    out += '\n';
  }
  return out;
}

inline void save_windows(const std::filesystem::path& path, std::span<const Window> ws) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << windows_jsonl(ws);
}

inline std::vector<Window> parse_windows(std::istream& in) {
  std::vector<Window> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(window_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + " (last good line " +
                            std::to_string(line_no - 1) + "): " + e.what());
    }
  }
  return out;
}

inline std::vector<Window> load_windows(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path.string());
  try {
    return parse_windows(f);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline std::string split_hash(const SplitSet& s) {
  Hasher h;
  h.add(s.provenance).add(s.sample_spacing);
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    const auto text = windows_jsonl(*part);
    h.add(text);
  }
  return h.hex();
}

/// Writes train/validation/test JSON-Lines plus dataset.json metadata and a
/// class balance CSV into `dir`.
inline void save_split(const std::filesystem::path& dir, const SplitSet& s) {
  std::filesystem::create_directories(dir);
  save_windows(dir / "train.jsonl", s.train);
  save_windows(dir / "validation.jsonl", s.validation);
  save_windows(dir / "test.jsonl", s.test);
  nlohmann::json meta;
  meta["provenance"] = s.provenance;
  meta["sample_spacing"] = s.sample_spacing;
  meta["window_length"] = kWindowLength;
  meta["hash"] = split_hash(s);
  std::ofstream(dir / "dataset.json", std::ios::binary) << meta.dump(2) << "\n";
  std::ofstream csv(dir / "class_balance.csv", std::ios::binary);
  csv << "split,c0,c1,c2\n";
  const std::pair<const char*, const std::vector<Window>*> parts[] = {
      {"train", &s.train}, {"validation", &s.validation}, {"test", &s.test}};
  for (const auto& [name, ws] : parts) {
    const auto c = class_counts(*ws);
    csv << name << ',' << c[0] << ',' << c[1] << ',' << c[2] << '\n';
  }
}

inline SplitSet load_split(const std::filesystem::path& dir) {
  SplitSet s;
  std::ifstream meta_in(dir / "dataset.json");
  if (!meta_in) throw ValidationError("missing " + (dir / "dataset.json").string());
  const auto meta = nlohmann::json::parse(meta_in);
  s.provenance = meta.at("provenance").get<std::string>();
  s.sample_spacing = meta.at("sample_spacing").get<double>();
  s.train = load_windows(dir / "train.jsonl");
  s.validation = load_windows(dir / "validation.jsonl");
  s.test = load_windows(dir / "test.jsonl");
  return s;
}

}  // namespace ponbranch::data
