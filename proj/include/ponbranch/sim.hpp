#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ponbranch/common.hpp"

// OTDR trace synthesis for a feeder / splitter / branch PON plant.
//
// Power convention: every array holds linear *measured* power in mW, and
// every dB quantity is 10*log10 of a measured-power ratio. A one-way loss of
// a dB therefore appears as 2a dB in the returned signal.

namespace ponbranch::sim {

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kOpenConnectorReflectance = -14.7;
inline constexpr double kReflectorReflectance = -35.0;

struct BranchSpec {
  double length = 100.0;                               // m, from splitter to branch end
  double reflectance = kOpenConnectorReflectance;      // dB
  double static_attenuation = 1.0;                     // dB, one-way, at branch start

  void validate() const {
    if (!(length > 0)) throw ValidationError("branch length must be positive");
    if (!(static_attenuation >= 0)) throw ValidationError("static attenuation must be >= 0 dB");
    if (!(reflectance <= 0)) throw ValidationError("reflectance must be <= 0 dB");
  }
};

struct FiberPlan {
  double feeder_length = 1000.0;        // m; the VOA sits at the feeder end
  double fiber_attenuation = 0.3;       // dB/km, one-way
  double splitter_position = 1000.0;    // m
  int splitter_ratio = 32;
  double voa_attenuation = 0.0;         // dB, one-way
  std::vector<BranchSpec> branches;
  // Splitter ports without a listed branch carry reflection-free fiber of
  // this length. Zero means "as long as the longest listed branch".
  double idle_port_length = 0.0;

  void validate() const {
    if (!(feeder_length >= 0)) throw ValidationError("feeder length must be >= 0");
    if (!(splitter_position >= feeder_length))
      throw ValidationError("splitter must sit at or after the feeder end");
    if (splitter_ratio < 2) throw ValidationError("splitter ratio must be >= 2");
    if (branches.empty()) throw ValidationError("plan needs at least one branch");
    if (branches.size() > static_cast<std::size_t>(splitter_ratio))
      throw ValidationError("more branches than splitter ports");
    if (!(fiber_attenuation >= 0)) throw ValidationError("fiber attenuation must be >= 0");
    if (!(voa_attenuation >= 0)) throw ValidationError("VOA attenuation must be >= 0");
    if (!(idle_port_length >= 0)) throw ValidationError("idle port length must be >= 0");
    std::vector<double> ends;
    for (const auto& b : branches) {
      b.validate();
      ends.push_back(splitter_position + b.length);
    }
    std::sort(ends.begin(), ends.end());
    if (std::adjacent_find(ends.begin(), ends.end()) != ends.end())
      throw ValidationError("branch end positions must be distinct");
  }

  double branch_end(std::size_t i) const { return splitter_position + branches.at(i).length; }

  double longest_branch() const {
    double m = 0;
    for (const auto& b : branches) m = std::max(m, b.length);
    return m;
  }

  double idle_length() const { return idle_port_length > 0 ? idle_port_length : longest_branch(); }

  void fingerprint_into(Hasher& h) const {
    h.add(feeder_length).add(fiber_attenuation).add(splitter_position).add(splitter_ratio)
        .add(voa_attenuation).add(idle_port_length);
    h.add(static_cast<std::uint64_t>(branches.size()));
    for (const auto& b : branches) h.add(b.length).add(b.reflectance).add(b.static_attenuation);
  }
};

struct SimConfig {
  double sample_spacing = 0.5;       // m/sample
  double pulse_width = 10e-9;        // s
  double group_index = 1.468;
  double laser_power = 0.0;          // dBm
  double averaging_time = 1.0;       // s
  double base_noise_sigma = 1e-12;   // mW at 1 s averaging
  double backscatter_coefficient = 1e-7;  // returned fraction per metre of pulse
  double tail_length = 60.0;         // m of trace recorded past the last fiber end
  std::uint64_t rng_seed = 1;

  void validate() const {
    if (!(sample_spacing > 0)) throw ValidationError("sample spacing must be positive");
    if (!(pulse_width > 0)) throw ValidationError("pulse width must be positive");
    if (!(averaging_time > 0)) throw ValidationError("averaging time must be positive");
    if (!(group_index >= 1)) throw ValidationError("group index must be >= 1");
    if (!(base_noise_sigma >= 0)) throw ValidationError("noise sigma must be >= 0");
    if (!(backscatter_coefficient >= 0)) throw ValidationError("backscatter coefficient must be >= 0");
    if (!(tail_length >= 0)) throw ValidationError("tail length must be >= 0");
  }

  /// Spatial extent of the probe pulse in metres.
  double pulse_length() const { return kSpeedOfLight * pulse_width / (2.0 * group_index); }
  double launch_power_mw() const { return std::pow(10.0, laser_power / 10.0); }

  void fingerprint_into(Hasher& h) const {
    h.add(sample_spacing).add(pulse_width).add(group_index).add(laser_power).add(averaging_time)
        .add(base_noise_sigma).add(backscatter_coefficient).add(tail_length).add(rng_seed);
  }
};

struct Event {
  double position = 0;     // m
  double amplitude = 0;    // integrated linear power of the peak (mW)
  std::size_t branch = 0;  // index into FiberPlan::branches
};

struct Trace {
  std::vector<double> samples;
  double sample_spacing = 0.5;
  std::vector<Event> events;  // ascending by position
  std::string plan_fingerprint;

  std::size_t size() const { return samples.size(); }
};

inline std::string fingerprint(const FiberPlan& plan, const SimConfig& config) {
  Hasher h;
  plan.fingerprint_into(h);
  config.fingerprint_into(h);
  return h.hex();
}

/// Number of samples a trace of this plan spans.
inline std::size_t trace_length(const FiberPlan& plan, const SimConfig& config) {
  const double far_end = plan.splitter_position + std::max(plan.longest_branch(), plan.idle_length());
  return static_cast<std::size_t>(std::ceil((far_end + config.tail_length) / config.sample_spacing)) + 1;
}

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Rectangle of width w (metres) convolved with a Gaussian of FWHM w/2,
/// evaluated at offset x. Unnormalized.
inline double pulse_shape(double x, double w) {
  const double sigma = (w / 2.0) / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  return normal_cdf((x + w / 2.0) / sigma) - normal_cdf((x - w / 2.0) / sigma);
}

inline double pulse_support(double w) {
  const double sigma = (w / 2.0) / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  return w / 2.0 + 5.0 * sigma;
}

}  // namespace detail

/// Half-length of the discrete pulse kernel in samples.
inline std::size_t kernel_half_width(const SimConfig& config) {
  return static_cast<std::size_t>(std::ceil(detail::pulse_support(config.pulse_length()) / config.sample_spacing));
}

/// Symmetric, unit-sum, odd-length kernel of an on-grid reflection.
inline std::vector<double> pulse_kernel(const SimConfig& config) {
  config.validate();
  const double w = config.pulse_length();
  if (w < config.sample_spacing) throw ValidationError("pulse unresolvable at this spacing");
  const auto half = static_cast<std::ptrdiff_t>(kernel_half_width(config));
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double total = 0;
  for (std::ptrdiff_t i = -half; i <= half; ++i) {
    const double v = detail::pulse_shape(static_cast<double>(i) * config.sample_spacing, w);
    k[static_cast<std::size_t>(i + half)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  // enforce exact symmetry against rounding in erfc
  for (std::ptrdiff_t i = 0; i < half; ++i) {
    const auto a = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(2 * half - i);
    const double m = 0.5 * (k[a] + k[b]);
    k[a] = k[b] = m;
  }
  return k;
}

inline double db_to_ratio(double db) { return std::pow(10.0, db / 10.0); }

/// One-way fiber loss in dB from the launch point to position z.
inline double fiber_loss_db(const FiberPlan& plan, double z) { return plan.fiber_attenuation * z / 1000.0; }

/// Noiseless Rayleigh backscatter contributed by splitter port `branch` alone
/// (beyond the splitter). Branch index == branches.size() denotes one idle port.
inline std::vector<double> branch_backscatter(const FiberPlan& plan, const SimConfig& config, std::size_t branch) {
  const std::size_t n = trace_length(plan, config);
  std::vector<double> out(n, 0.0);
  const double unit = config.launch_power_mw() * config.backscatter_coefficient * config.pulse_length();
  const double split = 1.0 / static_cast<double>(plan.splitter_ratio);
  double length = plan.idle_length();
  double atten = 0.0;
  if (branch < plan.branches.size()) {
    length = plan.branches[branch].length;
    atten = plan.branches[branch].static_attenuation;
  }
  const double end = plan.splitter_position + length;
  const double port_gain = split * split * db_to_ratio(-2.0 * (plan.voa_attenuation + atten));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = static_cast<double>(i) * config.sample_spacing;
    if (z < plan.splitter_position || z >= end) continue;
    out[i] = unit * port_gain * db_to_ratio(-2.0 * fiber_loss_db(plan, z));
  }
  return out;
}

/// Noiseless backscatter baseline of the whole plant.
inline std::vector<double> backscatter_profile(const FiberPlan& plan, const SimConfig& config) {
  plan.validate();
  config.validate();
  const std::size_t n = trace_length(plan, config);
  std::vector<double> out(n, 0.0);
  const double unit = config.launch_power_mw() * config.backscatter_coefficient * config.pulse_length();
  for (std::size_t i = 0; i < n; ++i) {
    const double z = static_cast<double>(i) * config.sample_spacing;
    if (z >= plan.splitter_position) break;
    double loss = 2.0 * fiber_loss_db(plan, z);
    if (z >= plan.feeder_length) loss += 2.0 * plan.voa_attenuation;
    out[i] = unit * db_to_ratio(-loss);
  }
  for (std::size_t b = 0; b < plan.branches.size(); ++b) {
    const auto part = branch_backscatter(plan, config, b);
    for (std::size_t i = 0; i < n; ++i) out[i] += part[i];
  }
  const auto idle_ports = static_cast<std::size_t>(plan.splitter_ratio) - plan.branches.size();
  if (idle_ports > 0) {
    const auto part = branch_backscatter(plan, config, plan.branches.size());
    for (std::size_t i = 0; i < n; ++i) out[i] += static_cast<double>(idle_ports) * part[i];
  }
  return out;
}

/// Integrated linear power of the reflection peak from branch i.
inline double reflection_amplitude(const FiberPlan& plan, const SimConfig& config, std::size_t i) {
  const auto& b = plan.branches.at(i);
  const double pos = plan.branch_end(i);
  const double split_db = 10.0 * std::log10(static_cast<double>(plan.splitter_ratio));
  const double one_way = fiber_loss_db(plan, pos) + b.static_attenuation + plan.voa_attenuation + split_db;
  return config.launch_power_mw() * db_to_ratio(b.reflectance) * db_to_ratio(-2.0 * one_way);
}

/// Adds a unit-integral pulse centred at `position` (metres), scaled by `amplitude`.
/// Off-grid centres sample the continuous pulse shape at the fractional offset;
/// on-grid centres reproduce pulse_kernel exactly.
inline void stamp_peak(std::span<double> samples, const SimConfig& config, double position, double amplitude) {
  const double w = config.pulse_length();
  const double centre = position / config.sample_spacing;
  const auto half = static_cast<std::ptrdiff_t>(kernel_half_width(config));
  const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::floor(centre)) - half);
  const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(samples.size()) - 1,
                                           static_cast<std::ptrdiff_t>(std::ceil(centre)) + half);
  if (lo > hi) return;
  std::vector<double> weights(static_cast<std::size_t>(hi - lo + 1));
  double total = 0;
  for (std::ptrdiff_t i = lo; i <= hi; ++i) {
    const double offset = (static_cast<double>(i) - centre) * config.sample_spacing;
    const double v = detail::pulse_shape(offset, w);
    weights[static_cast<std::size_t>(i - lo)] = v;
    total += v;
  }
  for (std::ptrdiff_t i = lo; i <= hi; ++i)
    samples[static_cast<std::size_t>(i)] += amplitude * weights[static_cast<std::size_t>(i - lo)] / total;
}

struct ReflectionField {
  std::vector<double> samples;
  std::vector<Event> events;
};

/// Linear sum of all branch-end reflection peaks, plus exact event positions.
inline ReflectionField reflection_profile(const FiberPlan& plan, const SimConfig& config) {
  config.validate();
  if (config.pulse_length() < config.sample_spacing) throw ValidationError("pulse unresolvable at this spacing");
  ReflectionField field;
  field.samples.assign(trace_length(plan, config), 0.0);
  for (std::size_t i = 0; i < plan.branches.size(); ++i) {
    const double amp = reflection_amplitude(plan, config, i);
    const double pos = plan.branch_end(i);
    stamp_peak(field.samples, config, pos, amp);
    field.events.push_back({pos, amp, i});
  }
  std::sort(field.events.begin(), field.events.end(),
            [](const Event& a, const Event& b) { return a.position < b.position; });
  return field;
}

inline double noise_sigma(const SimConfig& config) {
  return config.base_noise_sigma / std::sqrt(config.averaging_time / 1.0);
}

/// Zero-mean Gaussian noise, clipped at zero. Deterministic per seed.
inline std::vector<double> add_noise(std::span<const double> samples, const SimConfig& config, std::uint64_t seed) {
  std::vector<double> out(samples.begin(), samples.end());
  const double sigma = noise_sigma(config);
  if (sigma == 0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (auto& v : out) v = std::max(0.0, v + gauss(rng));
  return out;
}

inline Trace synthesize_trace(const FiberPlan& plan, const SimConfig& config) {
  auto base = backscatter_profile(plan, config);
  auto refl = reflection_profile(plan, config);
  for (std::size_t i = 0; i < base.size(); ++i) base[i] += refl.samples[i];
  Trace t;
  t.samples = add_noise(base, config, config.rng_seed);
  t.sample_spacing = config.sample_spacing;
  t.events = std::move(refl.events);
  t.plan_fingerprint = fingerprint(plan, config);
  return t;
}

inline std::vector<double> to_display_db(std::span<const double> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (double s : samples) out.push_back(10.0 * std::log10(std::max(s, 1e-12)));
  return out;
}

// ---------------------------------------------------------------------------
// configuration files

inline void write_config(KeyValueConfig& kv, const FiberPlan& plan, const std::string& prefix = "") {
  kv.set(prefix + "feeder_length", plan.feeder_length);
  kv.set(prefix + "fiber_attenuation", plan.fiber_attenuation);
  kv.set(prefix + "splitter_position", plan.splitter_position);
  kv.set(prefix + "splitter_ratio", plan.splitter_ratio);
  kv.set(prefix + "voa_attenuation", plan.voa_attenuation);
  kv.set(prefix + "idle_port_length", plan.idle_port_length);
  for (std::size_t i = 0; i < plan.branches.size(); ++i) {
    const std::string b = prefix + "branch." + std::to_string(i) + ".";
    kv.set(b + "length", plan.branches[i].length);
    kv.set(b + "reflectance", plan.branches[i].reflectance);
    kv.set(b + "static_attenuation", plan.branches[i].static_attenuation);
  }
}

inline void write_config(KeyValueConfig& kv, const SimConfig& c, const std::string& prefix = "") {
  kv.set(prefix + "sample_spacing", c.sample_spacing);
  kv.set(prefix + "pulse_width", c.pulse_width);
  kv.set(prefix + "group_index", c.group_index);
  kv.set(prefix + "laser_power", c.laser_power);
  kv.set(prefix + "averaging_time", c.averaging_time);
  kv.set(prefix + "base_noise_sigma", c.base_noise_sigma);
  kv.set(prefix + "backscatter_coefficient", c.backscatter_coefficient);
  kv.set(prefix + "tail_length", c.tail_length);
  kv.set(prefix + "rng_seed", c.rng_seed);
}

inline FiberPlan read_plan(const KeyValueConfig& kv, const std::string& prefix = "") {
  FiberPlan p;
  p.feeder_length = kv.get_double(prefix + "feeder_length", p.feeder_length);
  p.fiber_attenuation = kv.get_double(prefix + "fiber_attenuation", p.fiber_attenuation);
  p.splitter_position = kv.get_double(prefix + "splitter_position", std::max(p.feeder_length, 0.0));
  p.splitter_ratio = static_cast<int>(kv.get_int(prefix + "splitter_ratio", p.splitter_ratio));
  p.voa_attenuation = kv.get_double(prefix + "voa_attenuation", p.voa_attenuation);
  p.idle_port_length = kv.get_double(prefix + "idle_port_length", p.idle_port_length);
  for (auto i : kv.indices(prefix + "branch")) {
    const std::string b = prefix + "branch." + std::to_string(i) + ".";
    BranchSpec spec;
    spec.length = kv.get_double(b + "length", spec.length);
    spec.reflectance = kv.get_double(b + "reflectance", spec.reflectance);
    spec.static_attenuation = kv.get_double(b + "static_attenuation", spec.static_attenuation);
    p.branches.push_back(spec);
  }
  p.validate();
  return p;
}

inline SimConfig read_sim_config(const KeyValueConfig& kv, const std::string& prefix = "") {
  SimConfig c;
  c.sample_spacing = kv.get_double(prefix + "sample_spacing", c.sample_spacing);
  c.pulse_width = kv.get_double(prefix + "pulse_width", c.pulse_width);
  c.group_index = kv.get_double(prefix + "group_index", c.group_index);
  c.laser_power = kv.get_double(prefix + "laser_power", c.laser_power);
  c.averaging_time = kv.get_double(prefix + "averaging_time", c.averaging_time);
  c.base_noise_sigma = kv.get_double(prefix + "base_noise_sigma", c.base_noise_sigma);
  c.backscatter_coefficient = kv.get_double(prefix + "backscatter_coefficient", c.backscatter_coefficient);
  c.tail_length = kv.get_double(prefix + "tail_length", c.tail_length);
  c.rng_seed = kv.get_uint(prefix + "rng_seed", c.rng_seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// trace export

inline std::string trace_csv(const Trace& t) {
  std::string out = "position_m,power_linear\n";
  for (std::size_t i = 0; i < t.samples.size(); ++i) {
    out += format_double(static_cast<double>(i) * t.sample_spacing);
    out += ',';
    out += format_double(t.samples[i]);
    out += '\n';
  }
  return out;
}

inline nlohmann::json events_json(const Trace& t) {
  nlohmann::json j;
  j["plan_fingerprint"] = t.plan_fingerprint;
  j["sample_spacing"] = t.sample_spacing;
  j["events"] = nlohmann::json::array();
  for (const auto& e : t.events)
    j["events"].push_back({{"position_m", e.position}, {"kind", "reflection"},
                           {"amplitude", e.amplitude}, {"branch", e.branch}});
  return j;
}

}  // namespace ponbranch::sim
