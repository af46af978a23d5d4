#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ponbranch/sim.hpp"

using namespace ponbranch;
using namespace ponbranch::sim;

namespace {

FiberPlan one_branch(double atten = 2.0, double length = 100.0) {
  FiberPlan p;
  p.branches = {{length, kOpenConnectorReflectance, atten}};
  return p;
}

SimConfig quiet() {
  SimConfig c;
  c.base_noise_sigma = 0;
  return c;
}

double level_db(const std::vector<double>& v, double z, double dz) {
  return 10 * std::log10(v[static_cast<std::size_t>(std::llround(z / dz))]);
}

}  // namespace

TEST(PulseKernel, LengthAndNormalization) {
  SimConfig c;
  EXPECT_NEAR(c.pulse_length(), 299792458.0 * 1e-8 / (2 * 1.468), 1e-12);
  EXPECT_NEAR(c.pulse_length(), 1.021, 1e-3);
  for (double dz : {0.1, 0.25, 0.5, 1.0}) {
    c.sample_spacing = dz;
    const auto k = pulse_kernel(c);
    EXPECT_EQ(k.size() % 2, 1u);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < k.size(); ++i) {
      EXPECT_GE(k[i], 0.0);
      EXPECT_EQ(k[i], k[k.size() - 1 - i]);
    }
  }
}

TEST(PulseKernel, UnresolvablePulse) {
  SimConfig c;
  c.sample_spacing = 2.0;
  try {
    pulse_kernel(c);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_STREQ(e.what(), "pulse unresolvable at this spacing");
  }
}

TEST(Backscatter, SplitterDropIsTenLogN) {
  for (int n : {2, 8, 32, 64}) {
    FiberPlan p = one_branch(0.0);
    p.splitter_ratio = n;
    const auto c = quiet();
    const auto prof = backscatter_profile(p, c);
    const double before = level_db(prof, p.splitter_position - c.sample_spacing, c.sample_spacing);
    const double after = level_db(prof, p.splitter_position, c.sample_spacing);
    const double fiber = 2 * 0.3 * c.sample_spacing / 1000;
    EXPECT_NEAR(before - after - fiber, 10 * std::log10(n), 1e-9) << n;
  }
}

TEST(Backscatter, ThirtyTwoWayDropMatchesFifteenDb) {
  FiberPlan p = one_branch(0.0);
  const auto c = quiet();
  const auto prof = backscatter_profile(p, c);
  const double ratio = prof[2000] / prof[1999];
  EXPECT_NEAR(ratio * 32.0, 1.0, 0.01);
  EXPECT_NEAR(-10 * std::log10(ratio), 15.0, 0.1);
}

TEST(Backscatter, LosslessFiberIsFlat) {
  FiberPlan p = one_branch(0.0);
  p.fiber_attenuation = 0;
  p.splitter_ratio = 2;
  p.branches.push_back({p.branches[0].length + 5.0, kOpenConnectorReflectance, 0.0});
  const auto c = quiet();
  const auto prof = backscatter_profile(p, c);
  for (std::size_t i = 1; i < 2000; ++i) EXPECT_EQ(prof[i], prof[0]);
  for (std::size_t i = 2001; i < 2200; ++i) EXPECT_EQ(prof[i], prof[2000]);
}

TEST(Backscatter, IdenticalBranchesAddLinearly) {
  FiberPlan two;
  two.splitter_ratio = 2;
  two.branches = {{100.0, kOpenConnectorReflectance, 0.0}, {100.5, -1e9, 0.0}};
  const auto c = quiet();
  const auto a = branch_backscatter(two, c, 0);
  const auto b = branch_backscatter(two, c, 1);
  const auto total = backscatter_profile(two, c);
  for (std::size_t i = 2000; i < 2200; ++i) {
    EXPECT_NEAR(total[i], a[i] + b[i], 1e-15 * total[i]);
    EXPECT_NEAR(a[i], b[i], 1e-15 * a[i]);
  }
}

TEST(Backscatter, MonotoneBetweenEvents) {
  FiberPlan p = one_branch(3.0);
  p.branches.push_back({160.0, kReflectorReflectance, 5.0});
  const auto prof = backscatter_profile(p, quiet());
  for (std::size_t i = 1; i < prof.size(); ++i) {
    const double z = static_cast<double>(i) * 0.5;
    if (std::abs(z - 1000) < 1 || std::abs(z - 1100) < 1 || std::abs(z - 1160) < 1) continue;
    EXPECT_LE(prof[i], prof[i - 1]);
  }
}

TEST(Reflection, AttenuatorScalesAmplitude) {
  const auto c = quiet();
  const double a0 = reflection_amplitude(one_branch(0.0), c, 0);
  const double a3 = reflection_amplitude(one_branch(3.0), c, 0);
  EXPECT_NEAR(a3 / a0, std::pow(10.0, -0.6), 1e-12);
}

TEST(Reflection, AmplitudeFormula) {
  FiberPlan p = one_branch(4.0, 120.0);
  p.voa_attenuation = 6.0;
  SimConfig c = quiet();
  c.laser_power = 3.0;
  const double one_way = 0.3 * 1.12 + 4.0 + 6.0 + 10 * std::log10(32.0);
  const double expect = std::pow(10.0, 0.3) * std::pow(10.0, -1.47) * std::pow(10.0, -2 * one_way / 10);
  EXPECT_NEAR(reflection_amplitude(p, c, 0) / expect, 1.0, 1e-12);
}

TEST(Reflection, EmptyPlanGivesZeroField) {
  FiberPlan p;
  const auto f = reflection_profile(p, quiet());
  EXPECT_TRUE(f.events.empty());
  for (double v : f.samples) EXPECT_EQ(v, 0.0);
}

TEST(Reflection, PeaksSumLinearly) {
  FiberPlan both = one_branch(2.0);
  both.branches.push_back({101.0, kOpenConnectorReflectance, 4.0});
  FiberPlan a = both, b = both;
  a.branches = {both.branches[0]};
  b.branches = {both.branches[1]};
  // identical trace length for all three
  a.idle_port_length = b.idle_port_length = both.idle_port_length = 101.0;
  const auto c = quiet();
  const auto fa = reflection_profile(a, c), fb = reflection_profile(b, c), fab = reflection_profile(both, c);
  ASSERT_EQ(fa.samples.size(), fab.samples.size());
  const double peak = *std::max_element(fab.samples.begin(), fab.samples.end());
  for (std::size_t i = 0; i < fab.samples.size(); ++i)
    EXPECT_NEAR(fab.samples[i], fa.samples[i] + fb.samples[i], 1e-12 * peak);
  EXPECT_EQ(fab.events.size(), 2u);
}

TEST(Reflection, PeakIntegralEqualsAmplitude) {
  for (double len : {100.0, 100.25, 100.37}) {
    const FiberPlan p = one_branch(1.0, len);
    const auto f = reflection_profile(p, quiet());
    const double sum = std::accumulate(f.samples.begin(), f.samples.end(), 0.0);
    EXPECT_NEAR(sum / f.events[0].amplitude, 1.0, 1e-12);
  }
}

TEST(Reflection, OnGridPeakReproducesKernel) {
  const FiberPlan p = one_branch(1.0, 100.0);
  const auto c = quiet();
  const auto f = reflection_profile(p, c);
  const auto k = pulse_kernel(c);
  const auto half = k.size() / 2;
  for (std::size_t i = 0; i < k.size(); ++i)
    EXPECT_NEAR(f.samples[2200 - half + i], f.events[0].amplitude * k[i], 1e-12 * f.events[0].amplitude);
}

TEST(Noise, SigmaScalesWithAveraging) {
  SimConfig a, b;
  a.averaging_time = 2.0;
  b.averaging_time = 0.002;
  EXPECT_NEAR(noise_sigma(b) / noise_sigma(a), std::sqrt(1000.0), 1e-9);
  SimConfig c;
  c.base_noise_sigma = 1.0;
  c.averaging_time = 0.002;
  const std::vector<double> mean(1'000'000, 1000.0);
  const auto noisy = add_noise(mean, c, 5);
  double sq = 0;
  for (double v : noisy) sq += (v - 1000.0) * (v - 1000.0);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(noisy.size())) / noise_sigma(c), 1.0, 0.02);
}

TEST(Noise, ZeroSigmaIsIdentityAndClipping) {
  const std::vector<double> v{0.0, 1e-9, 3.0};
  EXPECT_EQ(add_noise(v, quiet(), 1), v);
  SimConfig c;
  c.base_noise_sigma = 10.0;
  for (double x : add_noise(std::vector<double>(1000, 0.0), c, 2)) EXPECT_GE(x, 0.0);
  EXPECT_EQ(add_noise(v, c, 9), add_noise(v, c, 9));
}

TEST(Synthesize, DeterministicAndSorted) {
  FiberPlan p = one_branch(5.0, 180.0);
  p.branches.push_back({60.0, kReflectorReflectance, 1.0});
  SimConfig c;
  c.rng_seed = 17;
  const auto t1 = synthesize_trace(p, c), t2 = synthesize_trace(p, c);
  EXPECT_EQ(t1.samples, t2.samples);
  EXPECT_EQ(t1.plan_fingerprint, t2.plan_fingerprint);
  ASSERT_EQ(t1.events.size(), 2u);
  EXPECT_LT(t1.events[0].position, t1.events[1].position);
  for (double v : t1.samples) EXPECT_GE(v, 0.0);
}

TEST(Synthesize, SeedOnlyChangesNoise) {
  const FiberPlan p = one_branch();
  SimConfig c = quiet();
  c.rng_seed = 1;
  const auto a = synthesize_trace(p, c);
  c.rng_seed = 2;
  const auto b = synthesize_trace(p, c);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.plan_fingerprint, b.plan_fingerprint);
}

TEST(Synthesize, GlobalMaxNearReflector) {
  FiberPlan p;
  p.feeder_length = p.splitter_position = 50.0;
  p.branches = {{30.0, kOpenConnectorReflectance, 0.0}};
  const auto c = quiet();
  const auto t = synthesize_trace(p, c);
  const auto it = std::max_element(t.samples.begin(), t.samples.end());
  const double z = static_cast<double>(it - t.samples.begin()) * c.sample_spacing;
  EXPECT_LE(std::abs(z - 80.0), static_cast<double>(kernel_half_width(c)) * c.sample_spacing);
}

TEST(DisplayDb, Floor) {
  const auto d = to_display_db(std::vector<double>{1.0, std::pow(10.0, -1.5), 0.0});
  EXPECT_NEAR(d[0], 0.0, 1e-12);
  EXPECT_NEAR(d[1], -15.0, 1e-12);
  EXPECT_NEAR(d[2], -120.0, 1e-12);
}

TEST(Validation, PlanAndConfig) {
  FiberPlan p = one_branch();
  p.branches.push_back(p.branches[0]);
  EXPECT_THROW(p.validate(), ValidationError);
  FiberPlan q;
  EXPECT_THROW(q.validate(), ValidationError);
  FiberPlan r = one_branch();
  r.splitter_ratio = 1;
  EXPECT_THROW(r.validate(), ValidationError);
  BranchSpec b{10.0, 1.0, 0.0};
  EXPECT_THROW(b.validate(), ValidationError);
  SimConfig c;
  c.averaging_time = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ConfigFile, PlanRoundTrip) {
  FiberPlan p = one_branch(3.5, 77.25);
  p.branches.push_back({140.0, kReflectorReflectance, 9.0});
  p.voa_attenuation = 4.0;
  SimConfig c;
  c.averaging_time = 0.05;
  c.rng_seed = 1234;
  KeyValueConfig kv;
  write_config(kv, p);
  write_config(kv, c, "sim.");
  const auto back = KeyValueConfig::parse(kv.serialize());
  const auto p2 = read_plan(back);
  const auto c2 = read_sim_config(back, "sim.");
  EXPECT_EQ(fingerprint(p, c), fingerprint(p2, c2));
}

TEST(Export, CsvHeaderAndEvents) {
  FiberPlan p = one_branch();
  const auto t = synthesize_trace(p, quiet());
  const auto csv = trace_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "position_m,power_linear");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), t.size() + 1);
  const auto j = events_json(t);
  EXPECT_EQ(j["events"].size(), 1u);
  EXPECT_DOUBLE_EQ(j["events"][0]["position_m"].get<double>(), 1100.0);
}
