#include <gtest/gtest.h>

#include <numeric>

#include "gradcheck.hpp"
#include "ponbranch/models.hpp"

using namespace ponbranch;
using namespace ponbranch::models;
using data::EventClass;

TEST(Model, AttnGruParameterCount) {
  Model m(ModelKind::AttnGru);
  EXPECT_EQ(m.params().parameter_count(), 19061u);
  EXPECT_EQ(m.header().at("parameter_count"), 19061);
}

TEST(Model, KindNamesRoundTrip) {
  for (auto k : kAllKinds) EXPECT_EQ(parse_kind(kind_name(k)), k);
  EXPECT_THROW(parse_kind("transformer"), ValidationError);
}

TEST(Model, ArchitectureHashDiffersAcrossKinds) {
  std::set<std::uint64_t> seen;
  for (auto k : kAllKinds) seen.insert(Model(k).params().architecture_hash());
  EXPECT_EQ(seen.size(), kAllKinds.size());
}

class ModelGradient : public ::testing::TestWithParam<ModelKind> {};

TEST_P(ModelGradient, FullLossMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = gradcheck::check_model(GetParam(), gradcheck::reduced_dims(), seed);
    ASSERT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel_error, 1e-4) << kind_name(GetParam()) << " seed " << seed << " worst " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, ModelGradient, ::testing::ValuesIn(kAllKinds), [](const auto& info) {
  auto n = kind_name(info.param);
  n.erase(std::remove(n.begin(), n.end(), '-'), n.end());
  return n;
});

namespace {

std::vector<data::Window> sample_windows(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return gradcheck::random_windows(rng, n);
}

}  // namespace

TEST(Model, OutputsAreWellFormed) {
  const auto ws = sample_windows(6, 4);
  std::vector<const data::Window*> ptrs;
  for (const auto& w : ws) ptrs.push_back(&w);
  for (auto k : kAllKinds) {
    Model m(k, gradcheck::reduced_dims());
    m.initialize(9);
    const auto out = m.infer(ptrs);
    ASSERT_EQ(out.size(), ws.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (double p : out[i].positions) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
      }
      if (k == ModelKind::AttnGru) {
        ASSERT_EQ(out[i].alphas.size(), data::kWindowLength);
        EXPECT_NEAR(std::accumulate(out[i].alphas.begin(), out[i].alphas.end(), 0.0), 1.0, 1e-12);
        for (double a : out[i].alphas) EXPECT_GE(a, 0.0);
      } else {
        EXPECT_TRUE(out[i].alphas.empty());
      }
      const auto single = m.infer(std::span<const double>(ws[i].values));
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(single.class_logits[c], out[i].class_logits[c], 1e-12);
    }
  }
}

TEST(Model, RejectsWrongWindowLength) {
  Model m(ModelKind::Mlp, gradcheck::reduced_dims());
  m.initialize(1);
  std::vector<double> w(49, 0.0);
  EXPECT_THROW(m.infer(std::span<const double>(w)), ValidationError);
}

TEST(Loss, C0WindowContributesOnlyCrossEntropy) {
  data::Window w;
  MultiTaskOutput out;
  out.positions = {0.9, 0.1};
  EXPECT_NEAR(multitask_loss(out, w, {}), std::log(3.0), 1e-12);
  out.class_logits = {2.0, 0.0, -1.0};
  const double lse = std::log(std::exp(2.0) + 1.0 + std::exp(-1.0));
  EXPECT_NEAR(multitask_loss(out, w, {}), lse - 2.0, 1e-12);
}

TEST(Loss, LocalizationOnlyForC2Offsets) {
  data::Window w;
  w.label = EventClass::C2;
  w.positions = {9.8, 24.5};
  MultiTaskOutput out;
  out.class_logits = {5, -3, 1};
  out.positions = {9.8 / 49 + 0.1, 24.5 / 49 + 0.1};
  EXPECT_NEAR(multitask_loss(out, w, {0.0, 1.0}), 0.01, 1e-12);
  EXPECT_NEAR(multitask_loss(out, w, {0.0, 2.5}), 0.025, 1e-12);
}

TEST(Loss, C1UsesFirstSlotOnly) {
  data::Window w;
  w.label = EventClass::C1;
  w.positions[0] = 24.5;
  MultiTaskOutput out;
  out.positions = {0.5 + 0.2, 0.0};
  EXPECT_NEAR(multitask_loss(out, w, {0.0, 1.0}), 0.04, 1e-12);
}

TEST(Loss, WeightsValidated) {
  data::Window w;
  EXPECT_THROW(multitask_loss(MultiTaskOutput{}, w, {0.0, 0.0}), ValidationError);
  EXPECT_THROW(multitask_loss(MultiTaskOutput{}, w, {-1.0, 1.0}), ValidationError);
}

TEST(Targets, InvalidWindowRejected) {
  data::Window w;
  w.label = EventClass::C1;
  const data::Window* p = &w;
  EXPECT_THROW(make_targets(std::span<const data::Window* const>(&p, 1)), ValidationError);
}

namespace {

std::array<double, data::kWindowLength> with_peaks(std::initializer_list<std::pair<std::size_t, double>> peaks) {
  std::array<double, data::kWindowLength> w{};
  for (auto [i, v] : peaks) w[i] = v;
  return w;
}

}  // namespace

TEST(Threshold, SinglePeak) {
  const auto w = with_peaks({{10, 1.0}});
  const auto d = threshold_detect(w, {0.5, 2});
  EXPECT_EQ(d.label, EventClass::C1);
  EXPECT_DOUBLE_EQ(d.positions[0], 10.0 / 49.0);
}

TEST(Threshold, TwoPeaksAndBelowThreshold) {
  const auto w = with_peaks({{10, 1.0}, {30, 0.7}, {40, 0.3}});
  const auto d = threshold_detect(w, {0.5, 2});
  EXPECT_EQ(d.label, EventClass::C2);
  EXPECT_DOUBLE_EQ(d.positions[0], 10.0 / 49.0);
  EXPECT_DOUBLE_EQ(d.positions[1], 30.0 / 49.0);
  EXPECT_EQ(threshold_detect(w, {0.8, 2}).label, EventClass::C1);
  EXPECT_EQ(threshold_detect(w, {0.95, 2}).label, EventClass::C1);
  EXPECT_EQ(threshold_detect(with_peaks({}), {0.5, 2}).label, EventClass::C0);
}

TEST(Threshold, EdgesAndPlateaus) {
  EXPECT_EQ(threshold_detect(with_peaks({{0, 1.0}}), {0.5, 2}).label, EventClass::C0);
  EXPECT_EQ(threshold_detect(with_peaks({{49, 1.0}}), {0.5, 2}).label, EventClass::C0);
  const auto plateau = with_peaks({{20, 0.9}, {21, 0.9}, {22, 0.9}});
  const auto d = threshold_detect(plateau, {0.5, 2});
  EXPECT_EQ(d.label, EventClass::C1);
  EXPECT_DOUBLE_EQ(d.positions[0], 20.0 / 49.0);
}

TEST(Threshold, CloseMaximaMerge) {
  auto w = with_peaks({{20, 0.8}, {22, 0.9}});
  w[21] = 0.4;
  EXPECT_EQ(threshold_detect(w, {0.5, 2}).label, EventClass::C2);
  const auto merged = threshold_detect(w, {0.5, 3});
  EXPECT_EQ(merged.label, EventClass::C1);
  EXPECT_DOUBLE_EQ(merged.positions[0], 22.0 / 49.0);
}

TEST(Threshold, MoreThanTwoKeepsHighest) {
  const auto w = with_peaks({{5, 0.6}, {15, 0.9}, {25, 0.7}, {35, 1.0}});
  const auto d = threshold_detect(w, {0.5, 2});
  EXPECT_EQ(d.label, EventClass::C2);
  EXPECT_DOUBLE_EQ(d.positions[0], 15.0 / 49.0);
  EXPECT_DOUBLE_EQ(d.positions[1], 35.0 / 49.0);
}

TEST(Threshold, ConfigValidation) {
  const auto w = with_peaks({});
  EXPECT_THROW(threshold_detect(w, {0.0, 2}), ValidationError);
  EXPECT_THROW(threshold_detect(w, {1.0, 2}), ValidationError);
  EXPECT_THROW(threshold_detect(w, {0.5, 0}), ValidationError);
}

TEST(Threshold, GridAndTuning) {
  const auto g = threshold_grid();
  EXPECT_DOUBLE_EQ(g.front(), 0.05);
  EXPECT_DOUBLE_EQ(g.back(), 0.95);
  std::vector<data::Window> ws(2);
  ws[0].values = with_peaks({{10, 1.0}, {30, 0.6}});
  ws[0].label = EventClass::C1;
  ws[0].positions[0] = 10;
  ws[1].values = with_peaks({{10, 1.0}, {30, 0.8}});
  ws[1].label = EventClass::C2;
  ws[1].positions = {10.0, 30.0};
  const auto cfg = tune_threshold(ws);
  EXPECT_DOUBLE_EQ(cfg.theta, 0.6);
  EXPECT_DOUBLE_EQ(threshold_accuracy(ws, cfg), 1.0);
  EXPECT_THROW(tune_threshold(std::span<const data::Window>{}), ValidationError);
}
