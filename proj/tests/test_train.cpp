#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "ponbranch/train.hpp"

using namespace ponbranch;
using namespace ponbranch::train;

namespace {

nn::ParamStore scalar_store(double x) {
  nn::ParamStore s;
  s.add("x", {1}, nn::Init::Zeros).values[0] = x;
  return s;
}

std::vector<data::Window> toy_windows(int per_class, std::uint64_t seed, bool noiseless) {
  data::DatasetSpec spec;
  if (noiseless) spec.sim.base_noise_sigma = 0.0;
  return data::simulate_windows(spec, per_class, seed);
}

}  // namespace

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  for (auto opt : {Optimizer::AdaptiveMoments, Optimizer::SgdMomentum}) {
    auto s = scalar_store(0.75);
    s.zero_grad();
    TrainConfig cfg;
    cfg.optimizer = opt;
    OptimizerState st;
    for (int i = 0; i < 10; ++i) optimizer_step(s, st, cfg);
    EXPECT_EQ(s.get("x").values[0], 0.75);
  }
}

TEST(Optimizer, PlainSgdStepsByLearningRateTimesGradient) {
  auto s = scalar_store(1.0);
  s.get("x").grad = {0.5};
  TrainConfig cfg;
  cfg.optimizer = Optimizer::SgdMomentum;
  cfg.momentum = 0.0;
  cfg.learning_rate = 0.1;
  OptimizerState st;
  optimizer_step(s, st, cfg);
  EXPECT_DOUBLE_EQ(s.get("x").values[0], 1.0 - 0.1 * 0.5);
}

TEST(Optimizer, MomentumAccumulates) {
  auto s = scalar_store(0.0);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::SgdMomentum;
  cfg.momentum = 0.9;
  cfg.learning_rate = 1.0;
  OptimizerState st;
  s.get("x").grad = {1.0};
  optimizer_step(s, st, cfg);
  optimizer_step(s, st, cfg);
  EXPECT_DOUBLE_EQ(s.get("x").values[0], -(1.0 + 1.9));
}

TEST(Optimizer, AdamMinimizesQuadratic) {
  auto s = scalar_store(1.0);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  OptimizerState st;
  int steps = 0;
  while (std::abs(s.get("x").values[0]) >= 1e-3 && steps < 500) {
    s.get("x").grad = {2.0 * s.get("x").values[0]};
    optimizer_step(s, st, cfg);
    ++steps;
  }
  EXPECT_LT(std::abs(s.get("x").values[0]), 1e-3);
  EXPECT_LE(steps, 500);
}

TEST(Optimizer, GlobalNormClipping) {
  nn::ParamStore s;
  s.add("a", {2}, nn::Init::Zeros).grad = {30.0, 40.0};
  EXPECT_DOUBLE_EQ(global_grad_norm(s), 50.0);
  TrainConfig cfg;
  cfg.optimizer = Optimizer::SgdMomentum;
  cfg.momentum = 0.0;
  cfg.learning_rate = 1.0;
  cfg.clip_norm = 5.0;
  OptimizerState st;
  optimizer_step(s, st, cfg);
  EXPECT_NEAR(s.get("a").values[0], -3.0, 1e-12);
  EXPECT_NEAR(s.get("a").values[1], -4.0, 1e-12);
}

TEST(Optimizer, NanGradientNamesParameter) {
  nn::ParamStore s;
  s.add("ok", {1}, nn::Init::Zeros).grad = {1.0};
  s.add("head.W", {2}, nn::Init::Zeros).grad = {0.0, std::nan("")};
  TrainConfig cfg;
  OptimizerState st;
  try {
    optimizer_step(s, st, cfg);
    FAIL();
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.parameter, "head.W");
    EXPECT_NE(std::string(e.what()).find("head.W"), std::string::npos);
  }
  EXPECT_EQ(s.get("ok").values[0], 0.0);
}

TEST(EarlyStopping, PatienceOneStopsAtEpochThree) {
  EarlyStopping es(1);
  EXPECT_FALSE(es.update(1, 1.0));
  EXPECT_FALSE(es.update(2, 1.1));
  EXPECT_TRUE(es.update(3, 1.2));
  EXPECT_EQ(es.best_epoch(), 1);
}

TEST(EarlyStopping, ImprovementResetsCounter) {
  EarlyStopping es(2);
  EXPECT_FALSE(es.update(1, 1.0));
  EXPECT_FALSE(es.update(2, 1.5));
  EXPECT_FALSE(es.update(3, 0.9));
  EXPECT_FALSE(es.update(4, 0.9));
  EXPECT_FALSE(es.update(5, 1.0));
  EXPECT_TRUE(es.update(6, 1.0));
  EXPECT_EQ(es.best_epoch(), 3);
}

TEST(TrainConfig, RoundTripAndValidation) {
  TrainConfig c;
  c.learning_rate = 3e-4;
  c.batch_size = 32;
  c.optimizer = Optimizer::SgdMomentum;
  c.loss_weights = {1.0, 2.0};
  KeyValueConfig kv;
  write_config(kv, c);
  const auto back = read_train_config(KeyValueConfig::parse(kv.serialize()));
  EXPECT_EQ(back.learning_rate, c.learning_rate);
  EXPECT_EQ(back.batch_size, 32u);
  EXPECT_EQ(back.optimizer, Optimizer::SgdMomentum);
  EXPECT_EQ(back.loss_weights.w_loc, 2.0);
  EXPECT_THROW(read_train_config(KeyValueConfig::parse("learning_rate = 0\n")), ValidationError);
  EXPECT_THROW(read_train_config(KeyValueConfig::parse("batch_size = 0\n")), ValidationError);
  EXPECT_THROW(read_train_config(KeyValueConfig::parse("patience = 0\n")), ValidationError);
  EXPECT_THROW(read_train_config(KeyValueConfig::parse("optimizer = rmsprop\n")), ValidationError);
}

TEST(Train, DeterministicForFixedSeed) {
  const auto ws = toy_windows(30, 3, false);
  const std::span<const data::Window> all(ws);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  models::Model a(models::ModelKind::Mlp), b(models::ModelKind::Mlp);
  const auto ha = train::train(a, all.subspan(0, 60), all.subspan(60), cfg, 0.5);
  const auto hb = train::train(b, all.subspan(0, 60), all.subspan(60), cfg, 0.5);
  EXPECT_EQ(ha, hb);
  EXPECT_EQ(a.params().value_hash(), b.params().value_hash());
  cfg.rng_seed = 8;
  models::Model c(models::ModelKind::Mlp);
  train::train(c, all.subspan(0, 60), all.subspan(60), cfg, 0.5);
  EXPECT_NE(a.params().value_hash(), c.params().value_hash());
}

TEST(Train, RestoresBestEpoch) {
  const auto ws = toy_windows(30, 5, false);
  const std::span<const data::Window> all(ws);
  TrainConfig cfg;
  cfg.max_epochs = 6;
  cfg.learning_rate = 0.05;
  models::Model m(models::ModelKind::Mlp);
  const auto h = train::train(m, all.subspan(0, 60), all.subspan(60), cfg, 0.5);
  ASSERT_GE(h.best_epoch, 1);
  const auto ev = evaluate(m, all.subspan(60), cfg.loss_weights, 0.5);
  EXPECT_NEAR(ev.loss, h.epochs[static_cast<std::size_t>(h.best_epoch - 1)].val_loss, 1e-12);
  EXPECT_EQ(h.csv().substr(0, h.csv().find('\n')), "epoch,train_loss,val_loss,val_acc,val_rmse_m");
}

TEST(Train, DivergenceReportsEpochAndBatch) {
  auto ws = toy_windows(10, 1, false);
  TrainConfig cfg;
  cfg.learning_rate = 1e200;
  cfg.optimizer = Optimizer::SgdMomentum;
  cfg.clip_norm = 0;
  cfg.batch_size = 4;
  models::Model m(models::ModelKind::Cnn);
  try {
    train::train(m, ws, ws, cfg, 0.5);
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(Train, AttnGruOverfitsNoiselessToySet) {
  data::DatasetSpec spec;
  spec.sim.base_noise_sigma = 0.0;
  spec.attenuation = {1.0, 6.0};  // both reflections of a pair stay visible
  auto ws = data::simulate_windows(spec, 67, 11);
  ASSERT_GE(ws.size(), 200u);
  ws.resize(200);
  TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.patience = 50;
  cfg.batch_size = 16;
  models::Model m(models::ModelKind::AttnGru);
  double best = 0;
  train::train(m, ws, ws, cfg, 0.5, [&](const EpochRecord& r) { best = std::max(best, r.val_acc); });
  EXPECT_EQ(best, 1.0);
  EXPECT_EQ(evaluate(m, ws, cfg.loss_weights, 0.5).accuracy, 1.0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  models::Model m(models::ModelKind::AttnGru, gradcheck::reduced_dims());
  m.initialize(42);
  const auto bytes = checkpoint_bytes(m, {{"note", "x"}});
  const auto ck = parse_checkpoint(bytes, models::ModelKind::AttnGru);
  EXPECT_EQ(ck.model.params().value_hash(), m.params().value_hash());
  EXPECT_EQ(ck.model.dims(), m.dims());
  EXPECT_EQ(ck.header.at("note"), "x");
  EXPECT_EQ(checkpoint_bytes(ck.model, {{"note", "x"}}), bytes);
  const auto ws = toy_windows(2, 1, false);
  const auto a = m.infer(std::span<const double>(ws[0].values));
  const auto b = ck.model.infer(std::span<const double>(ws[0].values));
  EXPECT_EQ(a.class_logits, b.class_logits);
  EXPECT_EQ(a.positions, b.positions);
}

TEST(Checkpoint, KindMismatchRejected) {
  models::Model m(models::ModelKind::Mlp);
  m.initialize(1);
  const auto bytes = checkpoint_bytes(m);
  EXPECT_THROW(parse_checkpoint(bytes, models::ModelKind::AttnGru), ArchitectureMismatch);
  EXPECT_NO_THROW(parse_checkpoint(bytes));
}

TEST(Checkpoint, TamperedLayoutRejected) {
  models::Model m(models::ModelKind::Gru, gradcheck::reduced_dims());
  auto header = m.header();
  header["arch_hash"] = "0000000000000000";
  const auto bytes = nn::serialize_params(m.params(), header.dump());
  EXPECT_THROW(parse_checkpoint(bytes), ArchitectureMismatch);
}

TEST(Checkpoint, BadMagicRejected) {
  models::Model m(models::ModelKind::Mlp);
  auto bytes = checkpoint_bytes(m);
  bytes[1] = 'Z';
  EXPECT_THROW(parse_checkpoint(bytes), nn::CheckpointFormatError);
  EXPECT_THROW(parse_checkpoint("short"), nn::CheckpointFormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/model.ckpt"), ValidationError);
}
