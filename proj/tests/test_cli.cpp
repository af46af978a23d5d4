#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "ponbranch/cli.hpp"

using namespace ponbranch;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "ponbranch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(PONBRANCH_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ponbranch_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& s) { cli::write_file(p, s); }

const char* kTinyConfig =
    "target_per_class = 40\n"
    "max_epochs = 2\n"
    "batch_size = 16\n"
    "hidden = 4\n"
    "head = 3\n"
    "mlp_hidden = 8\n"
    "conv1 = 3\n"
    "conv2 = 4\n"
    "kernel = 3\n"
    "sweep_per_class = 5\n";

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary(""), 1);
  EXPECT_EQ(run_binary("frobnicate"), 1);
  EXPECT_EQ(run_binary("train --bogus-flag"), 1);
  EXPECT_EQ(run_binary("train --out /tmp"), 1);
  EXPECT_EQ(run_binary("sweep --checkpoint /nonexistent.ckpt --out /tmp"), 1);
}

TEST(Cli, ParseErrorPrintsUsage) {
  const auto r = run({"simulate", "--no-such-option"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
}

TEST(Cli, SimulateWritesTraceAndManifest) {
  const auto dir = scratch("sim");
  write(dir / "plant.cfg",
        "branch.0.length = 100\nbranch.0.static_attenuation = 2\nbranch.1.length = 101.5\n"
        "branch.1.static_attenuation = 5\n");
  const auto r = run({"simulate", "--config", (dir / "plant.cfg").string(), "--out", (dir / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "a" / "trace.csv"));
  const auto events = nlohmann::json::parse(cli::read_file(dir / "a" / "events.json"));
  EXPECT_EQ(events.at("events").size(), 2u);
  const auto manifest = nlohmann::json::parse(cli::read_file(dir / "a" / "manifest.simulate.json"));
  EXPECT_EQ(manifest.at("root_seed"), 2022);
  EXPECT_TRUE(manifest.at("outputs").contains("trace.csv"));
  ASSERT_EQ(run({"simulate", "--config", (dir / "plant.cfg").string(), "--out", (dir / "b").string()}).code, 0);
  EXPECT_EQ(cli::read_file(dir / "a" / "trace.csv"), cli::read_file(dir / "b" / "trace.csv"));
  ASSERT_EQ(run({"simulate", "--config", (dir / "plant.cfg").string(), "--seed", "5", "--out", (dir / "c").string()}).code, 0);
  EXPECT_NE(cli::read_file(dir / "a" / "trace.csv"), cli::read_file(dir / "c" / "trace.csv"));
}

TEST(Cli, InvalidConfigIsValidationError) {
  const auto dir = scratch("bad");
  write(dir / "plant.cfg", "branch.0.length = -3\n");
  const auto r = run({"simulate", "--config", (dir / "plant.cfg").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, ReportListsMissingArtifacts) {
  const auto dir = scratch("report");
  write(dir / "sweep.csv", "voa_db,accuracy,rmse_m,windows\n0,1,0.5,3\n");
  const auto r = run({"report", "--data", dir.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("eval_report.json"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("methods.csv"), std::string::npos);
  EXPECT_EQ(r.err.find("sweep.csv"), std::string::npos);
}

TEST(Cli, TinyPipelineEndToEnd) {
  const auto dir = scratch("pipe");
  const auto cfg = (dir / "run.cfg").string();
  write(dir / "run.cfg", kTinyConfig);
  const auto data = (dir / "data").string();
  auto ok = [](const Result& r) {
    EXPECT_EQ(r.code, 0) << r.err;
    return r.code == 0;
  };
  ASSERT_TRUE(ok(run({"build-dataset", "--config", cfg, "--out", data})));
  for (const char* f : {"train.jsonl", "validation.jsonl", "test.jsonl", "dataset.json", "class_balance.csv",
                        "dataset.cfg", "manifest.build-dataset.json"})
    EXPECT_TRUE(fs::exists(fs::path(data) / f)) << f;
  const auto run_dir = (dir / "run").string();
  ASSERT_TRUE(ok(run({"train", "--config", cfg, "--data", data, "--model", "mlp", "--out", run_dir})));
  const auto ckpt = (fs::path(run_dir) / "model.ckpt").string();
  const auto header = train::load_checkpoint(ckpt).header;
  EXPECT_EQ(header.at("kind"), "mlp");
  EXPECT_EQ(header.at("sample_spacing"), 0.5);
  ASSERT_TRUE(ok(run({"eval", "--config", cfg, "--data", data, "--checkpoint", ckpt, "--out", run_dir, "--format", "csv"})));
  EXPECT_TRUE(fs::exists(fs::path(run_dir) / "confusion.csv"));
  ASSERT_TRUE(ok(run({"sweep", "--config", cfg, "--checkpoint", ckpt, "--voa-range", "0,6,6", "--out", run_dir})));
  const auto pts = eval::parse_sweep_csv(cli::read_file(fs::path(run_dir) / "sweep.csv"));
  EXPECT_EQ(pts.size(), 2u);
  ASSERT_TRUE(ok(run({"compare", "--config", cfg, "--data", data, "--checkpoint", ckpt, "--out", run_dir})));
  const auto rows = eval::parse_methods_csv(cli::read_file(fs::path(run_dir) / "methods.csv"));
  EXPECT_EQ(rows.size(), 2u);
  ASSERT_TRUE(ok(run({"report", "--data", run_dir, "--out", run_dir})));
  const auto svg = cli::read_file(fs::path(run_dir) / "confusion.svg");
  ASSERT_TRUE(ok(run({"report", "--data", run_dir, "--out", run_dir})));
  EXPECT_EQ(cli::read_file(fs::path(run_dir) / "confusion.svg"), svg);
  for (const char* f : {"sweep.svg", "table.txt", "manifest.report.json"})
    EXPECT_TRUE(fs::exists(fs::path(run_dir) / f)) << f;

  const auto other = (dir / "run2").string();
  ASSERT_TRUE(ok(run({"train", "--config", cfg, "--data", data, "--model", "mlp", "--out", other})));
  EXPECT_EQ(cli::read_file(fs::path(other) / "model.ckpt"), cli::read_file(ckpt));
}

TEST(Cli, EvalRejectsWrongSpacing) {
  const auto dir = scratch("spacing");
  write(dir / "run.cfg", std::string(kTinyConfig) + "sim.sample_spacing = 0.25\n");
  const auto data = (dir / "data").string();
  ASSERT_EQ(run({"build-dataset", "--config", (dir / "run.cfg").string(), "--out", data}).code, 0);
  models::Model m(models::ModelKind::Mlp);
  train::save_checkpoint(dir / "m.ckpt", m, {{"sample_spacing", 0.5}});
  const auto r = run({"eval", "--data", data, "--checkpoint", (dir / "m.ckpt").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("sample spacing mismatch"), std::string::npos) << r.err;
}
