#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ponbranch/eval.hpp"
#include "ponbranch/report.hpp"

namespace ponbranch::cli {

namespace fs = std::filesystem;

inline constexpr std::uint64_t kDefaultRootSeed = 2022;
inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kReportFile = "eval_report.json";
inline constexpr const char* kSweepFile = "sweep.csv";
inline constexpr const char* kMethodsFile = "methods.csv";

struct Options {
  std::string subcommand;
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::string model;  // train: attn-gru, compare: all
  std::string data;
  std::vector<std::string> checkpoints;
  std::string voa_range = "0:12:2";
  std::string format;
  int verbosity = 0;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + p.string());
}

inline std::string file_hash(const fs::path& p) { return Hasher::to_hex(hash_bytes(read_file(p))); }

inline KeyValueConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return KeyValueConfig::parse(read_file(path));
}

/// Records resolved configuration plus input and output file hashes.
class Manifest {
 public:
  Manifest(std::string subcommand, std::uint64_t root_seed) {
    j_["subcommand"] = std::move(subcommand);
    j_["root_seed"] = root_seed;
    j_["config"] = nlohmann::json::object();
    j_["inputs"] = nlohmann::json::object();
    j_["outputs"] = nlohmann::json::object();
  }
  void config(const KeyValueConfig& kv, const std::string& section = "") {
    auto& dst = section.empty() ? j_["config"] : j_["config"][section];
    for (const auto& [k, v] : kv.entries()) dst[k] = v;
  }
  void set(const std::string& key, nlohmann::json v) { j_[key] = std::move(v); }
  void input(const fs::path& p) { j_["inputs"][p.generic_string()] = file_hash(p); }
  void output(const fs::path& dir, const std::string& name) { j_["outputs"][name] = file_hash(dir / name); }
  void write(const fs::path& dir) const {
    write_file(dir / ("manifest." + j_["subcommand"].get<std::string>() + ".json"), j_.dump(2) + "\n");
  }

 private:
  nlohmann::json j_;
};

inline std::uint64_t root_seed(const Options& o, const KeyValueConfig& kv) {
  if (o.seed) return *o.seed;
  return kv.get_uint("seed", kDefaultRootSeed);
}

inline models::ModelDims read_dims(const KeyValueConfig& kv) {
  models::ModelDims d;
  d.hidden = kv.get_uint("hidden", d.hidden);
  d.head = kv.get_uint("head", d.head);
  d.mlp_hidden = kv.get_uint("mlp_hidden", d.mlp_hidden);
  d.conv1 = kv.get_uint("conv1", d.conv1);
  d.conv2 = kv.get_uint("conv2", d.conv2);
  d.kernel = kv.get_uint("kernel", d.kernel);
  if (d.hidden < 1 || d.head < 1 || d.mlp_hidden < 1 || d.conv1 < 1 || d.conv2 < 1 || d.kernel < 1)
    throw ValidationError("model dimensions must be >= 1");
  return d;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

// ---------------------------------------------------------------------------
// subcommands

inline void cmd_simulate(const Options& o, std::ostream& log) {
  const auto kv = load_config(o.config);
  const auto seed = root_seed(o, kv);
  const auto plan = sim::read_plan(kv);
  auto cfg = sim::read_sim_config(kv, "sim.");
  cfg.rng_seed = sub_seed(seed, "simulate");
  const auto trace = sim::synthesize_trace(plan, cfg);
  const fs::path out = o.out;
  write_file(out / "trace.csv", sim::trace_csv(trace));
  write_file(out / "events.json", sim::events_json(trace).dump(2) + "\n");
  KeyValueConfig resolved;
  sim::write_config(resolved, plan);
  sim::write_config(resolved, cfg, "sim.");
  Manifest m("simulate", seed);
  m.config(resolved);
  if (!o.config.empty()) m.input(o.config);
  m.output(out, "trace.csv");
  m.output(out, "events.json");
  m.write(out);
  log << "simulated " << trace.size() << " samples, " << trace.events.size() << " reflections\n";
}

inline void cmd_build_dataset(const Options& o, std::ostream& log) {
  const auto kv = load_config(o.config);
  const auto seed = root_seed(o, kv);
  auto spec = data::read_dataset_spec(kv);
  spec.rng_seed = sub_seed(seed, "dataset");
  spec.validate();
  const auto split = data::build_dataset(spec);
  const fs::path out = o.out;
  data::save_split(out, split);
  KeyValueConfig resolved;
  data::write_config(resolved, spec);
  write_file(out / "dataset.cfg", resolved.serialize());
  Manifest m("build-dataset", seed);
  m.config(resolved);
  if (!o.config.empty()) m.input(o.config);
  for (const char* f : {"train.jsonl", "validation.jsonl", "test.jsonl", "dataset.json", "class_balance.csv", "dataset.cfg"})
    m.output(out, f);
  m.set("dataset_hash", data::split_hash(split));
  m.write(out);
  log << "dataset: train " << split.train.size() << ", validation " << split.validation.size() << ", test "
      << split.test.size() << "\n";
}

struct TrainedModel {
  models::Model model;
  train::TrainHistory history;
};

inline TrainedModel train_one(models::ModelKind kind, const data::SplitSet& split, const KeyValueConfig& kv,
                              std::uint64_t seed, int verbosity, std::ostream& log) {
  auto cfg = train::read_train_config(kv);
  cfg.rng_seed = sub_seed(seed, "train/" + models::kind_name(kind));
  models::Model model(kind, read_dims(kv));
  auto history = train::train(model, split.train, split.validation, cfg, split.sample_spacing,
                              [&](const train::EpochRecord& r) {
                                if (verbosity > 0)
                                  log << models::kind_name(kind) << " epoch " << r.epoch << " train " << format_fixed(r.train_loss, 4)
                                      << " val " << format_fixed(r.val_loss, 4) << " acc " << format_fixed(r.val_acc, 4) << "\n";
                              });
  return {std::move(model), std::move(history)};
}

inline nlohmann::json checkpoint_extra(const data::SplitSet& split, const train::TrainHistory& h) {
  return {{"sample_spacing", split.sample_spacing}, {"dataset_hash", data::split_hash(split)},
          {"best_epoch", h.best_epoch}, {"epochs_run", h.epochs.size()}};
}

inline void cmd_train(const Options& o, std::ostream& log) {
  require(!o.data.empty(), "train: --data <dataset dir> is required");
  const auto kv = load_config(o.config);
  const auto seed = root_seed(o, kv);
  const auto kind = models::parse_kind(o.model.empty() ? "attn-gru" : o.model);
  const auto split = data::load_split(o.data);
  auto trained = train_one(kind, split, kv, seed, o.verbosity, log);
  const fs::path out = o.out;
  train::save_checkpoint(out / kCheckpointFile, trained.model, checkpoint_extra(split, trained.history));
  write_file(out / "history.csv", trained.history.csv());
  KeyValueConfig resolved;
  auto cfg = train::read_train_config(kv);
  cfg.rng_seed = sub_seed(seed, "train/" + models::kind_name(kind));
  train::write_config(resolved, cfg);
  Manifest m("train", seed);
  m.config(resolved);
  m.set("model", trained.model.header());
  m.set("dataset_hash", data::split_hash(split));
  if (!o.config.empty()) m.input(o.config);
  m.output(out, kCheckpointFile);
  m.output(out, "history.csv");
  m.write(out);
  log << models::kind_name(kind) << ": best epoch " << trained.history.best_epoch << " of "
      << trained.history.epochs.size() << "\n";
}

inline train::Checkpoint load_for_use(const std::string& path) {
  require(!path.empty(), "--checkpoint is required");
  return train::load_checkpoint(path);
}

inline double checkpoint_spacing(const train::Checkpoint& c) {
  return c.header.value("sample_spacing", 0.5);
}

inline void cmd_eval(const Options& o, std::ostream& log) {
  require(!o.data.empty(), "eval: --data <dataset dir> is required");
  const auto ckpt = load_for_use(o.checkpoints.empty() ? "" : o.checkpoints.front());
  const auto kv = load_config(o.config);
  const auto seed = root_seed(o, kv);
  const auto split = data::load_split(o.data);
  const double spacing = checkpoint_spacing(ckpt);
  if (std::abs(spacing - split.sample_spacing) > 1e-12)
    throw ValidationError("sample spacing mismatch between checkpoint and dataset");
  const auto population = eval::parse_population(kv.get_string("population", "correctly-classified"));
  const auto report = eval::evaluate_model(ckpt.model, split.test, spacing, population);
  const fs::path out = o.out;
  Manifest m("eval", seed);
  m.config(kv);
  m.input(o.checkpoints.front());
  m.set("dataset_hash", data::split_hash(split));
  if (o.format == "csv") {
    std::string csv = "true_class,pred_c0,pred_c1,pred_c2\n";
    for (int t = 0; t < 3; ++t) {
      csv += "C" + std::to_string(t);
      for (auto n : report.confusion.counts[static_cast<std::size_t>(t)]) csv += "," + std::to_string(n);
      csv += "\n";
    }
    write_file(out / "confusion.csv", csv);
    m.output(out, "confusion.csv");
  }
  write_file(out / kReportFile, eval::report_json(report).dump(2) + "\n");
  m.output(out, kReportFile);

  if (kv.has("alternate")) {
    // alternate = path of a dataset config describing the unseen plant
    const auto alt_kv = load_config(kv.get_string("alternate", ""));
    const auto alt = data::read_dataset_spec(alt_kv);
    data::DatasetSpec training;
    if (fs::exists(fs::path(o.data) / "dataset.cfg"))
      training = data::read_dataset_spec(load_config((fs::path(o.data) / "dataset.cfg").string()));
    const auto threshold = models::tune_threshold(split.train);
    const auto per_class = static_cast<int>(kv.get_int("generalization_per_class", 300));
    const auto g = eval::generalization_eval(ckpt.model, spacing, training, alt, threshold, per_class,
                                             sub_seed(seed, "generalization"));
    for (const auto& w : g.warnings) log << "warning: " << w << "\n";
    auto j = eval::report_json(g.model);
    j["warnings"] = g.warnings;
    j["threshold_theta"] = threshold.theta;
    write_file(out / "generalization_report.json", j.dump(2) + "\n");
    m.output(out, "generalization_report.json");
  }
  m.write(out);
  log << "accuracy " << format_fixed(100 * report.accuracy(), 2) << "%, rmse "
      << (std::isfinite(report.rmse_m()) ? format_fixed(report.rmse_m(), 3) : std::string("-")) << " m\n";
}

inline void cmd_sweep(const Options& o, std::ostream& log) {
  const auto ckpt = load_for_use(o.checkpoints.empty() ? "" : o.checkpoints.front());
  const auto kv = load_config(o.config);
  const auto seed = root_seed(o, kv);
  const auto base = data::read_dataset_spec(kv);
  const auto values = eval::parse_voa_range(o.voa_range);
  const auto per_class = static_cast<int>(kv.get_int("sweep_per_class", 200));
  const auto pts = eval::voa_sweep(ckpt.model, checkpoint_spacing(ckpt), base, values, per_class, sub_seed(seed, "sweep"));
  const fs::path out = o.out;
  Manifest m("sweep", seed);
  m.config(kv);
  m.set("voa_values", values);
  m.input(o.checkpoints.front());
  write_file(out / kSweepFile, eval::sweep_csv(pts));
  m.output(out, kSweepFile);
  if (o.format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : pts)
      j.push_back({{"voa_db", p.voa_db}, {"accuracy", p.accuracy}, {"rmse_m", eval::number_or_null(p.rmse_m)},
                   {"windows", p.windows}});
    write_file(out / "sweep.json", j.dump(2) + "\n");
    m.output(out, "sweep.json");
  }
  m.write(out);
  for (const auto& p : pts) log << "voa " << format_double(p.voa_db) << " dB: " << format_fixed(100 * p.accuracy, 2) << "%\n";
}

inline std::vector<models::ModelKind> parse_kind_list(const std::string& s) {
  if (s == "all") return {models::kAllKinds.begin(), models::kAllKinds.end()};
  std::vector<models::ModelKind> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(models::parse_kind(trim(item)));
  require(!out.empty(), "no model kinds given");
  return out;
}

inline void cmd_compare(const Options& o, std::ostream& log) {
  require(!o.data.empty(), "compare: --data <dataset dir> is required");
  const auto kv = load_config(o.config);
  const auto seed = root_seed(o, kv);
  const auto split = data::load_split(o.data);
  const fs::path out = o.out;
  Manifest m("compare", seed);
  m.config(kv);
  m.set("dataset_hash", data::split_hash(split));
  std::vector<models::Model> owned;
  if (!o.checkpoints.empty()) {
    for (const auto& p : o.checkpoints) {
      if (!fs::exists(p)) throw ValidationError("compare: missing checkpoint " + p);
      auto c = train::load_checkpoint(p);
      if (std::abs(checkpoint_spacing(c) - split.sample_spacing) > 1e-12)
        throw ValidationError("sample spacing mismatch for checkpoint " + p);
      owned.push_back(std::move(c.model));
      m.input(p);
    }
  } else {
    for (auto kind : parse_kind_list(o.model.empty() ? "all" : o.model)) {
      auto t = train_one(kind, split, kv, seed, o.verbosity, log);
      const std::string name = models::kind_name(kind) + ".ckpt";
      train::save_checkpoint(out / name, t.model, checkpoint_extra(split, t.history));
      m.output(out, name);
      owned.push_back(std::move(t.model));
    }
  }
  std::vector<const models::Model*> ptrs;
  for (const auto& mdl : owned) ptrs.push_back(&mdl);
  const auto cmp = eval::compare_methods(ptrs, split.train, split.test, split.sample_spacing);
  write_file(out / kMethodsFile, eval::methods_csv(cmp.rows));
  m.output(out, kMethodsFile);
  m.set("threshold_theta", cmp.threshold.theta);
  if (o.format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : cmp.rows)
      j.push_back({{"name", r.name}, {"accuracy", r.accuracy}, {"rmse_m", eval::number_or_null(r.rmse_m)}});
    write_file(out / "methods.json", j.dump(2) + "\n");
    m.output(out, "methods.json");
  }
  m.write(out);
  log << report::methods_table(cmp.rows);
}

inline void cmd_report(const Options& o, std::ostream& log) {
  const fs::path dir = o.data.empty() ? fs::path(o.out) : fs::path(o.data);
  std::vector<std::string> missing;
  for (const char* f : {kReportFile, kSweepFile, kMethodsFile})
    if (!fs::exists(dir / f)) missing.push_back(f);
  if (!missing.empty()) {
    std::string msg = "missing artifacts in " + dir.string() + ":";
    for (const auto& f : missing) msg += " " + f;
    throw ValidationError(msg);
  }
  const auto rep = eval::report_from_json(nlohmann::json::parse(read_file(dir / kReportFile)));
  const auto pts = eval::parse_sweep_csv(read_file(dir / kSweepFile));
  auto rows = eval::parse_methods_csv(read_file(dir / kMethodsFile));
  eval::rank_methods(rows);
  const fs::path out = o.out;
  const bool svg = o.format.empty() || o.format == "svg";
  const bool text = o.format.empty() || o.format == "csv" || o.format == "json";
  Manifest m("report", root_seed(o, {}));
  for (const char* f : {kReportFile, kSweepFile, kMethodsFile}) m.input(dir / f);
  if (svg) {
    write_file(out / "confusion.svg", report::confusion_svg(rep.confusion));
    m.output(out, "confusion.svg");
    if (rep.localization) {
      write_file(out / "histogram.svg", report::histogram_svg(*rep.localization));
      m.output(out, "histogram.svg");
    }
    write_file(out / "sweep.svg", report::sweep_svg(pts));
    m.output(out, "sweep.svg");
  }
  const auto table = report::methods_table(rows);
  if (text) {
    write_file(out / "table.txt", table);
    m.output(out, "table.txt");
  }
  m.write(out);
  log << table;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  Options o;
  CLI::App app{"OTDR branch identification toolkit"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key-value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "output directory (created if absent)");
    sub->add_option("--seed", o.seed, "root seed");
    sub->add_flag("-v,--verbose", o.verbosity, "progress output");
  };
  struct Cmd {
    const char* name;
    const char* help;
    void (*fn)(const Options&, std::ostream&);
  };
  const Cmd cmds[] = {
      {"simulate", "synthesize one OTDR trace from a plant config", cmd_simulate},
      {"build-dataset", "simulate plants and write train/validation/test windows", cmd_build_dataset},
      {"train", "train one model on a dataset", cmd_train},
      {"eval", "evaluate a checkpoint on the test split", cmd_eval},
      {"sweep", "accuracy over VOA attenuation", cmd_sweep},
      {"compare", "compare model kinds and the threshold detector", cmd_compare},
      {"report", "render SVG plots and the comparison table", cmd_report},
  };
  std::map<std::string, void (*)(const Options&, std::ostream&)> dispatch;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    dispatch[c.name] = c.fn;
    const std::string name = c.name;
    if (name == "train" || name == "compare")
      sub->add_option("--model", o.model, "attn-gru, gru, lstm, cnn, mlp (compare: comma list or all)");
    if (name == "train" || name == "eval" || name == "compare" || name == "report")
      sub->add_option("--data", o.data, name == "report" ? "run directory holding eval artifacts" : "dataset directory");
    if (name == "eval" || name == "sweep" || name == "compare")
      sub->add_option("--checkpoint", o.checkpoints, "checkpoint file (compare: repeatable)");
    if (name == "sweep") sub->add_option("--voa-range", o.voa_range, "lo:hi:step or comma list (dB)");
    if (name == "eval" || name == "sweep" || name == "compare" || name == "report")
      sub->add_option("--format", o.format, "csv, json or svg")->check(CLI::IsMember({"csv", "json", "svg"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, log, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  for (auto* sub : app.get_subcommands()) o.subcommand = sub->get_name();

  try {
    fs::create_directories(o.out);
    dispatch.at(o.subcommand)(o, log);
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ponbranch::cli
