#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ponbranch/metrics.hpp"
#include "ponbranch/train.hpp"

namespace ponbranch::eval {

using models::Model;
using models::ThresholdConfig;

inline std::vector<Detection> predict(const Model& model, std::span<const Window> ws, std::size_t batch_size = 256) {
  std::vector<Detection> out;
  out.reserve(ws.size());
  std::vector<const Window*> batch;
  for (std::size_t start = 0; start < ws.size(); start += batch_size) {
    batch.clear();
    for (std::size_t i = start; i < std::min(ws.size(), start + batch_size); ++i) batch.push_back(&ws[i]);
    for (const auto& o : model.infer(batch)) out.push_back(models::to_detection(o));
  }
  return out;
}

inline std::vector<Detection> predict(const ThresholdConfig& cfg, std::span<const Window> ws) {
  std::vector<Detection> out;
  out.reserve(ws.size());
  for (const auto& w : ws) out.push_back(models::threshold_detect(w.values, cfg));
  return out;
}

struct MethodRow {
  std::string name;
  double accuracy = 0;
  double rmse_m = std::numeric_limits<double>::quiet_NaN();
  bool operator==(const MethodRow& o) const {
    return name == o.name && accuracy == o.accuracy &&
           (rmse_m == o.rmse_m || (std::isnan(rmse_m) && std::isnan(o.rmse_m)));
  }
};

struct EvalReport {
  std::string method;
  Confusion confusion;
  std::array<std::size_t, 3> class_counts{};
  std::optional<Localization> localization;
  LocalizationPopulation population = LocalizationPopulation::CorrectlyClassified;
  std::vector<MethodRow> per_method;

  double accuracy() const { return confusion.accuracy; }
  double rmse_m() const { return localization ? localization->rmse_m : std::numeric_limits<double>::quiet_NaN(); }
};

inline EvalReport make_report(std::string method, std::span<const Detection> preds, std::span<const Window> ws,
                              double sample_spacing,
                              LocalizationPopulation population = LocalizationPopulation::CorrectlyClassified) {
  EvalReport r;
  r.method = std::move(method);
  r.population = population;
  std::vector<EventClass> p, l;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    p.push_back(preds[i].label);
    l.push_back(ws[i].label);
  }
  r.confusion = classification_metrics(p, l);
  r.class_counts = data::class_counts(ws);
  try {
    r.localization = localization_metrics(preds, ws, sample_spacing, population);
  } catch (const NothingToLocalize&) {
    r.localization.reset();
  }
  r.per_method.push_back({r.method, r.accuracy(), r.rmse_m()});
  return r;
}

inline EvalReport evaluate_model(const Model& model, std::span<const Window> ws, double sample_spacing,
                                 LocalizationPopulation population = LocalizationPopulation::CorrectlyClassified) {
  const auto preds = predict(model, ws);
  return make_report(models::kind_name(model.kind()), preds, ws, sample_spacing, population);
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline std::string population_name(LocalizationPopulation p) {
  return p == LocalizationPopulation::CorrectlyClassified ? "correctly-classified" : "all-event-windows";
}

inline LocalizationPopulation parse_population(const std::string& s) {
  if (s == "correctly-classified") return LocalizationPopulation::CorrectlyClassified;
  if (s == "all-event-windows") return LocalizationPopulation::AllEventWindows;
  throw ValidationError("unknown localization population: " + s);
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["accuracy"] = r.accuracy();
  j["total"] = r.confusion.total();
  j["class_counts"] = r.class_counts;
  j["confusion"] = r.confusion.counts;
  j["population"] = population_name(r.population);
  if (r.localization) {
    const auto& L = *r.localization;
    j["rmse_m"] = L.rmse_m;
    j["error_mean_m"] = L.mean_m;
    j["error_std_m"] = L.std_m;
    j["localized_slots"] = L.slots;
    j["histogram"] = {{"low_m", kHistogramLow}, {"high_m", kHistogramHigh}, {"bin_m", kHistogramBin},
                      {"counts", L.histogram}, {"underflow", L.underflow}, {"overflow", L.overflow}};
  } else {
    j["rmse_m"] = nullptr;
    j["error_mean_m"] = nullptr;
    j["error_std_m"] = nullptr;
    j["localized_slots"] = 0;
    j["histogram"] = nullptr;
  }
  j["per_method"] = nlohmann::json::array();
  for (const auto& m : r.per_method)
    j["per_method"].push_back({{"name", m.name}, {"accuracy", m.accuracy}, {"rmse_m", number_or_null(m.rmse_m)}});
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.confusion.counts = j.at("confusion").get<std::array<std::array<std::size_t, 3>, 3>>();
  r.confusion.accuracy = j.at("accuracy").get<double>();
  r.class_counts = j.at("class_counts").get<std::array<std::size_t, 3>>();
  r.population = parse_population(j.at("population").get<std::string>());
  if (!j.at("rmse_m").is_null()) {
    Localization L;
    L.rmse_m = j.at("rmse_m").get<double>();
    L.mean_m = j.at("error_mean_m").get<double>();
    L.std_m = j.at("error_std_m").get<double>();
    L.slots = j.at("localized_slots").get<std::size_t>();
    const auto& h = j.at("histogram");
    L.histogram = h.at("counts").get<std::array<std::size_t, kHistogramBins>>();
    L.underflow = h.at("underflow").get<std::size_t>();
    L.overflow = h.at("overflow").get<std::size_t>();
    r.localization = L;
  }
  for (const auto& m : j.at("per_method"))
    r.per_method.push_back({m.at("name").get<std::string>(), m.at("accuracy").get<double>(),
                            m.at("rmse_m").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                     : m.at("rmse_m").get<double>()});
  return r;
}

// ---------------------------------------------------------------------------
// VOA sweep

struct SweepPoint {
  double voa_db = 0;
  double accuracy = 0;
  double rmse_m = std::numeric_limits<double>::quiet_NaN();
  std::size_t windows = 0;
};

/// "lo:hi:step" or a comma list; values are deduplicated and sorted.
inline std::vector<double> parse_voa_range(const std::string& text) {
  std::vector<double> out;
  auto number = [&](std::string_view s) {
    const std::string t = trim(s);
    double v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size())
      throw ValidationError("bad VOA value: '" + t + "'");
    return v;
  };
  if (text.find(':') != std::string::npos) {
    const auto a = text.find(':'), b = text.find(':', a + 1);
    if (b == std::string::npos) throw ValidationError("VOA range must be lo:hi:step");
    const double lo = number(std::string_view(text).substr(0, a));
    const double hi = number(std::string_view(text).substr(a + 1, b - a - 1));
    const double step = number(std::string_view(text).substr(b + 1));
    if (!(step > 0) || hi < lo) throw ValidationError("VOA range needs step > 0 and hi >= lo");
    for (int i = 0;; ++i) {
      const double v = lo + step * i;
      if (v > hi + 1e-9) break;
      out.push_back(v);
    }
  } else {
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto comma = text.find(',', pos);
      out.push_back(number(std::string_view(text).substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (double v : out)
    if (v < 0) throw ValidationError("VOA attenuation must be >= 0 dB");
  return out;
}

inline std::vector<double> default_voa_values() { return {0, 2, 4, 6, 8, 10, 12}; }

/**
 * Accuracy of `model` on freshly simulated plants at each fixed VOA setting.
 * Every point draws its plants and noise from seeds derived from `seed` and
 * the point's VOA value only.
 */
inline std::vector<SweepPoint> voa_sweep(const Model& model, double model_spacing, data::DatasetSpec base,
                                         std::vector<double> voa_values, int per_class, std::uint64_t seed) {
  if (std::abs(base.sim.sample_spacing - model_spacing) > 1e-12)
    throw ValidationError("sample spacing mismatch: checkpoint trained at " + format_double(model_spacing) +
                          " m, plant sampled at " + format_double(base.sim.sample_spacing) + " m");
  if (per_class < 1) throw ValidationError("windows per sweep point must be >= 1");
  std::sort(voa_values.begin(), voa_values.end());
  voa_values.erase(std::unique(voa_values.begin(), voa_values.end()), voa_values.end());
  std::vector<SweepPoint> out;
  for (double v : voa_values) {
    base.voa = {v, v};
    const auto ws = data::simulate_windows(base, per_class, sub_seed(seed, "voa-sweep/" + format_double(v)));
    const auto r = make_report("sweep", predict(model, ws), ws, model_spacing);
    out.push_back({v, r.accuracy(), r.rmse_m(), ws.size()});
  }
  return out;
}

inline std::string sweep_csv(std::span<const SweepPoint> pts) {
  std::string out = "voa_db,accuracy,rmse_m,windows\n";
  for (const auto& p : pts)
    out += format_double(p.voa_db) + "," + format_double(p.accuracy) + "," +
           (std::isfinite(p.rmse_m) ? format_double(p.rmse_m) : std::string()) + "," + std::to_string(p.windows) +
           "\n";
  return out;
}

inline std::vector<SweepPoint> parse_sweep_csv(std::string_view text) {
  std::vector<SweepPoint> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n++ == 0 || trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (cells.size() == 3) cells.emplace_back();
    if (cells.size() != 4) throw ValidationError("sweep CSV line " + std::to_string(n) + ": expected 4 columns");
    SweepPoint p;
    p.voa_db = std::stod(cells[0]);
    p.accuracy = std::stod(cells[1]);
    if (!cells[2].empty()) p.rmse_m = std::stod(cells[2]);
    p.windows = std::stoul(cells[3]);
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// method comparison

inline constexpr const char* kThresholdMethod = "threshold";

/// Accuracy descending, then RMSE ascending (missing last), then name.
inline void rank_methods(std::vector<MethodRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const MethodRow& a, const MethodRow& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    const double ra = std::isnan(a.rmse_m) ? std::numeric_limits<double>::infinity() : a.rmse_m;
    const double rb = std::isnan(b.rmse_m) ? std::numeric_limits<double>::infinity() : b.rmse_m;
    if (ra != rb) return ra < rb;
    return a.name < b.name;
  });
}

struct Comparison {
  std::vector<MethodRow> rows;
  ThresholdConfig threshold;
};

/// Rows for already trained models plus the threshold baseline, which is tuned
/// on `tuning` (training data) and scored on `test` like the models.
inline Comparison compare_methods(std::span<const Model* const> trained, std::span<const Window> tuning,
                                  std::span<const Window> test, double sample_spacing) {
  Comparison c;
  for (const Model* m : trained) {
    if (!m) throw ValidationError("compare: method without a checkpoint");
    const auto r = evaluate_model(*m, test, sample_spacing);
    c.rows.push_back({r.method, r.accuracy(), r.rmse_m()});
  }
  c.threshold = models::tune_threshold(tuning);
  const auto r = make_report(kThresholdMethod, predict(c.threshold, test), test, sample_spacing);
  c.rows.push_back({kThresholdMethod, r.accuracy(), r.rmse_m()});
  rank_methods(c.rows);
  return c;
}

inline std::string methods_csv(std::span<const MethodRow> rows) {
  std::string out = "method,accuracy,rmse_m\n";
  for (const auto& r : rows)
    out += r.name + "," + format_double(r.accuracy) + "," + (std::isfinite(r.rmse_m) ? format_double(r.rmse_m) : "") +
           "\n";
  return out;
}

inline std::vector<MethodRow> parse_methods_csv(std::string_view text) {
  std::vector<MethodRow> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n++ == 0 || trim(line).empty()) continue;
    const auto a = line.find(','), b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos)
      throw ValidationError("methods CSV line " + std::to_string(n) + ": expected 3 columns");
    MethodRow r;
    r.name = line.substr(0, a);
    r.accuracy = std::stod(line.substr(a + 1, b - a - 1));
    const auto rm = trim(line.substr(b + 1));
    if (!rm.empty()) r.rmse_m = std::stod(rm);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// overlapped-reflection subsets and generalization

/// Measured-power ratio (dB) between the stronger and weaker event of a C2
/// window, from the events of its source trace.
inline double pair_ratio_db(const sim::Trace& trace, const Window& w) {
  std::vector<double> amps;
  for (const auto& e : trace.events) {
    const double idx = e.position / trace.sample_spacing - static_cast<double>(w.start);
    if (idx >= 0 && idx <= static_cast<double>(data::kWindowLength - 1)) amps.push_back(e.amplitude);
  }
  if (amps.size() != 2) throw ValidationError("pair_ratio_db: window does not hold two events");
  return std::abs(10.0 * std::log10(amps[0] / amps[1]));
}

/**
 * C2 windows whose two reflections differ by at least `min_ratio_db` in
 * measured power, drawn from fresh plants of `spec`. Also returns the C2
 * windows below the ratio (up to the same count) for contrast.
 */
struct PairSubsets {
  std::vector<Window> attenuated;
  std::vector<Window> balanced;
};

inline PairSubsets attenuated_pair_windows(const data::DatasetSpec& spec, std::size_t count, double min_ratio_db,
                                           std::uint64_t seed, int max_traces = 200000) {
  spec.validate();
  std::mt19937_64 plant_rng(sub_seed(seed, "pair-plants"));
  PairSubsets out;
  for (int t = 0; t < max_traces && (out.attenuated.size() < count || out.balanced.size() < count); ++t) {
    const auto plan = data::sample_plan(spec, plant_rng);
    auto acq = data::sample_acquisition(spec, plant_rng);
    acq.rng_seed = sub_seed(seed, "pair-noise", static_cast<std::uint64_t>(t));
    const auto trace = sim::synthesize_trace(plan, acq);
    for (auto& w : data::extract_windows(trace, spec, sub_seed(seed, "pair-windows", static_cast<std::uint64_t>(t)))) {
      if (w.label != EventClass::C2) continue;
      auto& dst = pair_ratio_db(trace, w) >= min_ratio_db ? out.attenuated : out.balanced;
      if (dst.size() < count) dst.push_back(std::move(w));
    }
  }
  if (out.attenuated.size() < count)
    throw ValidationError("could not draw " + std::to_string(count) + " attenuated pair windows (got " +
                          std::to_string(out.attenuated.size()) + ")");
  return out;
}

/// Plant-shape fields of a dataset spec; equal strings mean the same plant
/// distribution.
inline std::string plant_signature(const data::DatasetSpec& s) {
  Hasher h;
  h.add(s.feeder_length).add(s.fiber_attenuation).add(s.splitter_ratio).add(s.isolated_branches);
  for (const auto* r : {&s.first_branch_length, &s.branch_spacing, &s.branch_delta, &s.attenuation, &s.voa})
    h.add(r->lo).add(r->hi);
  h.add(s.max_pair_attenuation_gap);
  return h.hex();
}

struct Generalization {
  EvalReport model;
  EvalReport threshold;
  std::vector<std::string> warnings;
};

inline Generalization generalization_eval(const Model& model, double model_spacing, const data::DatasetSpec& training,
                                          const data::DatasetSpec& alternate, const ThresholdConfig& threshold,
                                          int per_class, std::uint64_t seed) {
  if (std::abs(alternate.sim.sample_spacing - model_spacing) > 1e-12)
    throw ValidationError("sample spacing mismatch between checkpoint and alternate plant");
  Generalization g;
  if (plant_signature(training) == plant_signature(alternate)) g.warnings.push_back("not a generalization test");
  const auto ws = data::simulate_windows(alternate, per_class, sub_seed(seed, "generalization"));
  g.model = evaluate_model(model, ws, model_spacing);
  g.threshold = make_report(kThresholdMethod, predict(threshold, ws), ws, model_spacing);
  g.model.per_method.push_back(g.threshold.per_method.front());
  rank_methods(g.model.per_method);
  return g;
}

}  // namespace ponbranch::eval
