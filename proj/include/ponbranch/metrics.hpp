#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "ponbranch/models.hpp"

namespace ponbranch::eval {

using data::EventClass;
using data::Window;
using models::Detection;

struct Confusion {
  // counts[true][predicted]
  std::array<std::array<std::size_t, 3>, 3> counts{};
  double accuracy = 0;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (auto c : row) n += c;
    return n;
  }
  std::size_t row_sum(int cls) const {
    std::size_t n = 0;
    for (auto c : counts[static_cast<std::size_t>(cls)]) n += c;
    return n;
  }
  bool operator==(const Confusion&) const = default;
};

inline Confusion classification_metrics(std::span<const EventClass> preds, std::span<const EventClass> labels) {
  if (preds.size() != labels.size()) throw ValidationError("prediction and label counts differ");
  if (preds.empty()) throw ValidationError("classification metrics of an empty set");
  Confusion c;
  std::size_t diag = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto t = static_cast<std::size_t>(data::class_index(labels[i]));
    const auto p = static_cast<std::size_t>(data::class_index(preds[i]));
    ++c.counts[t][p];
    diag += t == p;
  }
  c.accuracy = static_cast<double>(diag) / static_cast<double>(preds.size());
  return c;
}

/// Which windows contribute position errors.
enum class LocalizationPopulation {
  CorrectlyClassified,  // predicted class == true class != C0
  AllEventWindows,      // true class != C0; predicted slots read for the true count
};

inline constexpr double kHistogramLow = -3.0;
inline constexpr double kHistogramHigh = 3.0;
inline constexpr double kHistogramBin = 0.25;
inline constexpr std::size_t kHistogramBins = 24;

struct Localization {
  double rmse_m = 0;
  double mean_m = 0;
  double std_m = 0;  // population standard deviation
  std::size_t slots = 0;
  std::array<std::size_t, kHistogramBins> histogram{};
  std::size_t underflow = 0;
  std::size_t overflow = 0;
  std::vector<double> errors_m;
};

class NothingToLocalize : public ValidationError {
 public:
  NothingToLocalize() : ValidationError("nothing to localize") {}
};

inline Localization localization_metrics(std::span<const Detection> preds, std::span<const Window> labels,
                                         double sample_spacing,
                                         LocalizationPopulation population = LocalizationPopulation::CorrectlyClassified) {
  if (preds.size() != labels.size()) throw ValidationError("prediction and label counts differ");
  const double scale = static_cast<double>(data::kWindowLength - 1);
  Localization out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& w = labels[i];
    if (w.label == EventClass::C0) continue;
    if (population == LocalizationPopulation::CorrectlyClassified && preds[i].label != w.label) continue;
    const int n = data::class_index(w.label);
    std::array<double, 2> p = preds[i].positions;
    if (n == 2 && p[0] > p[1]) std::swap(p[0], p[1]);
    for (int s = 0; s < n; ++s) {
      const double err = (p[static_cast<std::size_t>(s)] * scale - *w.positions[static_cast<std::size_t>(s)]) * sample_spacing;
      out.errors_m.push_back(err);
    }
  }
  if (out.errors_m.empty()) throw NothingToLocalize();
  double sum = 0, sq = 0;
  for (double e : out.errors_m) {
    sum += e;
    sq += e * e;
    if (e < kHistogramLow) {
      ++out.underflow;
    } else if (e > kHistogramHigh) {
      ++out.overflow;
    } else {
      auto bin = static_cast<std::size_t>(std::floor((e - kHistogramLow) / kHistogramBin));
      out.histogram[std::min(bin, kHistogramBins - 1)] += 1;
    }
  }
  const double n = static_cast<double>(out.errors_m.size());
  out.slots = out.errors_m.size();
  out.mean_m = sum / n;
  out.rmse_m = std::sqrt(sq / n);
  double var = 0;
  for (double e : out.errors_m) var += (e - out.mean_m) * (e - out.mean_m);
  out.std_m = std::sqrt(var / n);
  return out;
}

}  // namespace ponbranch::eval
