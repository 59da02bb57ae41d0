#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deeplda/dataset.hpp"
#include "deeplda/errors.hpp"

namespace deeplda {

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  size_t count = 0;
  double mean_confidence = 0.0;
  double empirical_accuracy = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  double overall_accuracy = 0.0;
  double mean_confidence = 0.0;
  size_t n = 0;
};

/// Uniform-width confidence bins on [0,1]. A confidence exactly on an interior
/// boundary lands in the higher bin; confidence 1.0 lands in the top bin.
/// Empty bins contribute zero to the ECE sum.
inline CalibrationReport calibration_report(const Vec& confidences,
                                            const std::vector<bool>& correct, int num_bins) {
  if (confidences.size() != correct.size())
    throw LengthMismatch("calibration_report: confidences and outcomes differ in length");
  if (num_bins < 1) throw std::invalid_argument("calibration_report: need at least one bin");
  for (double c : confidences)
    if (!(c >= 0.0 && c <= 1.0))
      throw ConfidenceOutOfRange("calibration_report: confidence outside [0,1]");

  CalibrationReport rep;
  rep.n = confidences.size();
  rep.bins.resize(num_bins);
  for (int m = 0; m < num_bins; ++m) {
    rep.bins[m].lower = static_cast<double>(m) / num_bins;
    rep.bins[m].upper = static_cast<double>(m + 1) / num_bins;
  }
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<size_t> hits(num_bins, 0);
  for (size_t i = 0; i < confidences.size(); ++i) {
    int m = static_cast<int>(std::floor(confidences[i] * num_bins));
    m = std::min(m, num_bins - 1);
    rep.bins[m].count += 1;
    conf_sum[m] += confidences[i];
    if (correct[i]) hits[m] += 1;
    rep.mean_confidence += confidences[i];
    if (correct[i]) rep.overall_accuracy += 1.0;
  }
  if (rep.n > 0) {
    rep.mean_confidence /= static_cast<double>(rep.n);
    rep.overall_accuracy /= static_cast<double>(rep.n);
  }
  for (int m = 0; m < num_bins; ++m) {
    if (rep.bins[m].count == 0) continue;
    rep.bins[m].mean_confidence = conf_sum[m] / static_cast<double>(rep.bins[m].count);
    rep.bins[m].empirical_accuracy =
        static_cast<double>(hits[m]) / static_cast<double>(rep.bins[m].count);
    rep.ece += (static_cast<double>(rep.bins[m].count) / static_cast<double>(rep.n)) *
               std::abs(rep.bins[m].empirical_accuracy - rep.bins[m].mean_confidence);
  }
  return rep;
}

inline nlohmann::json calibration_report_to_json(const CalibrationReport& rep) {
  nlohmann::json bins = nlohmann::json::array();
  for (const CalibrationBin& b : rep.bins)
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"empirical_accuracy", b.empirical_accuracy}});
  return nlohmann::json{{"bins", bins},
                        {"ece", rep.ece},
                        {"overall_accuracy", rep.overall_accuracy},
                        {"mean_confidence", rep.mean_confidence},
                        {"n", rep.n}};
}

/// Reliability-diagram rows: bin_low, bin_high, count, conf, acc, gap (signed
/// acc - conf). All bins are emitted; zero-count rows are kept for plotting
/// tools to skip.
inline void write_reliability_csv(const CalibrationReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "bin_low,bin_high,count,conf,acc,gap\n";
  for (const CalibrationBin& b : rep.bins)
    out << format_double(b.lower) << "," << format_double(b.upper) << "," << b.count << ","
        << format_double(b.mean_confidence) << "," << format_double(b.empirical_accuracy) << ","
        << format_double(b.empirical_accuracy - b.mean_confidence) << "\n";
}

/// Pulls (confidence, correctness) pairs out of per-sample posterior vectors.
inline void confidence_outcomes(const std::vector<Vec>& posteriors, const std::vector<int>& labels,
                                Vec& confidences, std::vector<bool>& correct) {
  if (posteriors.size() != labels.size())
    throw LengthMismatch("confidence_outcomes: posteriors and labels differ in length");
  confidences.resize(posteriors.size());
  correct.resize(posteriors.size());
  for (size_t i = 0; i < posteriors.size(); ++i) {
    int best = 0;
    for (size_t c = 1; c < posteriors[i].size(); ++c)
      if (posteriors[i][c] > posteriors[i][best]) best = static_cast<int>(c);
    confidences[i] = posteriors[i][best];
    correct[i] = (best == labels[i]);
  }
}

}  // namespace deeplda
