#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "deeplda/calibration.hpp"
#include "deeplda/rng.hpp"

using namespace deeplda;

TEST_CASE("perfectly calibrated predictions give zero ece") {
  // every sample sits at confidence 1.0 and is correct
  Vec conf(40, 1.0);
  std::vector<bool> correct(40, true);
  CalibrationReport rep = calibration_report(conf, correct, 10);
  REQUIRE(rep.ece == 0.0);
  REQUIRE(rep.overall_accuracy == 1.0);
  REQUIRE(rep.mean_confidence == 1.0);
  REQUIRE(rep.bins.back().count == 40);
}

TEST_CASE("constant half confidence with half accuracy is calibrated") {
  Vec conf(100, 0.5);
  std::vector<bool> correct(100);
  for (int i = 0; i < 100; ++i) correct[i] = (i % 2 == 0);
  CalibrationReport rep = calibration_report(conf, correct, 10);
  REQUIRE(std::abs(rep.ece) < 1e-15);
  REQUIRE(rep.overall_accuracy == 0.5);
  // 0.5 sits on the boundary between bins 4 and 5 and must land in bin 5
  REQUIRE(rep.bins[5].count == 100);
  REQUIRE(rep.bins[4].count == 0);
}

TEST_CASE("a known miscalibration produces the hand computed ece") {
  // twenty samples at confidence 0.55, nine of them correct:
  // all in bin [0.5, 0.6), gap |0.45 - 0.55| = 0.1, weight 1 -> ece 0.1
  Vec conf(20, 0.55);
  std::vector<bool> correct(20, false);
  for (int i = 0; i < 9; ++i) correct[i] = true;
  CalibrationReport rep = calibration_report(conf, correct, 10);
  REQUIRE(std::abs(rep.ece - 0.1) < 1e-12);
  REQUIRE(rep.bins[5].count == 20);
  REQUIRE(std::abs(rep.bins[5].mean_confidence - 0.55) < 1e-12);
  REQUIRE(std::abs(rep.bins[5].empirical_accuracy - 0.45) < 1e-12);
}

TEST_CASE("mixed bins weight their gaps by population") {
  // 30 samples at 0.95 all correct (gap 0.05), 10 samples at 0.35 none
  // correct (gap 0.35): ece = 0.75 * 0.05 + 0.25 * 0.35
  Vec conf;
  std::vector<bool> correct;
  for (int i = 0; i < 30; ++i) {
    conf.push_back(0.95);
    correct.push_back(true);
  }
  for (int i = 0; i < 10; ++i) {
    conf.push_back(0.35);
    correct.push_back(false);
  }
  CalibrationReport rep = calibration_report(conf, correct, 10);
  REQUIRE(std::abs(rep.ece - (0.75 * 0.05 + 0.25 * 0.35)) < 1e-12);
}

TEST_CASE("boundary confidences land in the higher bin") {
  Vec conf = {0.1, 0.2, 0.9999999, 1.0, 0.0};
  std::vector<bool> correct(5, true);
  CalibrationReport rep = calibration_report(conf, correct, 10);
  REQUIRE(rep.bins[1].count == 1);  // 0.1
  REQUIRE(rep.bins[2].count == 1);  // 0.2
  REQUIRE(rep.bins[9].count == 2);  // 0.9999999 and 1.0 both in the top bin
  REQUIRE(rep.bins[0].count == 1);  // 0.0
  size_t total = 0;
  for (const CalibrationBin& b : rep.bins) total += b.count;
  REQUIRE(total == 5);
}

TEST_CASE("bin edges are the uniform partition of the unit interval") {
  CalibrationReport rep = calibration_report(Vec{0.5}, std::vector<bool>{true}, 4);
  REQUIRE(rep.bins.size() == 4);
  for (int m = 0; m < 4; ++m) {
    REQUIRE(rep.bins[m].lower == m / 4.0);
    REQUIRE(rep.bins[m].upper == (m + 1) / 4.0);
  }
}

TEST_CASE("ece recomputes from the report fields") {
  Rng rng = make_rng(81);
  Vec conf(500);
  std::vector<bool> correct(500);
  for (int i = 0; i < 500; ++i) {
    conf[i] = uniform_unit(rng);
    correct[i] = uniform_unit(rng) < conf[i];
  }
  CalibrationReport rep = calibration_report(conf, correct, 10);
  double recomputed = 0.0;
  size_t total = 0;
  for (const CalibrationBin& b : rep.bins) {
    total += b.count;
    if (b.count > 0)
      recomputed += (double(b.count) / double(rep.n)) *
                    std::abs(b.empirical_accuracy - b.mean_confidence);
  }
  REQUIRE(total == rep.n);
  REQUIRE(std::abs(recomputed - rep.ece) < 1e-12);
  // a roughly calibrated simulation should have a small but nonzero ece
  REQUIRE(rep.ece < 0.2);
}

TEST_CASE("calibration input validation") {
  REQUIRE_THROWS_AS(calibration_report(Vec{0.5, 0.5}, std::vector<bool>{true}, 10),
                    LengthMismatch);
  REQUIRE_THROWS_AS(calibration_report(Vec{0.5}, std::vector<bool>{true}, 0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(calibration_report(Vec{1.5}, std::vector<bool>{true}, 10),
                    ConfidenceOutOfRange);
  REQUIRE_THROWS_AS(calibration_report(Vec{-0.1}, std::vector<bool>{true}, 10),
                    ConfidenceOutOfRange);
  Vec with_nan = {std::numeric_limits<double>::quiet_NaN()};
  REQUIRE_THROWS_AS(calibration_report(with_nan, std::vector<bool>{true}, 10),
                    ConfidenceOutOfRange);
}

TEST_CASE("reliability csv emits one row per bin with signed gaps") {
  Vec conf = {0.95, 0.95, 0.35};
  std::vector<bool> correct = {true, true, false};
  CalibrationReport rep = calibration_report(conf, correct, 5);
  std::string path =
      (std::filesystem::temp_directory_path() / "deeplda_reliability_test.csv").string();
  write_reliability_csv(rep, path);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "bin_low,bin_high,count,conf,acc,gap");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == 5);
  in.close();
  std::remove(path.c_str());
}

TEST_CASE("confidence outcomes extract the winning class") {
  std::vector<Vec> posteriors = {
      {0.7, 0.2, 0.1},
      {0.1, 0.1, 0.8},
      {0.4, 0.5, 0.1},
  };
  std::vector<int> labels = {0, 1, 1};
  Vec conf;
  std::vector<bool> correct;
  confidence_outcomes(posteriors, labels, conf, correct);
  REQUIRE(conf == Vec{0.7, 0.8, 0.5});
  REQUIRE(correct == std::vector<bool>{true, false, true});
  REQUIRE_THROWS_AS(confidence_outcomes(posteriors, {0, 1}, conf, correct), LengthMismatch);
}

TEST_CASE("calibration json carries all fields") {
  Vec conf = {0.55, 0.55};
  std::vector<bool> correct = {true, false};
  CalibrationReport rep = calibration_report(conf, correct, 10);
  nlohmann::json j = calibration_report_to_json(rep);
  REQUIRE(j["n"] == 2);
  REQUIRE(j["bins"].size() == 10);
  REQUIRE(std::abs(j["ece"].get<double>() - rep.ece) == 0.0);
  REQUIRE(j["bins"][5]["count"] == 2);
}
