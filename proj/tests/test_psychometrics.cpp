#include <doctest.h>

#include <cmath>
#include <random>

#include "srtkit/errors.hpp"
#include "srtkit/psychometrics.hpp"

using namespace srtkit;

namespace {

// Numeric one-parameter fit: the SRT at which the NH logistic passes through (level, wrs).
double bisect_srt(double level, double wrs) {
  double lo = level - 200, hi = level + 200;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    // Larger SRT -> lower score at a fixed level.
    if (evaluate({mid, 4.5, 100}, level) > wrs) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("psychometrics") {

TEST_CASE("evaluate examples") {
  const PsychometricFunction f{60, 4.5, 100};
  CHECK(evaluate(f, 60) == doctest::Approx(50.0));
  CHECK(evaluate(f, 70) == doctest::Approx(100.0 / (1.0 + std::exp(-1.8))));
  CHECK(evaluate(f, 70) == doctest::Approx(85.8).epsilon(1e-3));
  CHECK(evaluate(f, 1e4) == doctest::Approx(100.0));
  CHECK(evaluate({60, 3, 80}, 60) == doctest::Approx(40.0));
}

TEST_CASE("derivative at the SRT and against central differences") {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> srt(20, 100), slope(0.5, 8), wmax(10, 100), off(-30, 30);
  for (int trial = 0; trial < 200; ++trial) {
    const PsychometricFunction f{srt(rng), slope(rng), wmax(rng)};
    CHECK(derivative(f, f.srt) == doctest::Approx(f.slope * f.wrs_max / 100.0).epsilon(1e-12));
    const double l = f.srt + off(rng);
    const double h = 1e-3;
    const double fd = (evaluate(f, l + h) - evaluate(f, l - h)) / (2 * h);
    CHECK(std::abs(fd - derivative(f, l)) < 1e-6);
    CHECK(evaluate(f, l + 0.1) > evaluate(f, l));
  }
}

TEST_CASE("level_at inverts evaluate") {
  const PsychometricFunction f{55, 3, 90};
  for (double w : {10.0, 45.0, 80.0}) CHECK(evaluate(f, level_at(f, w)) == doctest::Approx(w));
}

TEST_CASE("fit_line examples") {
  const std::vector<SpeechPoint> a{{60, 30}, {80, 70}};
  const LinearSegment s = fit_line(a);
  CHECK(s.slope == doctest::Approx(2.0));
  CHECK(s.intercept == doctest::Approx(-90.0));
  CHECK(fit_line(std::vector<SpeechPoint>{{60, 50}, {80, 90}}).slope == doctest::Approx(2.0));
  try {
    (void)fit_line(std::vector<SpeechPoint>{{60, 30}, {60, 70}});
    FAIL("expected an error");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()) == "degenerate abscissae");
  }
}

TEST_CASE("two-point fits pass through both points, least squares otherwise") {
  const LinearSegment s = fit_line(std::vector<SpeechPoint>{{80, 65}, {60, 25}});
  CHECK(s.at(60) == doctest::Approx(25.0));
  CHECK(s.at(80) == doctest::Approx(65.0));
  const LinearSegment ls = fit_line(std::vector<SpeechPoint>{{60, 20}, {80, 50}, {100, 60}});
  CHECK(ls.slope == doctest::Approx(1.0));
  CHECK(ls.intercept == doctest::Approx(43.333333333333336 - 80.0));
}

TEST_CASE("line_to_srt examples") {
  CHECK(line_to_srt(fit_line(std::vector<SpeechPoint>{{60, 30}, {80, 70}})) == doctest::Approx(70.0));
  CHECK(srt_from_anchor(60, 30, 2) == doctest::Approx(70.0));
  CHECK(srt_from_anchor(60, 50, 2) == doctest::Approx(60.0));
  CHECK(srt_from_anchor(80, 70, 4.5) == doctest::Approx(75.5555555556));
  CHECK_THROWS_AS((void)line_to_srt(fit_line(std::vector<SpeechPoint>{{60, 70}, {80, 30}})), ModelError);
  CHECK_THROWS_AS((void)srt_from_anchor(60, 30, 0), ModelError);
}

TEST_CASE("line_to_srt ignores point order") {
  const std::vector<SpeechPoint> a{{60, 35}, {100, 75}};
  const std::vector<SpeechPoint> b{{100, 75}, {60, 35}};
  CHECK(line_to_srt(fit_line(a)) == line_to_srt(fit_line(b)));
}

TEST_CASE("shifting levels shifts the SRT") {
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> w(1, 19);
  std::uniform_real_distribution<double> d(-30, 30);
  for (int trial = 0; trial < 100; ++trial) {
    const int w1 = 5 * w(rng);
    const int w2 = std::min(100, w1 + 5 * w(rng));
    const double delta = d(rng);
    const std::vector<SpeechPoint> a{{60, w1}, {80, w2}};
    const std::vector<SpeechPoint> b{{60 + delta, w1}, {80 + delta, w2}};
    CHECK(line_to_srt(fit_line(b)) == doctest::Approx(line_to_srt(fit_line(a)) + delta));
    CHECK(srt_from_anchor(60 + delta, w1, 3.0) == doctest::Approx(srt_from_anchor(60, w1, 3.0) + delta));
    CHECK(invert_nh_logistic(60 + delta, w1) == doctest::Approx(invert_nh_logistic(60, w1) + delta));
  }
}

TEST_CASE("NH inversion examples") {
  CHECK(invert_nh_logistic(60, 50) == doctest::Approx(60.0));
  CHECK(invert_nh_logistic(60, 100.0 / (1.0 + std::exp(-1.8))) == doctest::Approx(50.0));
  CHECK(invert_nh_logistic(60, 85.8) == doctest::Approx(50.0).epsilon(1e-3));
  // 100% is read as 97.5%: 60 + ln(1/39) / 0.18.
  CHECK(invert_nh_logistic(60, 100) == doctest::Approx(60.0 + std::log(100.0 / 97.5 - 1.0) / 0.18));
  CHECK(invert_nh_logistic(60, 100) == doctest::Approx(39.6).epsilon(2e-3));
  CHECK(invert_nh_logistic(60, 100) == doctest::Approx(bisect_srt(60, 97.5)).epsilon(1e-9));
  CHECK(invert_nh_logistic(60, 0) == doctest::Approx(bisect_srt(60, 2.5)).epsilon(1e-9));
}

TEST_CASE("NH inversion round trip") {
  for (double srt = 20; srt <= 110; srt += 7.3) {
    for (double level : {60.0, 80.0, 100.0, 110.0}) {
      const double w = evaluate({srt, 4.5, 100}, level);
      if (w < kNhClampLow || w > kNhClampHigh) continue;
      CHECK(std::abs(invert_nh_logistic(level, w) - srt) < 1e-9);
    }
  }
}

}  // TEST_SUITE
