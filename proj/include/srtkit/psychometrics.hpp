#pragma once

#include <span>
#include <vector>

#include "srtkit/clinical_data.hpp"

namespace srtkit {

/// Logistic psychometric function. `slope` is %/dB per 100% scale, so the
/// derivative at the SRT is slope * wrs_max / 100.
struct PsychometricFunction {
  double srt = 0.0;       // dB SPL, where evaluate() = wrs_max / 2
  double slope = 0.0;     // %/dB
  double wrs_max = 100.0; // %
};

[[nodiscard]] double evaluate(const PsychometricFunction& f, double level);

/// Analytic derivative d(evaluate)/dL.
[[nodiscard]] double derivative(const PsychometricFunction& f, double level);

/// Level at which `f` reaches `wrs` percent; requires 0 < wrs < wrs_max.
[[nodiscard]] double level_at(const PsychometricFunction& f, double wrs);

struct LinearSegment {
  double slope = 0.0;      // %/dB
  double intercept = 0.0;  // % at 0 dB
  std::vector<SpeechPoint> fit_points;

  [[nodiscard]] double at(double level) const { return intercept + slope * level; }
};

/// Exact line for two points, ordinary least squares for more.
/// Throws ModelError("degenerate abscissae") on repeated levels.
[[nodiscard]] LinearSegment fit_line(std::span<const SpeechPoint> points);

/// Level where the line crosses 50%. Throws ModelError for slope <= 0.
[[nodiscard]] double line_to_srt(const LinearSegment& seg);

/// SRT of a line with slope `slope` through (level, wrs).
[[nodiscard]] double srt_from_anchor(double level, double wrs, double slope);

inline constexpr double kNhClampLow = 2.5;
inline constexpr double kNhClampHigh = 97.5;

/// Single-point SRT fit with slope fixed to `nh_slope` (%/dB) and wrs_max 100%.
/// WRS is clamped into [2.5, 97.5] first.
[[nodiscard]] double invert_nh_logistic(double level, double wrs, double nh_slope = 4.5);

}  // namespace srtkit
