#pragma once

#include <array>
#include <filesystem>
#include <string>

namespace srtkit {

/// 95% confidence limits of the true WRS for each measurable score 0, 5, ..., 100 %.
class WrsConfidenceTable {
 public:
  enum class Source { builtin_binomial, external };

  struct Interval {
    double low = 0.0;   // %
    double high = 0.0;  // %
  };

  /// Exact Clopper-Pearson limits for a list of `trials` words.
  [[nodiscard]] static WrsConfidenceTable binomial(int trials = 20, double confidence = 0.95);
  /// Reads "wrs, ci_low, ci_high" rows (percent); all 21 scores must be present.
  [[nodiscard]] static WrsConfidenceTable load(const std::filesystem::path& path);

  [[nodiscard]] const Interval& interval(int wrs) const;
  [[nodiscard]] Source source() const noexcept { return source_; }

 private:
  std::array<Interval, 21> rows_{};
  Source source_ = Source::builtin_binomial;
};

struct WrsError {
  double delta_low = 0.0;   // wrs - ci_low
  double delta_high = 0.0;  // ci_high - wrs
  double delta = 0.0;       // larger half-width
};

[[nodiscard]] WrsError wrs_ci(int wrs, const WrsConfidenceTable& table);

/// (dWRS_u + dWRS_l) / (L_u - L_l); level error is zero.
[[nodiscard]] double delta_slope_empirical(double delta_wrs_upper, double delta_wrs_lower,
                                           double level_upper, double level_lower);

/// sqrt(2 * dSII^2), the propagated error of a two-point SII slope in SII units.
[[nodiscard]] double delta_slope_sii(double delta_sii);

/// The same error expressed in %/dB: divided by the level span of the slope
/// triple and scaled by the SII-to-WRS slope factor.
[[nodiscard]] double delta_slope_sii_converted(double delta_sii, double level_span,
                                               double s_wrs_nh, double s_sii_nh);

/// dWRS/s + |WRS - 50| * ds / s^2.
[[nodiscard]] double delta_srt(double wrs, double delta_wrs, double slope, double delta_slope);

/// dSRT - dPTA, taken literally (not a root-sum-square).
[[nodiscard]] double delta_d(double delta_srt, double delta_pta = 5.0);

}  // namespace srtkit
