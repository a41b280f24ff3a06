#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace srtkit {

/// Sum over shared bins of min(p_x, p_y) for the two normalized histograms.
/// Bins are aligned to multiples of `bin_width`.
[[nodiscard]] double overlapping_index(std::span<const double> x, std::span<const double> y,
                                       double bin_width);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-tailed
};

[[nodiscard]] WelchResult welch_test(std::span<const double> x, std::span<const double> y);

struct KsResult {
  double d = 0.0;
  double p = 1.0;
};

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
[[nodiscard]] double kolmogorov_q(double lambda);

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p value
/// (Stephens' small-sample correction of lambda).
[[nodiscard]] KsResult ks_test(std::span<const double> x, std::span<const double> y);

struct DistComparison {
  double overlapping_index = 0.0;
  double welch_p = 1.0;
  double ks_p = 1.0;
  WelchResult welch;
  KsResult ks;
  std::size_t n_x = 0;
  std::size_t n_y = 0;
};

[[nodiscard]] DistComparison compare_distributions(std::span<const double> x,
                                                   std::span<const double> y, double bin_width);

struct GlmRow {
  double srt_diff = 0.0;      // dB
  double s_h = 0.0;           // %/dB
  double wrs_minus_50 = 0.0;  // %
};

struct GlmCoefficient {
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double p = 1.0;
};

struct GlmFold {
  int k = 0;  // 1-based
  std::array<GlmCoefficient, 3> beta{};
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double mse = 0.0;  // held-out
};

struct GlmFit {
  std::vector<GlmFold> folds;
  std::array<GlmCoefficient, 3> mean{};  // column means over folds
  double rmse_cv = 0.0;                  // sqrt(mean of fold MSEs)
  // Out-of-fold predictions against observations.
  double pearson_r = 0.0;
  double rmse = 0.0;
  double bias = 0.0;  // mean(predicted - observed)
  std::vector<double> predicted;  // aligned with the input rows
};

/// OLS fit of srt_diff ~ b0 + b1 * s_h + b2 * wrs_minus_50.
[[nodiscard]] std::array<GlmCoefficient, 3> ols_fit(std::span<const GlmRow> rows);

/// k-fold cross-validated OLS. Fold membership depends only on the row
/// contents and the seed, not on the input order.
[[nodiscard]] GlmFit glm_cv(std::span<const GlmRow> rows, int folds, std::uint64_t seed);

/// Linearly interpolated percentile (q in [0, 100]) of unsorted values.
[[nodiscard]] double percentile(std::vector<double> values, double q);

[[nodiscard]] double pearson_r(std::span<const double> x, std::span<const double> y);

}  // namespace srtkit
