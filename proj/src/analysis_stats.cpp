#include "srtkit/analysis_stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "srtkit/errors.hpp"

namespace srtkit {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
};

Moments moments(std::span<const double> v) {
  Moments m;
  const double n = static_cast<double>(v.size());
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
  return m;
}

double two_tailed_t(double t, double df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

// Unbiased integer in [0, bound) from a 64-bit engine.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

double overlapping_index(std::span<const double> x, std::span<const double> y, double bin_width) {
  if (x.empty() || y.empty()) throw DataError("overlapping index needs two non-empty samples");
  if (!(bin_width > 0.0)) throw ConfigError("bin width must be positive");
  std::map<long long, std::pair<double, double>> bins;
  for (double v : x) bins[static_cast<long long>(std::floor(v / bin_width))].first += 1.0;
  for (double v : y) bins[static_cast<long long>(std::floor(v / bin_width))].second += 1.0;
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  double eta = 0.0;
  for (const auto& [bin, c] : bins) eta += std::min(c.first / nx, c.second / ny);
  return std::clamp(eta, 0.0, 1.0);
}

WelchResult welch_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) throw DataError("Welch test needs at least 2 values per sample");
  const Moments mx = moments(x);
  const Moments my = moments(y);
  if (mx.var <= 0.0 && my.var <= 0.0) throw DataError("Welch test: both samples have zero variance");
  const double ax = mx.var / static_cast<double>(x.size());
  const double ay = my.var / static_cast<double>(y.size());
  WelchResult r;
  r.t = (mx.mean - my.mean) / std::sqrt(ax + ay);
  r.df = (ax + ay) * (ax + ay) /
         (ax * ax / static_cast<double>(x.size() - 1) + ay * ay / static_cast<double>(y.size() - 1));
  r.p = two_tailed_t(r.t, r.df);
  return r;
}

double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Theta-function form converges fast for small lambda.
    double k_sum = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double m = 2.0 * k - 1.0;
      const double term = std::exp(-m * m * pi * pi / (8.0 * lambda * lambda));
      k_sum += term;
      if (term < 1e-17) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * k_sum, 0.0, 1.0);
  }
  double q = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    q += sign * term;
    sign = -sign;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * q, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw DataError("KS test needs two non-empty samples");
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult r;
  r.d = d;
  const double ne = std::sqrt(na * nb / (na + nb));
  r.p = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
  return r;
}

DistComparison compare_distributions(std::span<const double> x, std::span<const double> y,
                                     double bin_width) {
  DistComparison c;
  c.n_x = x.size();
  c.n_y = y.size();
  c.overlapping_index = overlapping_index(x, y, bin_width);
  c.ks = ks_test(x, y);
  c.ks_p = c.ks.p;
  c.welch = welch_test(x, y);
  c.welch_p = c.welch.p;
  return c;
}

std::array<GlmCoefficient, 3> ols_fit(std::span<const GlmRow> rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (n <= 3) throw DataError("regression needs more rows than coefficients");
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    X(i, 1) = r.s_h;
    X(i, 2) = r.wrs_minus_50;
    y(i) = r.srt_diff;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double cond = sv(2) > 0.0 ? sv(0) / sv(2) : std::numeric_limits<double>::infinity();
  if (!(cond < 1e10)) {
    std::ostringstream msg;
    msg << "collinear design matrix (condition number " << cond << ")";
    throw ModelError(msg.str());
  }
  const Eigen::VectorXd beta = svd.solve(y);
  const Eigen::VectorXd resid = y - X * beta;
  const double df = static_cast<double>(n - 3);
  const double sigma2 = resid.squaredNorm() / df;
  const Eigen::MatrixXd V = svd.matrixV();
  const Eigen::MatrixXd cov =
      sigma2 * V * sv.cwiseAbs2().cwiseInverse().asDiagonal() * V.transpose();

  std::array<GlmCoefficient, 3> out{};
  for (int j = 0; j < 3; ++j) {
    auto& c = out[static_cast<std::size_t>(j)];
    c.estimate = beta(j);
    c.se = std::sqrt(std::max(cov(j, j), 0.0));
    if (c.se > 0.0) {
      c.t = c.estimate / c.se;
    } else if (c.estimate == 0.0) {
      c.t = 0.0;
    } else {
      c.t = std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
    }
    c.p = c.se > 0.0 ? two_tailed_t(c.t, df) : (c.estimate == 0.0 ? 1.0 : 0.0);
  }
  return out;
}

GlmFit glm_cv(std::span<const GlmRow> rows, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  const std::size_t n = rows.size();
  if (n < static_cast<std::size_t>(folds)) throw DataError("fewer rows than folds");

  // Canonical order first, so that the shuffle does not see the input order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = rows[a];
    const auto& rb = rows[b];
    if (ra.srt_diff != rb.srt_diff) return ra.srt_diff < rb.srt_diff;
    if (ra.s_h != rb.s_h) return ra.s_h < rb.s_h;
    return ra.wrs_minus_50 < rb.wrs_minus_50;
  });
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);

  GlmFit fit;
  fit.predicted.assign(n, 0.0);
  double mse_sum = 0.0;
  for (int k = 0; k < folds; ++k) {
    const std::size_t begin = n * static_cast<std::size_t>(k) / static_cast<std::size_t>(folds);
    const std::size_t end = n * static_cast<std::size_t>(k + 1) / static_cast<std::size_t>(folds);
    std::vector<GlmRow> train;
    train.reserve(n - (end - begin));
    for (std::size_t i = 0; i < n; ++i) {
      if (i < begin || i >= end) train.push_back(rows[order[i]]);
    }
    GlmFold fold;
    fold.k = k + 1;
    fold.beta = ols_fit(train);
    fold.n_train = train.size();
    fold.n_test = end - begin;
    double sse = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const GlmRow& r = rows[order[i]];
      const double pred = fold.beta[0].estimate + fold.beta[1].estimate * r.s_h +
                          fold.beta[2].estimate * r.wrs_minus_50;
      fit.predicted[order[i]] = pred;
      sse += (pred - r.srt_diff) * (pred - r.srt_diff);
    }
    fold.mse = fold.n_test > 0 ? sse / static_cast<double>(fold.n_test) : 0.0;
    mse_sum += fold.mse;
    fit.folds.push_back(fold);
  }
  fit.rmse_cv = std::sqrt(mse_sum / folds);

  for (std::size_t j = 0; j < 3; ++j) {
    GlmCoefficient m;
    m.estimate = m.se = m.t = m.p = 0.0;
    for (const auto& f : fit.folds) {
      m.estimate += f.beta[j].estimate;
      m.se += f.beta[j].se;
      m.t += f.beta[j].t;
      m.p += f.beta[j].p;
    }
    m.estimate /= folds;
    m.se /= folds;
    m.t /= folds;
    m.p /= folds;
    fit.mean[j] = m;
  }

  std::vector<double> observed(n);
  double sq = 0.0, bias = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    observed[i] = rows[i].srt_diff;
    const double e = fit.predicted[i] - observed[i];
    sq += e * e;
    bias += e;
  }
  fit.rmse = std::sqrt(sq / static_cast<double>(n));
  fit.bias = bias / static_cast<double>(n);
  fit.pearson_r = pearson_r(fit.predicted, observed);
  return fit;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return values[lo] + w * (values[hi] - values[lo]);
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return 0.0;
  const Moments mx = moments(x);
  const Moments my = moments(y);
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx.mean) * (y[i] - my.mean);
  const double denom = std::sqrt(mx.var * my.var) * static_cast<double>(x.size() - 1);
  return denom > 0.0 ? sxy / denom : 0.0;
}

}  // namespace srtkit
