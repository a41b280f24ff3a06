#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "srtkit/analysis_stats.hpp"
#include "srtkit/errors.hpp"

using namespace srtkit;

namespace {

std::vector<double> uniform_sample(std::mt19937_64& rng, std::size_t n, double a, double b) {
  std::uniform_real_distribution<double> d(a, b);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> normal_sample(std::mt19937_64& rng, std::size_t n, double mu, double sigma) {
  std::normal_distribution<double> d(mu, sigma);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Pearson chi-square over 10 equal p-value bins; 21.666 is the 0.99 quantile for 9 df.
double chi_square_10(const std::vector<double>& p) {
  std::array<double, 10> counts{};
  for (double v : p) counts[std::min<std::size_t>(9, static_cast<std::size_t>(v * 10))] += 1;
  const double expected = static_cast<double>(p.size()) / 10.0;
  double chi = 0.0;
  for (double c : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}
constexpr double kChi2Crit = 21.666;

std::vector<GlmRow> planted_rows(std::mt19937_64& rng, std::size_t n, double sigma) {
  std::uniform_real_distribution<double> sh(0.5, 5.0), w(-35, 35);
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<GlmRow> rows(n);
  for (auto& r : rows) {
    r.s_h = sh(rng);
    r.wrs_minus_50 = 5.0 * std::round(w(rng) / 5.0);
    r.srt_diff = 2.5 - 1.7 * r.s_h + 0.146 * r.wrs_minus_50 + (sigma > 0 ? noise(rng) : 0.0);
  }
  return rows;
}

}  // namespace

TEST_SUITE("analysis_stats") {

TEST_CASE("overlapping index trivial cases") {
  std::mt19937_64 rng(1);
  const auto x = uniform_sample(rng, 1000, 0, 50);
  CHECK(overlapping_index(x, x, 5) == doctest::Approx(1.0));
  const auto a = uniform_sample(rng, 500, 0, 10);
  const auto b = uniform_sample(rng, 500, 20, 30);
  CHECK(overlapping_index(a, b, 5) == 0.0);
  CHECK_THROWS_AS((void)overlapping_index(std::vector<double>{}, x, 5), DataError);
}

TEST_CASE("overlapping index half overlap") {
  std::mt19937_64 rng(2);
  const auto a = uniform_sample(rng, 10000, 0, 10);
  const auto b = uniform_sample(rng, 10000, 5, 15);
  const double eta = overlapping_index(a, b, 1);
  CHECK(std::abs(eta - 0.5) <= 0.05);
  CHECK(overlapping_index(b, a, 1) == doctest::Approx(eta).epsilon(1e-14));
}

TEST_CASE("overlapping index is symmetric and bounded") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = normal_sample(rng, 50 + trial, 40, 10);
    const auto y = normal_sample(rng, 80, 45 + trial * 0.2, 12);
    const double e = overlapping_index(x, y, 5);
    CHECK(e == doctest::Approx(overlapping_index(y, x, 5)).epsilon(1e-14));
    CHECK(e >= 0.0);
    CHECK(e <= 1.0 + 1e-12);
  }
}

TEST_CASE("Welch examples") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 3, 4};
  const auto r = welch_test(x, y);
  CHECK(r.t == doctest::Approx(0.0));
  CHECK(r.p == doctest::Approx(1.0));

  std::mt19937_64 rng(4);
  auto a = normal_sample(rng, 100, 0, 1);
  auto b = a;
  for (auto& v : b) v += 10.0;
  CHECK(welch_test(a, b).p < 1e-6);

  // Hand-computed: means 3 and 6, variances 2.5 and 1, n 5 and 3.
  const std::vector<double> c{5, 6, 7};
  const auto w = welch_test(x, c);
  const double se = std::sqrt(2.5 / 5 + 1.0 / 3);
  CHECK(w.t == doctest::Approx(-3.0 / se));
  const double df = std::pow(2.5 / 5 + 1.0 / 3, 2) /
                    (std::pow(2.5 / 5, 2) / 4 + std::pow(1.0 / 3, 2) / 2);
  CHECK(w.df == doctest::Approx(df));

  CHECK_THROWS_AS((void)welch_test(std::vector<double>{1, 1}, std::vector<double>{2, 2}), DataError);
  CHECK_THROWS_AS((void)welch_test(std::vector<double>{1}, std::vector<double>{2, 3}), DataError);
}

TEST_CASE("KS examples") {
  std::mt19937_64 rng(5);
  const auto x = normal_sample(rng, 300, 0, 1);
  const auto same = ks_test(x, x);
  CHECK(same.d == 0.0);
  CHECK(same.p == doctest::Approx(1.0));
  const auto a = uniform_sample(rng, 100, 0, 1);
  const auto b = uniform_sample(rng, 120, 2, 3);
  const auto dis = ks_test(a, b);
  CHECK(dis.d == 1.0);
  CHECK(dis.p < 1e-10);
  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(kolmogorov_q(1.36) == doctest::Approx(0.0495).epsilon(0.01));
  CHECK(kolmogorov_q(1.0) == doctest::Approx(0.26999967).epsilon(1e-6));
  // Both branches agree near the switch.
  CHECK(kolmogorov_q(1.1799999) == doctest::Approx(kolmogorov_q(1.1800001)).epsilon(1e-6));
  CHECK_THROWS_AS((void)ks_test(std::vector<double>{}, x), DataError);
}

TEST_CASE("Welch p is uniform under the null") {
  std::mt19937_64 rng(6);
  std::vector<double> p;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto x = normal_sample(rng, 200, 0, 1);
    const auto y = normal_sample(rng, 200, 0, 2);
    p.push_back(welch_test(x, y).p);
  }
  CHECK(chi_square_10(p) < kChi2Crit);
}

TEST_CASE("KS p is uniform under the null") {
  std::mt19937_64 rng(7);
  std::vector<double> p;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto x = uniform_sample(rng, 500, 0, 1);
    const auto y = uniform_sample(rng, 437, 0, 1);
    p.push_back(ks_test(x, y).p);
  }
  CHECK(chi_square_10(p) < kChi2Crit);
}

TEST_CASE("tests are invariant to common affine rescaling") {
  std::mt19937_64 rng(8);
  const auto x = normal_sample(rng, 60, 10, 3);
  const auto y = normal_sample(rng, 70, 11, 4);
  const auto w = welch_test(x, y);
  const auto k = ks_test(x, y);
  for (double scale : {0.1, 2.0, 37.0}) {
    std::vector<double> xs = x, ys = y;
    for (auto& v : xs) v = scale * v - 4.0;
    for (auto& v : ys) v = scale * v - 4.0;
    CHECK(welch_test(xs, ys).t == doctest::Approx(w.t).epsilon(1e-9));
    CHECK(welch_test(xs, ys).p == doctest::Approx(w.p).epsilon(1e-9));
    CHECK(ks_test(xs, ys).d == k.d);
  }
}

TEST_CASE("GLM recovers planted coefficients") {
  std::mt19937_64 rng(9);
  const auto rows = planted_rows(rng, 200, 0.0);
  const auto fit = glm_cv(rows, 10, 1);
  REQUIRE(fit.folds.size() == 10);
  for (const auto& f : fit.folds) {
    CHECK(std::abs(f.beta[0].estimate - 2.5) < 1e-9);
    CHECK(std::abs(f.beta[1].estimate + 1.7) < 1e-9);
    CHECK(std::abs(f.beta[2].estimate - 0.146) < 1e-9);
    CHECK(f.n_train + f.n_test == rows.size());
    CHECK(f.mse < 1e-18);
  }
  CHECK(std::abs(fit.mean[1].estimate + 1.7) < 1e-9);
  CHECK(fit.rmse_cv < 1e-9);
  CHECK(fit.pearson_r == doctest::Approx(1.0));
}

TEST_CASE("GLM noise floor") {
  std::mt19937_64 rng(10);
  const auto rows = planted_rows(rng, 1000, 3.0);
  const auto fit = glm_cv(rows, 10, 7);
  CHECK(std::abs(fit.rmse_cv - 3.0) <= 0.3);
  std::size_t tested = 0;
  double mse_mean = 0.0;
  for (const auto& f : fit.folds) {
    tested += f.n_test;
    mse_mean += f.mse / 10.0;
    for (const auto& b : f.beta) {
      CHECK(b.p >= 0.0);
      CHECK(b.p <= 1.0);
      CHECK(b.se > 0.0);
      CHECK(b.t == doctest::Approx(b.estimate / b.se));
    }
  }
  CHECK(tested == rows.size());
  CHECK(fit.rmse_cv == doctest::Approx(std::sqrt(mse_mean)));
  double m = 0.0;
  for (const auto& f : fit.folds) m += f.beta[2].estimate / 10.0;
  CHECK(fit.mean[2].estimate == doctest::Approx(m));
  CHECK(std::abs(fit.bias) < 0.5);
}

TEST_CASE("GLM folds do not depend on row order") {
  std::mt19937_64 rng(11);
  auto rows = planted_rows(rng, 300, 2.0);
  const auto a = glm_cv(rows, 10, 3);
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto b = glm_cv(rows, 10, 3);
  for (std::size_t k = 0; k < 10; ++k) {
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(a.folds[k].beta[j].estimate == doctest::Approx(b.folds[k].beta[j].estimate).epsilon(1e-12));
    }
    CHECK(a.folds[k].mse == doctest::Approx(b.folds[k].mse).epsilon(1e-12));
  }
  CHECK(a.rmse_cv == doctest::Approx(b.rmse_cv).epsilon(1e-12));
  const auto c = glm_cv(rows, 10, 4);
  CHECK(c.folds[0].mse != a.folds[0].mse);
}

TEST_CASE("GLM scaling equivariance") {
  std::mt19937_64 rng(12);
  auto rows = planted_rows(rng, 400, 1.0);
  const auto a = glm_cv(rows, 10, 5);
  const double c = 7.5;
  for (auto& r : rows) r.s_h *= c;
  const auto b = glm_cv(rows, 10, 5);
  CHECK(b.mean[1].estimate == doctest::Approx(a.mean[1].estimate / c).epsilon(1e-9));
  CHECK(b.mean[0].estimate == doctest::Approx(a.mean[0].estimate).epsilon(1e-9));
  CHECK(b.mean[1].t == doctest::Approx(a.mean[1].t).epsilon(1e-9));
  REQUIRE(a.predicted.size() == b.predicted.size());
  for (std::size_t i = 0; i < a.predicted.size(); ++i) {
    CHECK(b.predicted[i] == doctest::Approx(a.predicted[i]).epsilon(1e-9));
  }
}

TEST_CASE("GLM rejects collinear designs") {
  std::vector<GlmRow> rows;
  for (int i = 0; i < 50; ++i) rows.push_back({1.0 * i, 2.0, 5.0 * (i % 7)});
  try {
    (void)glm_cv(rows, 10, 1);
    FAIL("expected a collinearity error");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("condition number") != std::string::npos);
  }
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS((void)glm_cv(planted_rows(rng, 5, 0), 10, 1), DataError);
}

TEST_CASE("percentile examples") {
  CHECK(percentile({7.0}, 10) == 7.0);
  CHECK(percentile({7.0}, 90) == 7.0);
  std::vector<double> v;
  for (int i = 0; i <= 100; i += 10) v.push_back(i);
  CHECK(percentile(v, 50) == doctest::Approx(50.0));
  CHECK(percentile(v, 0) == 0.0);
  CHECK(percentile(v, 100) == 100.0);
  CHECK(percentile({1, 2, 3, 4}, 50) == doctest::Approx(2.5));
  CHECK(percentile({4, 1, 3, 2}, 25) == doctest::Approx(1.75));
  CHECK_THROWS_AS((void)percentile({}, 50), DataError);
}

TEST_CASE("Pearson correlation") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{2, 4, 6, 8};
  const std::vector<double> z{8, 6, 4, 2};
  CHECK(pearson_r(x, y) == doctest::Approx(1.0));
  CHECK(pearson_r(x, z) == doctest::Approx(-1.0));
}

}  // TEST_SUITE
