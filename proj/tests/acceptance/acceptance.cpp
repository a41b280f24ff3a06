// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "srtkit/analysis_stats.hpp"
#include "srtkit/estimators.hpp"
#include "srtkit/pipeline.hpp"
#include "srtkit/protocol_sim.hpp"
#include "srtkit/psychometrics.hpp"
#include "srtkit/sii_model.hpp"
#include "srtkit/uncertainty.hpp"

using namespace srtkit;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int n, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Run {
  std::vector<SimulatedPatient> cohort;
  Analysis analysis;
  OracleReport oracle;
};

Run simulate_and_score(std::size_t n, NoiseModel noise, std::uint64_t seed, unsigned workers = 1) {
  Run r;
  r.cohort = generate_cohort(n, GeneratorConfig{}, seed);
  simulate_cohort(r.cohort, noise, seed + 1);
  IngestResult ingested;
  ingested.rows = to_raw_rows(r.cohort);
  ingested.total_rows = ingested.rows.size();
  PipelineConfig config;
  config.workers = workers;
  r.analysis = analyze_rows(ingested, config, Resources::from_config(config));
  r.oracle = validate(r.cohort, r.analysis.results, EstimatorSettings::from(config));
  return r;
}

std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    files[fs::relative(e.path(), dir).generic_string()] = os.str();
  }
  return files;
}

double chi_square_10(const std::vector<double>& p) {
  std::array<double, 10> counts{};
  for (double v : p) counts[std::min<std::size_t>(9, static_cast<std::size_t>(v * 10))] += 1;
  const double expected = static_cast<double>(p.size()) / 10.0;
  double chi = 0.0;
  for (double c : counts) chi += (c - expected) * (c - expected) / expected;
  return chi;
}
constexpr double kChi2Crit = 21.666;  // 0.99 quantile, 9 df

void criterion1() {
  const PipelineConfig c;
  const bool defaults = c.srt_nh == 29.3 && c.s_wrs_nh == 4.5 && c.s_sii_nh == 0.0307 &&
                        c.delta_sii == 0.00084 && c.delta_pta == 5.0;
  const double conv = convert_slope(0.0307);
  const double ds = delta_slope_sii(0.00084);
  const bool pass = defaults && conv == 4.5 && std::abs(ds - 0.00119) <= 1e-5;
  report(1, pass, fmt("defaults=%s convert_slope(0.0307)=%.17g delta_slope_sii(0.00084)=%.6f",
                      defaults ? "ok" : "wrong", conv, ds));
}

void criterion2() {
  const auto t0 = Clock::now();
  const SiiParameters base = SiiParameters::defaults();
  const double s0 = find_linear_range(flat_audiogram(0), base).s_sii;
  const CalibrationResult cal = calibrate_spectrum(base);
  const double s_cal = find_linear_range(flat_audiogram(0), cal.params).s_sii;
  bool all = true;
  double worst = 1.0;
  for (const SiiParameters* p : {&base, &cal.params}) {
    for (std::size_t k = 0; k < kNumBisgaard; ++k) {
      const SiiCurve curve = find_linear_range(bisgaard_audiogram(k), *p);
      all = all && curve.converged && curve.r_squared >= 0.99;
      worst = std::min(worst, curve.r_squared);
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = std::abs(s0 / 0.0307 - 1.0) <= 0.30 && std::abs(s_cal - 0.0307) <= 1e-6 && all &&
                    secs < 5.0;
  report(2, pass, fmt("zero-audiogram s_sii=%.5f (%+.1f%%), calibrated=%.9f, Bisgaard min R2=%.5f, %.2f s",
                      s0, 100 * (s0 / 0.0307 - 1), s_cal, worst, secs));
}

void criterion3() {
  const auto t0 = Clock::now();
  const Run r = simulate_and_score(10000, NoiseModel::none, 2024);
  // SII-slope estimates anchored at exactly 50% return the anchor level.
  std::size_t anchored = 0, exact = 0;
  for (const auto& res : r.analysis.results) {
    const SrtEstimate* e = res.find(Procedure::sii_slope);
    if (e == nullptr || e->excluded() || e->anchor.wrs != 50) continue;
    ++anchored;
    exact += e->srt == e->anchor.level;
  }
  const PatientRecord probe{};
  for (double level : {60.0, 80.0, 100.0, 110.0}) {
    for (double s : {0.3, 1.0, 2.7, 4.5, 8.0}) {
      ++anchored;
      exact += estimate_sii_slope(probe, s, 0, {{level, 50}, false}, WrsConfidenceTable::binomial()).srt == level;
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = r.oracle.linear_range_within_1db >= 0.95 && exact == anchored && secs < 60.0;
  report(3, pass, fmt("within 1 dB: %.4f of %zu linear-range cases (need >= 0.95); 50%% anchors exact %zu/%zu; %.2f s",
                      r.oracle.linear_range_within_1db, r.oracle.linear_range_n, exact, anchored, secs));
}

Run criterion4() {
  const auto t0 = Clock::now();
  Run r = simulate_and_score(10000, NoiseModel::binomial, 77);
  const auto& emp = r.oracle.procedures[0];
  bool mono = true;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      for (int k = 0; k < 10; ++k) {
        const double dw = 1.0 + 2.5 * i, ds = 0.2 * j, s = 0.5 + 0.6 * k;
        for (int wrs = 0; wrs <= 100; wrs += 10) {
          const double v = delta_srt(wrs, dw, s, ds);
          mono = mono && delta_srt(wrs, dw + 0.5, s, ds) > v && delta_srt(wrs, dw, s, ds + 0.1) >= v &&
                 delta_srt(wrs, dw, s + 0.1, ds) < v &&
                 delta_srt(wrs >= 50 ? std::min(100, wrs + 5) : wrs - 5, dw, s, ds) >= v;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = emp.coverage >= 0.85 && emp.scored >= 1000 && mono && secs < 120.0;
  report(4, pass, fmt("empirical coverage %.4f over %zu fully-determined cases (%zu patients); grid monotone=%s; %.2f s",
                      emp.coverage, emp.scored, r.oracle.patients, mono ? "yes" : "no", secs));
  return r;
}

void criterion5(const Run& r) {
  const double f = r.oracle.procedures[0].median_delta_srt;
  const double h = r.oracle.procedures[1].median_delta_srt;
  report(5, f > h, fmt("median dSRT_f %.3f dB > median dSRT_h %.3f dB", f, h));
}

void criterion6() {
  const Run r = simulate_and_score(10000, NoiseModel::none, 606);
  const bool boundary = srt_n_min(20) == 29.3 && std::abs(srt_n_min(39.3) - 29.3) < 1e-12 &&
                        srt_n_min(60) == 50.0;
  const bool pass = r.oracle.nh_bound_n > 0 && r.oracle.nh_bound_fraction == 1.0 && boundary;
  report(6, pass,
         fmt("srt_n >= truth - 1 dB for %.4f of %zu patients (slope <= 4.5, wrs_max 100); "
             "%.4f of %zu with WRS_max point >= 50%%; srt_n_min boundaries %s",
             r.oracle.nh_bound_fraction, r.oracle.nh_bound_n, r.oracle.nh_bound_upper_fraction,
             r.oracle.nh_bound_upper_n, boundary ? "ok" : "wrong"));
}

void criterion7() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u01(0, 1);
  std::normal_distribution<double> nd(0, 1);
  std::vector<double> a(10000), b(10000), c(500), d(500);
  for (auto& v : a) v = 10 * u01(rng);
  for (auto& v : b) v = 5 + 10 * u01(rng);
  for (auto& v : c) v = u01(rng);
  for (auto& v : d) v = 3 + u01(rng);
  const double same = overlapping_index(a, a, 1);
  const double none = overlapping_index(c, d, 0.5);
  const double half = overlapping_index(a, b, 1);

  std::vector<double> pw, pk;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> x(200), y(200);
    for (auto& v : x) v = nd(rng);
    for (auto& v : y) v = 2 * nd(rng);
    pw.push_back(welch_test(x, y).p);
    std::vector<double> kx(500), ky(437);
    for (auto& v : kx) v = u01(rng);
    for (auto& v : ky) v = u01(rng);
    pk.push_back(ks_test(kx, ky).p);
  }
  const double cw = chi_square_10(pw), ck = chi_square_10(pk);
  const double secs = seconds_since(t0);
  const bool pass = std::abs(same - 1.0) < 1e-12 && none == 0.0 && std::abs(half - 0.5) <= 0.05 &&
                    cw < kChi2Crit && ck < kChi2Crit && secs < 60.0;
  report(7, pass, fmt("eta identical %.3f, disjoint %.3f, half %.4f; chi2 Welch %.2f, KS %.2f (< %.2f); %.2f s",
                      same, none, half, cw, ck, kChi2Crit, secs));
}

void criterion8() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> sh(0.5, 5), w(-35, 35);
  std::normal_distribution<double> noise(0, 3);
  auto rows = [&](std::size_t n, bool noisy) {
    std::vector<GlmRow> out(n);
    for (auto& r : out) {
      r.s_h = sh(rng);
      r.wrs_minus_50 = 5 * std::round(w(rng) / 5);
      r.srt_diff = -3.1 + 2.2 * r.s_h - 0.146 * r.wrs_minus_50 + (noisy ? noise(rng) : 0.0);
    }
    return out;
  };
  const GlmFit exact = glm_cv(rows(300, false), 10, 1);
  double worst = 0.0;
  for (const auto& f : exact.folds) {
    worst = std::max({worst, std::abs(f.beta[0].estimate + 3.1), std::abs(f.beta[1].estimate - 2.2),
                      std::abs(f.beta[2].estimate + 0.146)});
  }
  const GlmFit noisy = glm_cv(rows(1000, true), 10, 1);

  Analysis a;
  a.glm = noisy;
  std::ostringstream os;
  write_glm_csv(os, a);
  std::istringstream is(os.str());
  std::string line, header;
  std::getline(is, header);
  std::size_t lines = 0, mean_lines = 0;
  while (std::getline(is, line)) {
    ++lines;
    mean_lines += line.rfind("mean,", 0) == 0;
  }
  const bool shape = header == "k,parameter,estimate,se,tstat,p" && lines == 33 && mean_lines == 3 &&
                     noisy.folds.size() == 10;
  const bool pass = worst <= 1e-9 && std::abs(noisy.rmse_cv - 3.0) <= 0.3 && shape;
  report(8, pass, fmt("max coefficient error %.2e, rmse_cv(sigma=3) %.4f dB, table %zu rows + header (%s)",
                      worst, noisy.rmse_cv, lines, shape ? "10 folds + mean" : "wrong shape"));
}

void criterion9(const Run& r) {
  const bool a0 = plomp_components(60, 29.3).a == 0.0;
  std::size_t checked = 0, bad = 0;
  for (std::size_t i = 0; i < r.analysis.results.size(); ++i) {
    const auto& p = r.analysis.patients[i];
    for (const auto& e : r.analysis.results[i].estimates) {
      if (e.excluded()) continue;
      ++checked;
      const bool ok = std::abs(e.plomp_d - (e.srt - p.pta_spl)) < 1e-9 &&
                      std::abs(e.delta_d - (e.delta_srt - 5.0)) < 1e-9 && e.plomp_a >= 0.0;
      bad += ok ? 0 : 1;
    }
  }
  const bool lit = std::abs(delta_d(13.68) - 8.68) < 1e-12 && std::abs(delta_d(4.61) + 0.39) < 1e-12;
  report(9, a0 && bad == 0 && checked > 0 && lit,
         fmt("A(PTA 29.3)=0: %s; D and dD identities hold for %zu/%zu included estimates", a0 ? "yes" : "no",
             checked - bad, checked));
}

void criterion10() {
  const auto dir = fs::temp_directory_path() / "srtkit_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto cohort = generate_cohort(27009, GeneratorConfig{}, 27009);
  simulate_cohort(cohort, NoiseModel::binomial, 27010);
  const auto input = dir / "cohort.csv";
  {
    std::ofstream out(input, std::ios::binary);
    write_csv(out, to_raw_rows(cohort));
  }
  PipelineConfig config;
  config.input = input;

  config.output_dir = dir / "serial";
  const auto t0 = Clock::now();
  const Analysis serial = run_pipeline(config);
  const double secs = seconds_since(t0);

  config.output_dir = dir / "parallel";
  config.workers = 4;
  const auto t1 = Clock::now();
  const Analysis parallel = run_pipeline(config);
  const double secs_par = seconds_since(t1);

  const auto a = tree(dir / "serial");
  const bool identical = a == tree(dir / "parallel");
  std::size_t categorized = 0;
  for (auto c : serial.counts.categories) categorized += c;
  const bool conserved = serial.counts.conserved() && parallel.counts.conserved() &&
                         serial.counts.input_rows == 27009 && categorized == serial.counts.patients;
  fs::remove_all(dir);
  const bool pass = secs < 60.0 && identical && conserved;
  report(10, pass,
         fmt("27009 patients: serial %.2f s, 4 workers %.2f s; %zu SII curves for %zu audiograms needing one; "
             "%zu report files byte-identical=%s; conservation=%s",
             secs, secs_par, serial.counts.sii_audiograms,
             serial.counts.categories[0] + serial.counts.categories[1], a.size(), identical ? "yes" : "no",
             conserved ? "yes" : "no"));
}

}  // namespace

int main() {
  try {
    criterion1();
    criterion2();
    criterion3();
    const Run noisy = criterion4();
    criterion5(noisy);
    criterion6();
    criterion7();
    criterion8();
    criterion9(noisy);
    criterion10();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
