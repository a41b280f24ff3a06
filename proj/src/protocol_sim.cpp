#include "srtkit/protocol_sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "srtkit/errors.hpp"

namespace srtkit {

namespace {

// Bisgaard, Vlaming & Dahlquist (2010), standard audiograms for the IEC 60118-15
// measurement procedure. Columns: 250, 375, 500, 750, 1000, 1500, 2000, 3000, 4000, 6000 Hz.
constexpr std::array<std::array<double, 10>, kNumBisgaard> kBisgaard{{
    {10, 10, 10, 10, 10, 10, 15, 20, 30, 40},
    {20, 20, 20, 22.5, 25, 30, 35, 40, 45, 50},
    {35, 35, 35, 35, 40, 45, 50, 55, 60, 65},
    {55, 55, 55, 55, 55, 60, 65, 70, 75, 80},
    {65, 67.5, 70, 72.5, 75, 80, 80, 80, 80, 80},
    {75, 77.5, 80, 82.5, 85, 90, 90, 95, 100, 100},
    {90, 92.5, 95, 100, 105, 105, 105, 105, 105, 105},
    {10, 10, 10, 10, 10, 10, 15, 30, 55, 70},
    {20, 20, 20, 22.5, 25, 35, 55, 75, 95, 95},
    {30, 30, 35, 47.5, 60, 70, 75, 80, 80, 85},
}};
// Column of kBisgaard for each audiogram frequency.
constexpr std::array<std::size_t, kNumAudiogramFrequencies> kBisgaardColumn{0, 2, 4, 5, 6, 7, 8, 9, 9};

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

int quantize_wrs(double wrs) { return static_cast<int>(5.0 * std::round(wrs / 5.0)); }

std::string patient_id(std::size_t index) {
  std::ostringstream os;
  os << "sim" << std::setw(7) << std::setfill('0') << index + 1;
  return os.str();
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

const std::string& bisgaard_name(std::size_t index) {
  static const std::array<std::string, kNumBisgaard> names{"N1", "N2", "N3", "N4", "N5",
                                                           "N6", "N7", "S1", "S2", "S3"};
  if (index >= kNumBisgaard) throw ConfigError("Bisgaard class index out of range");
  return names[index];
}

Audiogram bisgaard_audiogram(std::size_t index) {
  if (index >= kNumBisgaard) throw ConfigError("Bisgaard class index out of range");
  Audiogram a;
  for (std::size_t i = 0; i < kNumAudiogramFrequencies; ++i) {
    a.thresholds[i] = kBisgaard[index][kBisgaardColumn[i]];
  }
  return a;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void GeneratorConfig::validate() const {
  if (!(srt_offset_min <= srt_offset_max)) throw ConfigError("srt offset range is empty");
  if (srt_offset_min < -10.0) {
    throw ConfigError("srt offset below -10 dB would put the truth under the audibility limit");
  }
  if (!(slope_min > 0.0 && slope_min <= slope_max)) throw ConfigError("slope range must be positive");
  if (wrs_max_min % 5 != 0 || wrs_max_max % 5 != 0 || wrs_max_min <= 0 || wrs_max_max > 100 ||
      wrs_max_min > wrs_max_max) {
    throw ConfigError("wrs_max range must hold multiples of 5 in (0, 100]");
  }
  if (!(jitter >= 0.0) || !(jitter_step > 0.0)) throw ConfigError("jitter must be non-negative");
  if (classes.empty()) throw ConfigError("no audiogram classes selected");
  for (auto c : classes) {
    if (c >= kNumBisgaard) throw ConfigError("Bisgaard class index out of range");
  }
}

NoiseModel parse_noise(std::string_view text) {
  if (text == "none") return NoiseModel::none;
  if (text == "binomial") return NoiseModel::binomial;
  throw ConfigError("noise must be none or binomial");
}

double truth_l50(const PsychometricFunction& truth) {
  if (!(truth.wrs_max > 50.0)) return std::numeric_limits<double>::quiet_NaN();
  return level_at(truth, 50.0);
}

std::vector<SimulatedPatient> generate_cohort(std::size_t n, const GeneratorConfig& config,
                                              std::uint64_t seed) {
  if (n < 1) throw ConfigError("cohort size must be at least 1");
  config.validate();
  const auto steps = static_cast<std::uint64_t>(std::floor(config.jitter / config.jitter_step + 1e-9));
  const auto wrs_steps = static_cast<std::uint64_t>((config.wrs_max_max - config.wrs_max_min) / 5);

  std::vector<SimulatedPatient> cohort(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = stream_engine(seed, i);
    SimulatedPatient& p = cohort[i];
    p.id = patient_id(i);
    p.seed = seed;
    p.bisgaard_class = config.classes[bounded(rng, config.classes.size())];
    p.audiogram = bisgaard_audiogram(p.bisgaard_class);
    for (auto& t : p.audiogram.thresholds) {
      const auto k = static_cast<double>(bounded(rng, 2 * steps + 1)) - static_cast<double>(steps);
      t = std::clamp(t + k * config.jitter_step, kMinThresholdHl, kMaxThresholdHl);
    }
    const Pta pta = compute_pta(p.audiogram, config.offsets);
    p.pta_hl = pta.hl;
    p.pta_spl = pta.spl;
    const double offset =
        config.srt_offset_min + uniform01(rng) * (config.srt_offset_max - config.srt_offset_min);
    p.truth.srt = p.pta_spl + offset;
    p.truth.slope = config.slope_min + uniform01(rng) * (config.slope_max - config.slope_min);
    p.truth.wrs_max = config.wrs_max_min + 5.0 * static_cast<double>(bounded(rng, wrs_steps + 1));
  }
  return cohort;
}

SpeechMeasurement simulate_protocol(const PsychometricFunction& truth, NoiseModel noise,
                                    std::mt19937_64& rng, StopRule stop) {
  SpeechMeasurement m;
  std::optional<int> previous;
  for (int level : kSpeechLevels) {
    const double expected = evaluate(truth, level);
    int wrs = 0;
    if (noise == NoiseModel::none) {
      wrs = quantize_wrs(expected);
    } else {
      const double p = std::clamp(expected / 100.0, 0.0, 1.0);
      int hits = 0;
      for (int trial = 0; trial < 20; ++trial) hits += uniform01(rng) < p ? 1 : 0;
      wrs = 5 * hits;
    }
    m.points.push_back({static_cast<double>(level), wrs});
    if (wrs >= 100) break;
    if (stop == StopRule::one_word && previous && wrs <= *previous + 5) break;
    previous = wrs;
  }
  return m;
}

void simulate_cohort(std::span<SimulatedPatient> cohort, NoiseModel noise, std::uint64_t noise_seed,
                     StopRule stop) {
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    auto rng = stream_engine(noise_seed, i);
    cohort[i].measurements = simulate_protocol(cohort[i].truth, noise, rng, stop);
  }
}

std::vector<RawRow> to_raw_rows(std::span<const SimulatedPatient> cohort) {
  std::vector<RawRow> rows;
  rows.reserve(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& p = cohort[i];
    RawRow r;
    r.line = i + 2;
    r.id = p.id;
    r.ear = Ear::right;
    for (std::size_t f = 0; f < kNumAudiogramFrequencies; ++f) r.audiogram[f] = p.audiogram.thresholds[f];
    r.speech = p.measurements;
    rows.push_back(std::move(r));
  }
  return rows;
}

PatientRecord to_record(const SimulatedPatient& p) {
  PatientRecord r;
  r.id = p.id;
  r.ear = Ear::right;
  r.audiogram = p.audiogram;
  r.speech = p.measurements;
  r.pta_hl = p.pta_hl;
  r.pta_spl = p.pta_spl;
  return r;
}

void write_truth_csv(std::ostream& out, std::span<const SimulatedPatient> cohort) {
  out << "id,class,srt,slope,wrs_max,l50,pta_hl,pta_spl\n";
  out << std::setprecision(10);
  for (const auto& p : cohort) {
    out << p.id << ',' << bisgaard_name(p.bisgaard_class) << ',' << p.truth.srt << ','
        << p.truth.slope << ',' << p.truth.wrs_max << ',';
    const double l50 = truth_l50(p.truth);
    if (std::isfinite(l50)) out << l50;
    out << ',' << p.pta_hl << ',' << p.pta_spl << '\n';
  }
}

OracleReport validate(std::span<const SimulatedPatient> cohort, std::span<const PatientResult> results,
                      const EstimatorSettings& settings) {
  std::map<std::string, const SimulatedPatient*> by_id;
  for (const auto& p : cohort) by_id.emplace(p.id, &p);

  OracleReport report;
  report.patients = results.size();
  struct Acc {
    std::vector<double> err;
    std::vector<double> delta;
    std::size_t covered = 0;
  };
  std::array<Acc, 3> acc;
  for (std::size_t k = 0; k < 3; ++k) report.procedures[k].procedure = static_cast<Procedure>(k);
  std::size_t linear_hits = 0;

  for (const auto& r : results) {
    const auto it = by_id.find(r.id);
    if (it == by_id.end()) continue;
    const SimulatedPatient& sim = *it->second;
    ++report.categories[static_cast<std::size_t>(r.category.kind)];
    const double l50 = truth_l50(sim.truth);

    for (const auto& e : r.estimates) {
      const auto k = static_cast<std::size_t>(e.procedure);
      auto& pr = report.procedures[k];
      ++pr.rows;
      if (e.procedure == Procedure::empirical && std::isfinite(e.srt) && std::isfinite(l50)) {
        auto central = [&](double wrs) {
          const double frac = wrs / sim.truth.wrs_max;
          return frac >= 0.25 && frac <= 0.75;
        };
        bool inside = central(50.0);
        for (const auto& pt : e.fit_points) inside = inside && central(evaluate(sim.truth, pt.level));
        if (inside) {
          ++report.linear_range_n;
          if (std::abs(e.srt - l50) <= 1.0) ++linear_hits;
        }
      }
      if (e.excluded() || !std::isfinite(e.srt)) continue;
      ++pr.included;
      acc[k].delta.push_back(e.delta_srt);
      if (!std::isfinite(l50)) continue;
      ++pr.scored;
      acc[k].err.push_back(e.srt - l50);
      const bool covered = e.procedure == Procedure::nh_slope
                               ? (l50 >= e.srt_min && l50 <= e.srt)
                               : std::abs(e.srt - l50) <= e.delta_srt;
      if (covered) ++acc[k].covered;
    }
  }

  for (std::size_t k = 0; k < 3; ++k) {
    auto& pr = report.procedures[k];
    const auto& a = acc[k];
    pr.median_delta_srt = median(a.delta);
    if (a.err.empty()) {
      pr.bias = pr.rmse = pr.coverage = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double s = 0.0, sq = 0.0;
    for (double e : a.err) {
      s += e;
      sq += e * e;
    }
    const auto n = static_cast<double>(a.err.size());
    pr.bias = s / n;
    pr.rmse = std::sqrt(sq / n);
    pr.coverage = static_cast<double>(a.covered) / n;
  }
  report.linear_range_within_1db =
      report.linear_range_n > 0 ? static_cast<double>(linear_hits) / static_cast<double>(report.linear_range_n)
                                : std::numeric_limits<double>::quiet_NaN();

  std::size_t bound_hits = 0, upper_hits = 0;
  for (const auto& sim : cohort) {
    if (sim.truth.slope > settings.s_wrs_nh || sim.truth.wrs_max != 100.0) continue;
    if (sim.measurements.empty()) continue;
    const SrtEstimate e = estimate_nh_slope(to_record(sim), settings);
    const bool ok = e.srt >= sim.truth.srt - 1.0;
    ++report.nh_bound_n;
    if (ok) ++bound_hits;
    if (sim.measurements.wrs_max() >= 50) {
      ++report.nh_bound_upper_n;
      if (ok) ++upper_hits;
    }
  }
  auto frac = [](std::size_t hits, std::size_t n) {
    return n > 0 ? static_cast<double>(hits) / static_cast<double>(n)
                 : std::numeric_limits<double>::quiet_NaN();
  };
  report.nh_bound_fraction = frac(bound_hits, report.nh_bound_n);
  report.nh_bound_upper_fraction = frac(upper_hits, report.nh_bound_upper_n);
  return report;
}

void write_oracle_report(std::ostream& out, const OracleReport& r) {
  out << "metric,procedure,value\n";
  out << std::setprecision(10);
  out << "patients,," << r.patients << '\n';
  for (std::size_t k = 0; k < 4; ++k) {
    out << "category_" << to_string(static_cast<SlopeKind>(k)) << ",," << r.categories[k] << '\n';
  }
  for (const auto& pr : r.procedures) {
    const std::string name = to_string(pr.procedure);
    out << "rows," << name << ',' << pr.rows << '\n';
    out << "included," << name << ',' << pr.included << '\n';
    out << "scored," << name << ',' << pr.scored << '\n';
    out << "bias_db," << name << ',' << pr.bias << '\n';
    out << "rmse_db," << name << ',' << pr.rmse << '\n';
    out << "coverage," << name << ',' << pr.coverage << '\n';
    out << "median_delta_srt_db," << name << ',' << pr.median_delta_srt << '\n';
  }
  out << "linear_range_n,empirical," << r.linear_range_n << '\n';
  out << "linear_range_within_1db,empirical," << r.linear_range_within_1db << '\n';
  out << "nh_bound_n,nh_slope," << r.nh_bound_n << '\n';
  out << "nh_bound_fraction,nh_slope," << r.nh_bound_fraction << '\n';
  out << "nh_bound_upper_n,nh_slope," << r.nh_bound_upper_n << '\n';
  out << "nh_bound_upper_fraction,nh_slope," << r.nh_bound_upper_fraction << '\n';
}

}  // namespace srtkit
