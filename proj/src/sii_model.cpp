#include "srtkit/sii_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "srtkit/errors.hpp"

namespace srtkit {

namespace {

// Critical-band procedure constants (ANSI S3.5-1997, Table 1): band centers and
// limits, reference internal noise spectrum level, standard speech spectrum
// level at normal vocal effort, and the average-speech importance function.
// The SPIN column redistributes the one-third-octave SPIN importance function
// (ANSI S3.5-1997, Annex B) onto the critical bands by log-frequency overlap.
const BandTable kBuiltinTable{
    1,
    {150, 250, 350, 450, 570, 700, 840, 1000, 1170, 1370, 1600,
     1850, 2150, 2500, 2900, 3400, 4000, 4800, 5800, 7000, 8500},
    {100, 200, 300, 400, 510, 630, 770, 920, 1080, 1270, 1480,
     1720, 2000, 2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700},
    {200, 300, 400, 510, 630, 770, 920, 1080, 1270, 1480, 1720,
     2000, 2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700, 9500},
    {1.5, -3.9, -7.2, -8.9, -10.3, -11.4, -12.0, -12.5, -13.2, -14.0, -15.4,
     -16.9, -18.8, -21.2, -23.2, -24.9, -25.9, -24.2, -19.0, -11.7, -6.0},
    {31.44, 34.75, 34.14, 34.58, 33.17, 30.64, 27.59, 25.01, 23.52, 22.28, 20.15,
     18.29, 16.37, 13.80, 12.21, 11.09, 9.33, 5.84, 3.47, 1.78, -0.14},
    {0.01275, 0.04875, 0.04371, 0.04821, 0.0521, 0.05657, 0.06123, 0.04983, 0.05282, 0.04845, 0.06994,
     0.06616, 0.06417, 0.06736, 0.06323, 0.05779, 0.05393, 0.04097, 0.02881, 0.01322, 0.0},
    {0.0103, 0.0261, 0.0419, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577,
     0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0577, 0.0460, 0.0343, 0.0226, 0.0110},
};

double sum(const BandArray& a) { return std::accumulate(a.begin(), a.end(), 0.0); }

bool is_duplicate(const std::vector<SiiSample>& samples, double level) {
  return std::any_of(samples.begin(), samples.end(), [level](const SiiSample& s) {
    return std::abs(s.level - level) < kLevelResolution;
  });
}

void insert_sample(std::vector<SiiSample>& samples, SiiSample s) {
  const auto pos = std::lower_bound(samples.begin(), samples.end(), s.level,
                                    [](const SiiSample& a, double l) { return a.level < l; });
  samples.insert(pos, s);
}

// Level where the piecewise-linear coarse curve first reaches `target`, walking upward.
double first_crossing(const std::vector<SiiSample>& coarse, double target) {
  if (coarse.front().sii >= target) return coarse.front().level;
  for (std::size_t i = 1; i < coarse.size(); ++i) {
    const auto& a = coarse[i - 1];
    const auto& b = coarse[i];
    if (a.sii < target && b.sii >= target) {
      return a.level + (target - a.sii) / (b.sii - a.sii) * (b.level - a.level);
    }
  }
  return coarse.back().level;
}

struct TripleChoice {
  std::size_t first = 0;
  double r_squared = -1.0;
  double slope = 0.0;
  bool found = false;
};

TripleChoice best_triple(const std::vector<SiiSample>& samples, double lo, double hi,
                         bool restrict_to_range) {
  constexpr double eps = 1e-9;
  TripleChoice best;
  for (std::size_t i = 0; i + 2 < samples.size(); ++i) {
    const auto& l = samples[i];
    const auto& u = samples[i + 2];
    if (restrict_to_range && (l.level < lo - eps || u.level > hi + eps)) continue;
    if (!(u.sii > l.sii)) continue;
    const double r2 = pearson_r_squared(std::span(samples).subspan(i, 3));
    const double slope = (u.sii - l.sii) / (u.level - l.level);
    if (!best.found || r2 > best.r_squared || (r2 == best.r_squared && slope > best.slope)) {
      best = {i, r2, slope, true};
    }
  }
  return best;
}

}  // namespace

ImportanceFunction parse_importance(std::string_view name) {
  if (name == "spin") return ImportanceFunction::spin;
  if (name == "average" || name == "average_speech") return ImportanceFunction::average_speech;
  if (name == "flat") return ImportanceFunction::flat;
  throw ConfigError("unknown band importance function '" + std::string(name) + "'");
}

const BandTable& builtin_band_table() { return kBuiltinTable; }

BandTable load_band_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open band table " + path.string());
  BandTable t;
  t.version = 0;
  std::size_t band = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string first;
    if (!(fields >> first)) continue;
    if (first == "version") {
      if (!(fields >> t.version)) throw ConfigError("band table: malformed version line");
      continue;
    }
    if (band >= kNumBands) throw ConfigError("band table: more than 21 bands");
    std::istringstream row(line);
    int index = 0;
    if (!(row >> index >> t.center[band] >> t.lower[band] >> t.upper[band] >>
          t.internal_noise[band] >> t.speech_spectrum[band] >> t.importance_spin[band] >>
          t.importance_average[band])) {
      throw ConfigError("band table line " + std::to_string(line_no) + ": expected 8 columns");
    }
    if (index != static_cast<int>(band) + 1) {
      throw ConfigError("band table line " + std::to_string(line_no) + ": bands out of order");
    }
    ++band;
  }
  if (band != kNumBands) throw ConfigError("band table must list exactly 21 bands");
  if (t.version != 1) throw ConfigError("unsupported band table version");
  return t;
}

void write_band_table(std::ostream& out, const BandTable& t) {
  out << "# SII critical-band table\n"
      << "# band center_hz lower_hz upper_hz internal_noise_db speech_spectrum_db "
         "importance_spin importance_average\n"
      << "version " << t.version << '\n';
  out << std::setprecision(10);
  for (std::size_t i = 0; i < kNumBands; ++i) {
    out << i + 1 << ' ' << t.center[i] << ' ' << t.lower[i] << ' ' << t.upper[i] << ' '
        << t.internal_noise[i] << ' ' << t.speech_spectrum[i] << ' ' << t.importance_spin[i]
        << ' ' << t.importance_average[i] << '\n';
  }
}

SiiParameters SiiParameters::from_table(const BandTable& table, ImportanceFunction importance) {
  SiiParameters p;
  p.band_centers = table.center;
  p.band_lower = table.lower;
  p.band_upper = table.upper;
  p.internal_noise = table.internal_noise;
  p.standard_speech_spectrum = table.speech_spectrum;
  p.speech_spectrum = table.speech_spectrum;
  switch (importance) {
    case ImportanceFunction::spin: p.band_importance = table.importance_spin; break;
    case ImportanceFunction::average_speech: p.band_importance = table.importance_average; break;
    case ImportanceFunction::flat: p.band_importance.fill(1.0 / kNumBands); break;
  }
  p.validate();
  return p;
}

double SiiParameters::reference_level() const {
  double power = 0.0;
  for (std::size_t i = 0; i < kNumBands; ++i) {
    power += std::pow(10.0, speech_spectrum[i] / 10.0) * (band_upper[i] - band_lower[i]);
  }
  return 10.0 * std::log10(power);
}

void SiiParameters::validate() const {
  for (double w : band_importance) {
    if (w < 0.0) throw ConfigError("band importance weights must be non-negative");
  }
  if (std::abs(sum(band_importance) - 1.0) > 1e-9) {
    throw ConfigError("band importance weights must sum to 1");
  }
  for (std::size_t i = 0; i < kNumBands; ++i) {
    if (!(band_upper[i] > band_lower[i])) throw ConfigError("band limits must be increasing");
  }
}

BandArray band_thresholds(const Audiogram& audiogram, const SiiParameters& params) {
  BandArray out{};
  const auto& f = kAudiogramFrequencies;
  for (std::size_t b = 0; b < kNumBands; ++b) {
    const double fc = params.band_centers[b];
    if (fc <= f.front()) {
      out[b] = audiogram.thresholds.front();
    } else if (fc >= f.back()) {
      out[b] = audiogram.thresholds.back();
    } else {
      std::size_t hi = 1;
      while (f[hi] < fc) ++hi;
      const double x = std::log(fc);
      const double x0 = std::log(static_cast<double>(f[hi - 1]));
      const double x1 = std::log(static_cast<double>(f[hi]));
      const double w = (x - x0) / (x1 - x0);
      out[b] = (1.0 - w) * audiogram.thresholds[hi - 1] + w * audiogram.thresholds[hi];
    }
  }
  return out;
}

double compute_sii(const Audiogram& audiogram, double speech_level, const SiiParameters& params) {
  if (!(speech_level >= kMinSpeechLevel && speech_level <= kMaxSpeechLevel)) {
    throw ModelError("speech level outside [-10, 130] dB SPL");
  }
  const double ref = params.reference_level();
  const double speech_gain = speech_level - ref;
  const double noise_gain = params.noise_level_overall - ref;
  const BandArray thresholds = band_thresholds(audiogram, params);
  const auto& fc = params.band_centers;

  BandArray speech{}, noise{}, masker{}, spread_slope{};
  for (std::size_t i = 0; i < kNumBands; ++i) {
    speech[i] = params.speech_spectrum[i] + speech_gain;
    noise[i] = params.speech_spectrum[i] + noise_gain;
    const double self_masking = speech[i] - 24.0;
    masker[i] = std::max(noise[i], self_masking);
    spread_slope[i] =
        -80.0 + 0.6 * (masker[i] + 10.0 * std::log10(params.band_upper[i] - params.band_lower[i]));
  }

  double sii = 0.0;
  for (std::size_t i = 0; i < kNumBands; ++i) {
    double masking;
    if (i == 0) {
      masking = masker[0];
    } else {
      double power = std::pow(10.0, 0.1 * noise[i]);
      for (std::size_t k = 0; k < i; ++k) {
        power += std::pow(10.0, 0.1 * (masker[k] + 3.32 * spread_slope[k] *
                                                      std::log10(0.89 * fc[i] / fc[k])));
      }
      masking = 10.0 * std::log10(power);
    }
    const double internal = params.internal_noise[i] + thresholds[i];
    const double disturbance = std::max(masking, internal);
    double distortion = 1.0;
    if (params.level_distortion_enabled) {
      distortion = 1.0 - (speech[i] - params.standard_speech_spectrum[i] - 10.0) / 160.0;
      distortion = std::clamp(distortion, 0.0, 1.0);
    }
    const double audibility = std::clamp((speech[i] - disturbance + 15.0) / 30.0, 0.0, 1.0);
    sii += params.band_importance[i] * distortion * audibility;
  }
  return std::clamp(sii, 0.0, 1.0);
}

double pearson_r_squared(std::span<const SiiSample> samples) {
  const double n = static_cast<double>(samples.size());
  if (samples.size() < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (const auto& s : samples) {
    mx += s.level;
    my += s.sii;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (const auto& s : samples) {
    sxx += (s.level - mx) * (s.level - mx);
    syy += (s.sii - my) * (s.sii - my);
    sxy += (s.level - mx) * (s.sii - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::min(1.0, sxy * sxy / (sxx * syy));
}

SiiCurve find_linear_range(const Audiogram& audiogram, const SiiParameters& params) {
  SiiCurve curve;
  auto sample = [&](double level) { return SiiSample{level, compute_sii(audiogram, level, params)}; };

  std::vector<SiiSample> coarse;
  for (double level : {10.0, 40.0, 70.0, 100.0}) coarse.push_back(sample(level));
  auto peak = [&] {
    return std::max_element(coarse.begin(), coarse.end(),
                            [](const SiiSample& a, const SiiSample& b) { return a.sii < b.sii; })
        ->sii;
  };
  // Still rising at the top of the grid: look once more at the upper level limit.
  // A curve that is zero up to 100 dB counts as flat.
  if (coarse.back().sii > 0.0 && coarse.back().sii >= peak()) coarse.push_back(sample(kMaxSpeechLevel));
  const double max_sii = peak();
  if (!(max_sii > 0.0)) throw ModelError("no positive slope");

  curve.range_low = first_crossing(coarse, 0.1 * max_sii);
  curve.range_high = first_crossing(coarse, 0.9 * max_sii);
  curve.samples = coarse;
  const double step = (curve.range_high - curve.range_low) / 3.0;
  for (int k = 0; k < 4; ++k) {
    const double level = curve.range_low + step * k;
    if (!is_duplicate(curve.samples, level)) insert_sample(curve.samples, sample(level));
  }

  while (true) {
    TripleChoice choice = best_triple(curve.samples, curve.range_low, curve.range_high, true);
    if (!choice.found) choice = best_triple(curve.samples, 0.0, 0.0, false);
    if (!choice.found) throw ModelError("no positive slope");

    const auto& s = curve.samples;
    curve.best_triple = {s[choice.first], s[choice.first + 1], s[choice.first + 2]};
    curve.r_squared = choice.r_squared;
    curve.s_sii = choice.slope;
    if (choice.r_squared >= kLinearityTarget) {
      curve.converged = true;
      break;
    }
    // Midpoint of the wider gap first, then of the narrower one.
    const auto& [l, m, u] = curve.best_triple;
    std::array<double, 2> proposals{(l.level + m.level) / 2.0, (m.level + u.level) / 2.0};
    if (u.level - m.level > m.level - l.level) std::swap(proposals[0], proposals[1]);
    bool inserted = false;
    for (double level : proposals) {
      if (!is_duplicate(curve.samples, level)) {
        insert_sample(curve.samples, sample(level));
        inserted = true;
        break;
      }
    }
    if (!inserted) {
      curve.converged = false;
      break;
    }
  }
  return curve;
}

double convert_slope(double s_sii, double s_wrs_nh, double s_sii_nh) {
  return s_sii / s_sii_nh * s_wrs_nh;
}

SiiParameters with_spectrum_contrast(const SiiParameters& base, double contrast) {
  SiiParameters p = base;
  double mean_snr = 0.0;
  for (std::size_t i = 0; i < kNumBands; ++i) mean_snr += base.speech_spectrum[i] - base.internal_noise[i];
  mean_snr /= static_cast<double>(kNumBands);
  for (std::size_t i = 0; i < kNumBands; ++i) {
    const double deviation = base.speech_spectrum[i] - base.internal_noise[i] - mean_snr;
    p.speech_spectrum[i] = base.internal_noise[i] + mean_snr + contrast * deviation;
  }
  return p;
}

CalibrationResult calibrate_spectrum(const SiiParameters& base, double target) {
  const Audiogram zero = flat_audiogram(0.0);
  auto slope_at = [&](double contrast) {
    return find_linear_range(zero, with_spectrum_contrast(base, contrast)).s_sii;
  };

  // The slope falls as spectral contrast grows; bracket the target first.
  double lo = 0.0;
  double hi = 1.0;
  if (slope_at(lo) < target) throw ModelError("calibration target exceeds the flat-spectrum slope");
  while (slope_at(hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 64.0) throw ModelError("calibration target not reachable by spectrum rescaling");
  }
  double mid = hi;
  double achieved = slope_at(hi);
  for (int iter = 0; iter < 200 && std::abs(achieved - target) > 1e-12; ++iter) {
    mid = 0.5 * (lo + hi);
    achieved = slope_at(mid);
    if (achieved > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-15) break;
  }
  if (std::abs(achieved - target) > 1e-6) {
    std::ostringstream msg;
    msg << "calibration stopped at slope " << achieved << " for target " << target;
    throw ModelError(msg.str());
  }
  return {with_spectrum_contrast(base, mid), mid, achieved};
}

}  // namespace srtkit
