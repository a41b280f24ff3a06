#include "srtkit/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>

#include "srtkit/errors.hpp"

namespace srtkit {

namespace {

std::size_t row_index(int wrs) {
  if (wrs < 0 || wrs > 100 || wrs % 5 != 0) {
    throw DataError("WRS " + std::to_string(wrs) + " is not in the confidence table");
  }
  return static_cast<std::size_t>(wrs / 5);
}

}  // namespace

WrsConfidenceTable WrsConfidenceTable::binomial(int trials, double confidence) {
  if (trials != 20) throw ConfigError("the WRS table covers 20-word lists only");
  const double alpha = 1.0 - confidence;
  WrsConfidenceTable t;
  t.source_ = Source::builtin_binomial;
  for (int k = 0; k <= trials; ++k) {
    Interval iv;
    iv.low = k == 0 ? 0.0 : boost::math::ibeta_inv(k, trials - k + 1, alpha / 2.0);
    iv.high = k == trials ? 1.0 : boost::math::ibeta_inv(k + 1, trials - k, 1.0 - alpha / 2.0);
    iv.low *= 100.0;
    iv.high *= 100.0;
    t.rows_[static_cast<std::size_t>(k)] = iv;
  }
  return t;
}

WrsConfidenceTable WrsConfidenceTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CI table " + path.string());
  WrsConfidenceTable t;
  t.source_ = Source::external;
  std::array<bool, 21> seen{};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double wrs = 0.0, lo = 0.0, hi = 0.0;
    if (!(fields >> wrs)) continue;
    if (!(fields >> lo >> hi)) {
      throw ConfigError("CI table line " + std::to_string(line_no) + ": expected wrs, ci_low, ci_high");
    }
    if (std::fmod(wrs, 5.0) != 0.0 || wrs < 0.0 || wrs > 100.0 || lo > wrs || hi < wrs) {
      throw ConfigError("CI table line " + std::to_string(line_no) + ": invalid row");
    }
    const auto idx = row_index(static_cast<int>(wrs));
    t.rows_[idx] = {lo, hi};
    seen[idx] = true;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw ConfigError("CI table " + path.string() + " must list every WRS from 0 to 100 in steps of 5");
  }
  return t;
}

const WrsConfidenceTable::Interval& WrsConfidenceTable::interval(int wrs) const {
  return rows_[row_index(wrs)];
}

WrsError wrs_ci(int wrs, const WrsConfidenceTable& table) {
  const auto& iv = table.interval(wrs);
  WrsError e;
  e.delta_low = wrs - iv.low;
  e.delta_high = iv.high - wrs;
  e.delta = std::max(e.delta_low, e.delta_high);
  return e;
}

double delta_slope_empirical(double delta_wrs_upper, double delta_wrs_lower, double level_upper,
                             double level_lower) {
  if (level_upper == level_lower) throw ModelError("slope error needs two distinct levels");
  return (delta_wrs_upper + delta_wrs_lower) / std::abs(level_upper - level_lower);
}

double delta_slope_sii(double delta_sii) { return std::sqrt(2.0 * delta_sii * delta_sii); }

double delta_slope_sii_converted(double delta_sii, double level_span, double s_wrs_nh,
                                 double s_sii_nh) {
  if (!(level_span > 0.0)) throw ModelError("level span must be positive");
  return delta_slope_sii(delta_sii) / level_span * (s_wrs_nh / s_sii_nh);
}

double delta_srt(double wrs, double delta_wrs, double slope, double delta_slope) {
  if (!(slope > 0.0)) throw ModelError("non-positive slope");
  return delta_wrs / slope + std::abs(wrs - 50.0) * delta_slope / (slope * slope);
}

double delta_d(double delta_srt_value, double delta_pta) { return delta_srt_value - delta_pta; }

}  // namespace srtkit
