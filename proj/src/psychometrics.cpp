#include "srtkit/psychometrics.hpp"

#include <algorithm>
#include <cmath>

#include "srtkit/errors.hpp"

namespace srtkit {

namespace {

double rate(const PsychometricFunction& f) { return 4.0 * f.slope / 100.0; }

}  // namespace

double evaluate(const PsychometricFunction& f, double level) {
  return f.wrs_max / (1.0 + std::exp(rate(f) * (f.srt - level)));
}

double derivative(const PsychometricFunction& f, double level) {
  const double e = std::exp(rate(f) * (f.srt - level));
  return f.wrs_max * rate(f) * e / ((1.0 + e) * (1.0 + e));
}

double level_at(const PsychometricFunction& f, double wrs) {
  if (!(wrs > 0.0 && wrs < f.wrs_max)) throw ModelError("level_at: WRS outside (0, wrs_max)");
  return f.srt - std::log(f.wrs_max / wrs - 1.0) / rate(f);
}

LinearSegment fit_line(std::span<const SpeechPoint> points) {
  if (points.size() < 2) throw ModelError("fit_line needs at least two points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i].level == points[j].level) throw ModelError("degenerate abscissae");
    }
  }
  LinearSegment seg;
  seg.fit_points.assign(points.begin(), points.end());
  std::sort(seg.fit_points.begin(), seg.fit_points.end(),
            [](const SpeechPoint& a, const SpeechPoint& b) { return a.level < b.level; });

  if (points.size() == 2) {
    const auto& lo = seg.fit_points[0];
    const auto& hi = seg.fit_points[1];
    seg.slope = static_cast<double>(hi.wrs - lo.wrs) / (hi.level - lo.level);
    seg.intercept = lo.wrs - seg.slope * lo.level;
    return seg;
  }
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.level;
    my += p.wrs;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    sxx += (p.level - mx) * (p.level - mx);
    sxy += (p.level - mx) * (p.wrs - my);
  }
  seg.slope = sxy / sxx;
  seg.intercept = my - seg.slope * mx;
  return seg;
}

double line_to_srt(const LinearSegment& seg) {
  if (!(seg.slope > 0.0)) throw ModelError("non-positive slope");
  // Anchored at the centroid of the fit points, which every fitted line passes through.
  double mx = 0.0, my = 0.0;
  for (const auto& p : seg.fit_points) {
    mx += p.level;
    my += p.wrs;
  }
  if (seg.fit_points.empty()) return (50.0 - seg.intercept) / seg.slope;
  const double n = static_cast<double>(seg.fit_points.size());
  return srt_from_anchor(mx / n, my / n, seg.slope);
}

double srt_from_anchor(double level, double wrs, double slope) {
  if (!(slope > 0.0)) throw ModelError("non-positive slope");
  return level - (wrs - 50.0) / slope;
}

double invert_nh_logistic(double level, double wrs, double nh_slope) {
  const double w = std::clamp(wrs, kNhClampLow, kNhClampHigh);
  return level + std::log(100.0 / w - 1.0) / (4.0 * nh_slope / 100.0);
}

}  // namespace srtkit
