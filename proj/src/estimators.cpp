#include "srtkit/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "srtkit/errors.hpp"
#include "srtkit/psychometrics.hpp"

namespace srtkit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Smallest |wrs - 50|, ties resolved by level.
const SpeechPoint* closest_to_half(const std::vector<const SpeechPoint*>& candidates,
                                   AnchorTieBreak tie) {
  const SpeechPoint* best = nullptr;
  for (const SpeechPoint* p : candidates) {
    if (best == nullptr) {
      best = p;
      continue;
    }
    const int dp = std::abs(p->wrs - 50);
    const int db = std::abs(best->wrs - 50);
    if (dp < db) {
      best = p;
    } else if (dp == db) {
      const bool lower = p->level < best->level;
      if (lower == (tie == AnchorTieBreak::lower_level)) best = p;
    }
  }
  return best;
}

}  // namespace

std::string to_string(Procedure p) {
  switch (p) {
    case Procedure::empirical: return "empirical";
    case Procedure::sii_slope: return "sii_slope";
    case Procedure::nh_slope: return "nh_slope";
  }
  return "unknown";
}

std::string exclusion_reason(std::uint32_t flags) {
  static constexpr std::pair<std::uint32_t, const char*> kNames[] = {
      {kNonPositiveEmpiricalSlope, "non-positive empirical slope"},
      {kDegenerateSiiSlope, "degenerate SII slope"},
      {kNoPositiveSiiSlope, "no positive SII slope"},
      {kBelowPta, "SRT < PTA - 10"},
  };
  std::string out;
  for (const auto& [flag, name] : kNames) {
    if ((flags & flag) == 0) continue;
    if (!out.empty()) out += ';';
    out += name;
  }
  return out;
}

EstimatorSettings EstimatorSettings::from(const PipelineConfig& c) {
  EstimatorSettings s;
  s.srt_nh = c.srt_nh;
  s.s_wrs_nh = c.s_wrs_nh;
  s.delta_pta = c.delta_pta;
  s.anchor_tie = c.anchor_tie_break;
  return s;
}

Anchor select_anchor(const PatientRecord& p, const SlopeCategory& cat, const EstimatorSettings& s) {
  if (cat.kind == SlopeKind::half_determined) return {cat.slope_area_points.front(), false};
  if (cat.kind != SlopeKind::fully_determined) {
    throw ModelError("anchor requested for a patient without slope-area points");
  }
  std::vector<const SpeechPoint*> audible, all;
  for (const auto& pt : cat.slope_area_points) {
    all.push_back(&pt);
    if (pt.level >= p.pta_spl - s.audibility_margin) audible.push_back(&pt);
  }
  if (!audible.empty()) return {*closest_to_half(audible, s.anchor_tie), false};
  return {*closest_to_half(all, s.anchor_tie), true};
}

SrtEstimate estimate_empirical(const PatientRecord& p, const SlopeCategory& cat,
                               const WrsConfidenceTable& table, const EstimatorSettings& s) {
  if (cat.kind != SlopeKind::fully_determined) {
    throw ModelError("empirical estimate needs two slope-area points");
  }
  SrtEstimate e;
  e.procedure = Procedure::empirical;
  e.fit_points = cat.slope_area_points;
  const Anchor anchor = select_anchor(p, cat, s);
  e.anchor = anchor.point;
  e.inaudible_anchor = anchor.inaudible_fallback;

  const LinearSegment seg = fit_line(cat.slope_area_points);
  e.slope_used = seg.slope;
  if (!(seg.slope > 0.0)) {
    e.srt = kNaN;
    e.delta_srt = kNaN;
    e.delta_slope = kNaN;
    e.exclusion |= kNonPositiveEmpiricalSlope;
    attach_plomp(e, p.pta_spl, s);
    return e;
  }
  e.srt = line_to_srt(seg);

  const SpeechPoint& lower = cat.slope_area_points.front();
  const SpeechPoint& upper = cat.slope_area_points.back();
  e.delta_slope = delta_slope_empirical(wrs_ci(upper.wrs, table).delta, wrs_ci(lower.wrs, table).delta,
                                        upper.level, lower.level);
  e.delta_srt = delta_srt(e.anchor.wrs, wrs_ci(e.anchor.wrs, table).delta, e.slope_used, e.delta_slope);
  apply_consistency_filter(e, p.pta_spl, s.audibility_margin);
  attach_plomp(e, p.pta_spl, s);
  return e;
}

SrtEstimate estimate_sii_slope(const PatientRecord& p, double s_h, double delta_s_h,
                               const Anchor& anchor, const WrsConfidenceTable& table,
                               const EstimatorSettings& s) {
  SrtEstimate e;
  e.procedure = Procedure::sii_slope;
  e.anchor = anchor.point;
  e.inaudible_anchor = anchor.inaudible_fallback;
  e.fit_points = {anchor.point};
  e.slope_used = s_h;
  e.delta_slope = delta_s_h;
  if (!(s_h > 0.0) || !std::isfinite(s_h)) {
    e.srt = kNaN;
    e.delta_srt = kNaN;
    e.exclusion |= kDegenerateSiiSlope;
    attach_plomp(e, p.pta_spl, s);
    return e;
  }
  e.srt = srt_from_anchor(anchor.point.level, anchor.point.wrs, s_h);
  e.delta_srt = delta_srt(anchor.point.wrs, wrs_ci(anchor.point.wrs, table).delta, s_h, delta_s_h);
  apply_consistency_filter(e, p.pta_spl, s.audibility_margin);
  attach_plomp(e, p.pta_spl, s);
  return e;
}

SrtEstimate estimate_nh_slope(const PatientRecord& p, const EstimatorSettings& s) {
  SrtEstimate e;
  e.procedure = Procedure::nh_slope;
  e.anchor = p.speech.wrs_max_point();
  e.fit_points = {e.anchor};
  e.slope_used = s.s_wrs_nh;
  e.srt = invert_nh_logistic(e.anchor.level, e.anchor.wrs, s.s_wrs_nh);
  e.srt_min = srt_n_min(p.pta_spl, s.srt_nh);
  e.delta_srt = e.srt - e.srt_min;
  apply_consistency_filter(e, p.pta_spl, s.audibility_margin);
  attach_plomp(e, p.pta_spl, s);
  return e;
}

double srt_n_min(double pta_spl, double srt_nh) { return std::max(srt_nh, pta_spl - 10.0); }

PlompComponents plomp_components(double srt, double pta_spl, double srt_nh) {
  return {std::max(pta_spl - srt_nh, 0.0), srt - pta_spl};
}

void apply_consistency_filter(SrtEstimate& e, double pta_spl, double margin) {
  if (std::isfinite(e.srt) && e.srt < pta_spl - margin) e.exclusion |= kBelowPta;
}

void attach_plomp(SrtEstimate& e, double pta_spl, const EstimatorSettings& s) {
  const PlompComponents c = plomp_components(e.srt, pta_spl, s.srt_nh);
  e.plomp_a = c.a;
  e.plomp_d = c.d;
  e.delta_d = delta_d(e.delta_srt, s.delta_pta);
}

const SrtEstimate* PatientResult::find(Procedure p) const {
  for (const auto& e : estimates) {
    if (e.procedure == p) return &e;
  }
  return nullptr;
}

}  // namespace srtkit
