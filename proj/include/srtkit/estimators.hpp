#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srtkit/clinical_data.hpp"
#include "srtkit/config.hpp"
#include "srtkit/uncertainty.hpp"

namespace srtkit {

enum class Procedure { empirical, sii_slope, nh_slope };

[[nodiscard]] std::string to_string(Procedure p);

/// Exclusion reasons are flags, so applying a rule twice or in another order
/// gives the same result.
enum ExclusionFlag : std::uint32_t {
  kNotExcluded = 0,
  kNonPositiveEmpiricalSlope = 1u << 0,
  kDegenerateSiiSlope = 1u << 1,
  kNoPositiveSiiSlope = 1u << 2,
  kBelowPta = 1u << 3,  // SRT < PTA_SPL - 10 dB
};

/// Reasons joined by ';' in flag order, empty when included.
[[nodiscard]] std::string exclusion_reason(std::uint32_t flags);

/// Constants shared by the procedures.
struct EstimatorSettings {
  double srt_nh = 29.3;
  double s_wrs_nh = 4.5;
  double delta_pta = 5.0;
  double audibility_margin = 10.0;  // dB below PTA_SPL still taken as audible
  AnchorTieBreak anchor_tie = AnchorTieBreak::lower_level;

  [[nodiscard]] static EstimatorSettings from(const PipelineConfig& c);
};

struct SrtEstimate {
  Procedure procedure = Procedure::empirical;
  double srt = 0.0;          // dB SPL, NaN when no value could be formed
  double slope_used = 0.0;   // %/dB
  double delta_slope = 0.0;  // %/dB (nh_slope: 0)
  SpeechPoint anchor;
  std::vector<SpeechPoint> fit_points;
  bool inaudible_anchor = false;
  double srt_min = 0.0;      // nh_slope lower bound
  double delta_srt = 0.0;    // dB
  std::uint32_t exclusion = kNotExcluded;
  double plomp_a = 0.0;
  double plomp_d = 0.0;
  double delta_d = 0.0;

  [[nodiscard]] bool excluded() const noexcept { return exclusion != kNotExcluded; }
};

struct Anchor {
  SpeechPoint point;
  bool inaudible_fallback = false;
};

/// The half-determined point, or the audible fully-determined slope-area point
/// closest to 50%. Throws ModelError for the other categories.
[[nodiscard]] Anchor select_anchor(const PatientRecord& p, const SlopeCategory& cat,
                                   const EstimatorSettings& s = {});

/// Line through the slope-area points. The SRT error uses the anchor point and
/// the slope error the outermost slope-area points.
[[nodiscard]] SrtEstimate estimate_empirical(const PatientRecord& p, const SlopeCategory& cat,
                                             const WrsConfidenceTable& table,
                                             const EstimatorSettings& s = {});

/// Line with fixed slope `s_h` (%/dB) through `anchor`.
[[nodiscard]] SrtEstimate estimate_sii_slope(const PatientRecord& p, double s_h, double delta_s_h,
                                             const Anchor& anchor, const WrsConfidenceTable& table,
                                             const EstimatorSettings& s = {});

/// Fixed normal-hearing logistic through the WRS_max point; delta_srt is the
/// distance to srt_n_min.
[[nodiscard]] SrtEstimate estimate_nh_slope(const PatientRecord& p, const EstimatorSettings& s = {});

/// max(SRT_NH, PTA_SPL - 10).
[[nodiscard]] double srt_n_min(double pta_spl, double srt_nh = 29.3);

struct PlompComponents {
  double a = 0.0;
  double d = 0.0;
};

[[nodiscard]] PlompComponents plomp_components(double srt, double pta_spl, double srt_nh = 29.3);

/// Flags the estimate when its SRT lies more than the audibility margin below PTA_SPL.
void apply_consistency_filter(SrtEstimate& e, double pta_spl, double margin = 10.0);

/// Fills Plomp A/D and delta D from srt and delta_srt.
void attach_plomp(SrtEstimate& e, double pta_spl, const EstimatorSettings& s);

struct PatientResult {
  std::string id;
  SlopeCategory category;
  std::optional<double> s_sii;  // 1/dB, absent when the SII curve had no slope
  std::vector<SrtEstimate> estimates;

  [[nodiscard]] const SrtEstimate* find(Procedure p) const;
};

}  // namespace srtkit
