#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "srtkit/clinical_data.hpp"

namespace srtkit {

inline constexpr std::size_t kNumBands = 21;
using BandArray = std::array<double, kNumBands>;

enum class ImportanceFunction { spin, average_speech, flat };

[[nodiscard]] ImportanceFunction parse_importance(std::string_view name);

/// Critical-band constants of the SII calculation.
struct BandTable {
  int version = 1;
  BandArray center{};
  BandArray lower{};
  BandArray upper{};
  BandArray internal_noise{};    // reference internal noise spectrum level, dB
  BandArray speech_spectrum{};   // standard speech spectrum level, normal vocal effort, dB
  BandArray importance_spin{};
  BandArray importance_average{};
};

[[nodiscard]] const BandTable& builtin_band_table();
[[nodiscard]] BandTable load_band_table(const std::filesystem::path& path);
void write_band_table(std::ostream& out, const BandTable& table);

struct SiiParameters {
  BandArray band_centers{};
  BandArray band_lower{};
  BandArray band_upper{};
  BandArray internal_noise{};
  BandArray standard_speech_spectrum{};  // reference for the level distortion factor
  BandArray speech_spectrum{};           // spectrum of the test material at reference_level()
  BandArray band_importance{};
  double noise_level_overall = -50.0;    // dB SPL, speech-shaped
  bool level_distortion_enabled = true;

  [[nodiscard]] static SiiParameters from_table(const BandTable& table,
                                                ImportanceFunction importance = ImportanceFunction::spin);
  [[nodiscard]] static SiiParameters defaults() { return from_table(builtin_band_table()); }

  /// Overall level (dB SPL) of `speech_spectrum`, integrated over band widths.
  [[nodiscard]] double reference_level() const;
  /// Throws ConfigError when the importance weights are negative or do not sum to 1.
  void validate() const;
};

/// Audiogram thresholds (dB HL) interpolated to band centers on log frequency,
/// held constant beyond the audiogram's edge frequencies.
[[nodiscard]] BandArray band_thresholds(const Audiogram& audiogram, const SiiParameters& params);

inline constexpr double kMinSpeechLevel = -10.0;
inline constexpr double kMaxSpeechLevel = 130.0;

[[nodiscard]] double compute_sii(const Audiogram& audiogram, double speech_level,
                                 const SiiParameters& params);

struct SiiSample {
  double level = 0.0;
  double sii = 0.0;
};

/// Squared Pearson correlation of level against SII; 0 when either is constant.
[[nodiscard]] double pearson_r_squared(std::span<const SiiSample> samples);

struct SiiCurve {
  std::vector<SiiSample> samples;  // sorted by level
  std::array<SiiSample, 3> best_triple{};
  double r_squared = 0.0;
  double s_sii = 0.0;              // 1/dB, outer points of best_triple
  bool converged = false;
  double range_low = 0.0;          // estimated rising range, dB SPL
  double range_high = 0.0;
};

inline constexpr double kLinearityTarget = 0.99;
inline constexpr double kLevelResolution = 0.5;

/// Samples the SII-level curve and refines it until three consecutive points
/// are collinear (R^2 >= 0.99) or no further level can be inserted.
/// Throws ModelError("no positive slope") for a flat curve.
[[nodiscard]] SiiCurve find_linear_range(const Audiogram& audiogram, const SiiParameters& params);

inline constexpr double kNhWrsSlope = 4.5;     // %/dB
inline constexpr double kNhSiiSlope = 0.0307;  // 1/dB
inline constexpr double kDeltaSii = 0.00084;

/// s_wrs = s_sii * s_wrs_nh / s_sii_nh.
[[nodiscard]] double convert_slope(double s_sii, double s_wrs_nh = kNhWrsSlope,
                                   double s_sii_nh = kNhSiiSlope);

struct CalibrationResult {
  SiiParameters params;
  double contrast = 1.0;        // scale of the spectrum's deviation around the internal noise
  double achieved_slope = 0.0;  // zero-audiogram s_sii after calibration
};

/// Rescales the speech spectrum contrast so that the zero-audiogram SII slope equals `target`.
[[nodiscard]] CalibrationResult calibrate_spectrum(const SiiParameters& base,
                                                   double target = kNhSiiSlope);

/// Speech spectrum rescaled by `contrast` around the internal-noise-relative mean.
[[nodiscard]] SiiParameters with_spectrum_contrast(const SiiParameters& base, double contrast);

}  // namespace srtkit
