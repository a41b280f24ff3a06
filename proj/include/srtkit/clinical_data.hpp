#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace srtkit {

inline constexpr std::size_t kNumAudiogramFrequencies = 9;
inline constexpr std::array<int, kNumAudiogramFrequencies> kAudiogramFrequencies{
    250, 500, 1000, 1500, 2000, 3000, 4000, 6000, 8000};

inline constexpr std::size_t kNumSpeechLevels = 4;
inline constexpr std::array<int, kNumSpeechLevels> kSpeechLevels{60, 80, 100, 110};

inline constexpr double kMinThresholdHl = -10.0;
inline constexpr double kMaxThresholdHl = 120.0;

/// Position of `hz` in kAudiogramFrequencies.
[[nodiscard]] std::optional<std::size_t> frequency_index(int hz);

using PartialAudiogram = std::array<std::optional<double>, kNumAudiogramFrequencies>;

struct Audiogram {
  std::array<double, kNumAudiogramFrequencies> thresholds{};
  std::array<bool, kNumAudiogramFrequencies> imputed{};

  [[nodiscard]] double at(int hz) const;
};

/// Measured values only (imputed entries dropped).
[[nodiscard]] PartialAudiogram measured_part(const Audiogram& a);

/// A constant audiogram with every frequency marked as measured.
[[nodiscard]] Audiogram flat_audiogram(double hl);

struct SpeechPoint {
  double level = 0.0;  // dB SPL
  int wrs = 0;         // percent, multiple of 5

  friend bool operator==(const SpeechPoint&, const SpeechPoint&) = default;
};

/// 1-4 speech test points with unique levels, kept sorted by level.
struct SpeechMeasurement {
  std::vector<SpeechPoint> points;

  [[nodiscard]] bool empty() const noexcept { return points.empty(); }
  /// Point with the highest WRS; the lowest level wins ties.
  [[nodiscard]] const SpeechPoint& wrs_max_point() const;
  [[nodiscard]] int wrs_max() const { return wrs_max_point().wrs; }
};

/// Throws DataError when levels repeat, WRS is off the 5% grid, or there are >4 points.
void validate_speech(const SpeechMeasurement& m);

enum class Ear { left, right };

[[nodiscard]] std::string to_string(Ear ear);
[[nodiscard]] std::optional<Ear> parse_ear(std::string_view text);

struct PatientRecord {
  std::string id;
  Ear ear = Ear::right;
  std::optional<std::string> gender;
  std::optional<double> age_years;
  std::optional<std::string> test_date;
  Audiogram audiogram;
  SpeechMeasurement speech;
  double pta_hl = 0.0;
  double pta_spl = 0.0;
};

/// Per-frequency HL to SPL offsets (dB).
struct HlSplOffsets {
  std::array<double, kNumAudiogramFrequencies> offsets{};

  /// RETSPL of a circumaural audiometric headphone (HDA 200 class, ISO 389-8).
  [[nodiscard]] static HlSplOffsets headphone_default();
  /// Mean of the offsets at the four PTA frequencies.
  [[nodiscard]] double pta_mean() const;
};

// ---------------------------------------------------------------------------
// Ingestion

enum class InputFormat { csv, json };

struct RawRow {
  std::size_t line = 0;
  std::string id;
  Ear ear = Ear::right;
  std::optional<std::string> gender;
  std::optional<double> age_years;
  std::optional<std::string> test_date;
  PartialAudiogram audiogram{};
  SpeechMeasurement speech;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  std::vector<RawRow> rows;
  std::size_t total_rows = 0;
  std::size_t dropped_no_audiogram = 0;
  std::size_t dropped_no_speech = 0;
  std::size_t superseded_sessions = 0;
  std::vector<RowError> errors;
  std::vector<std::string> warnings;
};

/// Header row of the CSV input schema, in column order.
[[nodiscard]] const std::vector<std::string>& csv_columns();

[[nodiscard]] IngestResult ingest(const std::filesystem::path& path, InputFormat format);
[[nodiscard]] IngestResult ingest_csv_text(std::string_view text);
[[nodiscard]] IngestResult ingest_json_text(std::string_view text);

/// Writes rows in the CSV input schema.
void write_csv(std::ostream& out, std::span<const RawRow> rows);

// ---------------------------------------------------------------------------
// Preprocessing

/// Fills gaps by log-frequency interpolation between measured neighbours and
/// nearest-value extrapolation at the edges. Values are clamped to [-10, 120].
/// Throws DataError when nothing was measured.
[[nodiscard]] Audiogram impute_audiogram(const PartialAudiogram& partial);

struct Pta {
  double hl = 0.0;
  double spl = 0.0;
};

[[nodiscard]] Pta compute_pta(const Audiogram& a, const HlSplOffsets& offsets);

enum class EarTieBreak { right, left };

/// Lower pta_spl wins; equal PTAs resolve by `tie`.
[[nodiscard]] const PatientRecord& select_better_ear(const PatientRecord& left,
                                                     const PatientRecord& right,
                                                     EarTieBreak tie = EarTieBreak::right);

[[nodiscard]] PatientRecord preprocess(const RawRow& row, const HlSplOffsets& offsets);

struct PreprocessResult {
  std::vector<PatientRecord> patients;  // one per id, better ear, ordered by id
  std::size_t dropped_other_ear = 0;
  std::vector<RowError> errors;
};

[[nodiscard]] PreprocessResult preprocess_all(std::span<const RawRow> rows,
                                              const HlSplOffsets& offsets,
                                              EarTieBreak tie = EarTieBreak::right);

// ---------------------------------------------------------------------------
// Categorization

enum class SlopeKind { fully_determined, half_determined, undetermined, no_estimation };

[[nodiscard]] std::string to_string(SlopeKind kind);

struct SlopeCategory {
  SlopeKind kind = SlopeKind::no_estimation;
  std::vector<SpeechPoint> slope_area_points;  // sorted by level
  SpeechPoint wrs_max_point;
};

inline constexpr double kSlopeAreaLow = 0.15;
inline constexpr double kSlopeAreaHigh = 0.85;
inline constexpr int kDefaultNoEstimationFloor = 10;

[[nodiscard]] SlopeCategory categorize(const SpeechMeasurement& speech,
                                       int no_estimation_floor = kDefaultNoEstimationFloor);

// ---------------------------------------------------------------------------
// Deduplication

struct DedupResult {
  std::vector<Audiogram> unique;        // first-seen order
  std::vector<std::size_t> index_of;    // patient -> unique index
};

[[nodiscard]] DedupResult dedup_audiograms(std::span<const PatientRecord> records);

}  // namespace srtkit
