#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srtkit/analysis_stats.hpp"
#include "srtkit/clinical_data.hpp"
#include "srtkit/config.hpp"
#include "srtkit/estimators.hpp"
#include "srtkit/sii_model.hpp"
#include "srtkit/uncertainty.hpp"

namespace srtkit {

/// Tables and parameters resolved from a config.
struct Resources {
  SiiParameters sii;
  WrsConfidenceTable ci_table;
  std::optional<double> calibration_contrast;

  [[nodiscard]] static Resources from_config(const PipelineConfig& config);
};

struct StageCounts {
  std::size_t input_rows = 0;
  std::size_t row_errors = 0;
  std::size_t dropped_no_audiogram = 0;
  std::size_t dropped_no_speech = 0;
  std::size_t superseded_sessions = 0;
  std::size_t preprocess_errors = 0;
  std::size_t dropped_other_ear = 0;
  std::size_t patients = 0;
  std::array<std::size_t, 4> categories{};  // indexed by SlopeKind
  std::size_t sii_audiograms = 0;           // SII curves computed
  std::size_t sii_failures = 0;

  /// Every input row and every patient accounted for exactly once.
  [[nodiscard]] bool conserved() const;
};

struct DistRow {
  std::string variable;  // "pta_spl" or "wrs_max"
  double bin_width = 0.0;
  std::optional<DistComparison> comparison;  // absent when a group is too small
};

struct Analysis {
  std::vector<PatientRecord> patients;  // ordered by id
  std::vector<PatientResult> results;   // aligned with patients
  StageCounts counts;
  std::vector<DistRow> distributions;
  std::vector<GlmRow> glm_rows;
  std::optional<GlmFit> glm;
  std::string glm_note;
  std::vector<std::string> warnings;
  std::vector<RowError> errors;
};

/// Categorization, SII slopes, the three procedures, errors, Plomp
/// components and population statistics for preprocessed patients.
[[nodiscard]] Analysis analyze(std::vector<PatientRecord> patients, const PipelineConfig& config,
                               const Resources& resources);

/// Ingestion and preprocessing followed by analyze(); counts cover every stage.
[[nodiscard]] Analysis analyze_rows(const IngestResult& ingested, const PipelineConfig& config,
                                    const Resources& resources);

inline constexpr std::array<double, 5> kSeriesPercentiles{10, 30, 50, 70, 90};

struct PercentileRow {
  double bin = 0.0;  // lower edge
  std::size_t n = 0;
  std::array<double, kSeriesPercentiles.size()> values{};
};

/// Percentiles of `values` grouped by floor(x / bin_width); empty bins are omitted.
[[nodiscard]] std::vector<PercentileRow> percentile_series(std::span<const double> x,
                                                           std::span<const double> values,
                                                           double bin_width);

const std::vector<std::string>& estimates_columns();

void write_estimates_csv(std::ostream& out, const Analysis& a);
void write_population_csv(std::ostream& out, const Analysis& a);
void write_stats_csv(std::ostream& out, const Analysis& a);
void write_stats_json(std::ostream& out, const Analysis& a, const PipelineConfig& config);
void write_glm_csv(std::ostream& out, const Analysis& a);

/// Writes estimates.csv, population.csv, stats.csv, stats.json, glm.csv,
/// plotdata/ and manifest.json into `dir`.
void write_reports(const std::filesystem::path& dir, const Analysis& a, const PipelineConfig& config,
                   const Resources& resources);

/// Reads config.input and writes all reports to config.output_dir.
Analysis run_pipeline(const PipelineConfig& config);

/// Machine-readable failure report written next to the other outputs.
void write_error_report(const std::filesystem::path& dir, const std::string& stage,
                        const std::string& kind, const std::string& message, int exit_code);

}  // namespace srtkit
