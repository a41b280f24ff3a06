#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "srtkit/clinical_data.hpp"
#include "srtkit/estimators.hpp"
#include "srtkit/psychometrics.hpp"

namespace srtkit {

inline constexpr std::size_t kNumBisgaard = 10;

/// "N1".."N7", "S1".."S3".
[[nodiscard]] const std::string& bisgaard_name(std::size_t index);
/// Standard audiogram in dB HL; 8 kHz repeats the 6 kHz value.
[[nodiscard]] Audiogram bisgaard_audiogram(std::size_t index);

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x);
/// Engine for stream `index` of `seed`, independent of how many streams are drawn.
[[nodiscard]] std::mt19937_64 stream_engine(std::uint64_t seed, std::uint64_t index);
/// Uniform double in [0, 1) from the top 53 bits.
[[nodiscard]] double uniform01(std::mt19937_64& rng);

struct GeneratorConfig {
  double srt_offset_min = -5.0;  // truth SRT relative to PTA_SPL, dB
  double srt_offset_max = 25.0;
  double slope_min = 1.0;        // %/dB
  double slope_max = 6.0;
  int wrs_max_min = 50;          // %, multiples of 5
  int wrs_max_max = 100;
  double jitter = 5.0;           // dB, per frequency
  double jitter_step = 5.0;      // jitter takes multiples of this
  std::vector<std::size_t> classes{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  HlSplOffsets offsets = HlSplOffsets::headphone_default();

  void validate() const;
};

enum class NoiseModel { none, binomial };
enum class StopRule { one_word, ceiling_only };

[[nodiscard]] NoiseModel parse_noise(std::string_view text);

struct SimulatedPatient {
  std::string id;
  std::size_t bisgaard_class = 0;
  Audiogram audiogram;
  double pta_hl = 0.0;
  double pta_spl = 0.0;
  PsychometricFunction truth;
  SpeechMeasurement measurements;
  std::uint64_t seed = 0;
};

/// Level where the truth function reaches 50%; NaN when wrs_max <= 50.
[[nodiscard]] double truth_l50(const PsychometricFunction& truth);

[[nodiscard]] std::vector<SimulatedPatient> generate_cohort(std::size_t n, const GeneratorConfig& config,
                                                            std::uint64_t seed);

/// Ascending fixed-level protocol at 60, 80, 100, 110 dB SPL.
[[nodiscard]] SpeechMeasurement simulate_protocol(const PsychometricFunction& truth, NoiseModel noise,
                                                  std::mt19937_64& rng,
                                                  StopRule stop = StopRule::one_word);

/// Fills `measurements` for every patient; patient i draws from stream i of `noise_seed`.
void simulate_cohort(std::span<SimulatedPatient> cohort, NoiseModel noise, std::uint64_t noise_seed,
                     StopRule stop = StopRule::one_word);

/// Rows in the clinical input schema (right ear, complete audiogram).
[[nodiscard]] std::vector<RawRow> to_raw_rows(std::span<const SimulatedPatient> cohort);
[[nodiscard]] PatientRecord to_record(const SimulatedPatient& p);

/// id, class, truth parameters and PTA.
void write_truth_csv(std::ostream& out, std::span<const SimulatedPatient> cohort);

struct ProcedureReport {
  Procedure procedure = Procedure::empirical;
  std::size_t rows = 0;
  std::size_t included = 0;
  std::size_t scored = 0;        // included with a defined 50% truth level
  double bias = 0.0;             // mean(srt - truth), dB
  double rmse = 0.0;
  double coverage = 0.0;         // fraction of scored whose error interval holds the truth
  double median_delta_srt = 0.0;
};

struct OracleReport {
  std::size_t patients = 0;
  std::array<std::size_t, 4> categories{};  // indexed by SlopeKind
  std::array<ProcedureReport, 3> procedures{};

  // Empirical estimates whose slope-area points and 50% point lie in the
  // central [0.25, 0.75] part of the truth function.
  std::size_t linear_range_n = 0;
  double linear_range_within_1db = 0.0;

  // NH-slope fit over all patients with truth slope <= 4.5 %/dB and wrs_max 100.
  std::size_t nh_bound_n = 0;
  double nh_bound_fraction = 0.0;       // srt_n >= truth - 1 dB
  std::size_t nh_bound_upper_n = 0;     // subset whose WRS_max point is >= 50%
  double nh_bound_upper_fraction = 0.0;
};

[[nodiscard]] OracleReport validate(std::span<const SimulatedPatient> cohort,
                                    std::span<const PatientResult> results,
                                    const EstimatorSettings& settings = {});

void write_oracle_report(std::ostream& out, const OracleReport& report);

}  // namespace srtkit
