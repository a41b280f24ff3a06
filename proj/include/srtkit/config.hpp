#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "srtkit/clinical_data.hpp"
#include "srtkit/sii_model.hpp"

namespace srtkit {

enum class AnchorTieBreak { lower_level, higher_level };

struct PipelineConfig {
  std::filesystem::path input;
  InputFormat input_format = InputFormat::csv;
  std::filesystem::path output_dir = "srtkit_out";
  std::optional<std::filesystem::path> band_table;  // builtin when empty
  std::optional<std::filesystem::path> ci_table;    // binomial when empty

  HlSplOffsets offsets = HlSplOffsets::headphone_default();
  int no_estimation_floor = kDefaultNoEstimationFloor;
  EarTieBreak ear_tie_break = EarTieBreak::right;
  AnchorTieBreak anchor_tie_break = AnchorTieBreak::lower_level;

  double srt_nh = 29.3;      // dB SPL
  double s_wrs_nh = kNhWrsSlope;
  double s_sii_nh = kNhSiiSlope;
  double delta_sii = kDeltaSii;
  double delta_pta = 5.0;    // dB
  double alpha = 0.05;

  ImportanceFunction importance = ImportanceFunction::spin;
  bool level_distortion = true;
  bool calibrate_sii = false;
  bool corrected_delta_sh = false;
  bool dedup = true;

  unsigned workers = 1;
  int folds = 10;
  std::uint64_t seed = 1;

  /// Throws ConfigError on non-positive constants or out-of-range settings.
  void validate() const;

  /// Applies one `key = value` setting. Throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);

  /// Settings that influence results, in a fixed order. Paths to outputs and
  /// the worker count are left out so that they do not change the hash.
  [[nodiscard]] std::vector<std::pair<std::string, std::string>> canonical() const;
  [[nodiscard]] std::uint64_t hash() const;
};

/// Reads a plain-text `key = value` file; '#' starts a comment.
[[nodiscard]] PipelineConfig load_config(const std::filesystem::path& path);
void apply_config_text(PipelineConfig& config, std::string_view text);

[[nodiscard]] std::uint64_t fnv1a64(std::string_view bytes,
                                    std::uint64_t basis = 0xcbf29ce484222325ULL);
[[nodiscard]] std::string hex64(std::uint64_t value);

}  // namespace srtkit
