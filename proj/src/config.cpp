#include "srtkit/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "srtkit/errors.hpp"

namespace srtkit {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view key, std::string_view value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(out)) {
    throw ConfigError("config key '" + std::string(key) + "': expected a number, got '" +
                      std::string(value) + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view value) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + std::string(key) + "': expected an integer, got '" +
                      std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected true/false");
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string importance_name(ImportanceFunction f) {
  switch (f) {
    case ImportanceFunction::spin: return "spin";
    case ImportanceFunction::average_speech: return "average";
    case ImportanceFunction::flat: return "flat";
  }
  return "spin";
}

}  // namespace

void PipelineConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive("srt_nh", srt_nh);
  positive("s_wrs_nh", s_wrs_nh);
  positive("s_sii_nh", s_sii_nh);
  positive("delta_sii", delta_sii);
  positive("delta_pta", delta_pta);
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (no_estimation_floor < 0 || no_estimation_floor > 100) {
    throw ConfigError("no_estimation_floor must lie in [0, 100]");
  }
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  for (double o : offsets.offsets) {
    if (!std::isfinite(o) || std::abs(o) > 60.0) throw ConfigError("HL to SPL offset out of range");
  }
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  if (key == "input") {
    input = std::string(value);
  } else if (key == "input_format") {
    if (value == "csv") input_format = InputFormat::csv;
    else if (value == "json") input_format = InputFormat::json;
    else throw ConfigError("input_format must be csv or json");
  } else if (key == "output_dir") {
    output_dir = std::string(value);
  } else if (key == "band_table") {
    band_table = value.empty() ? std::nullopt : std::optional<std::filesystem::path>(std::string(value));
  } else if (key == "ci_table") {
    ci_table = value.empty() ? std::nullopt : std::optional<std::filesystem::path>(std::string(value));
  } else if (key.starts_with("offset_")) {
    const int hz = parse_int<int>(key, key.substr(7));
    const auto idx = frequency_index(hz);
    if (!idx) throw ConfigError("no audiogram frequency " + std::to_string(hz) + " Hz");
    offsets.offsets[*idx] = parse_double(key, value);
  } else if (key == "no_estimation_floor") {
    no_estimation_floor = parse_int<int>(key, value);
  } else if (key == "ear_tie_break") {
    if (value == "right") ear_tie_break = EarTieBreak::right;
    else if (value == "left") ear_tie_break = EarTieBreak::left;
    else throw ConfigError("ear_tie_break must be right or left");
  } else if (key == "anchor_tie_break") {
    if (value == "lower") anchor_tie_break = AnchorTieBreak::lower_level;
    else if (value == "higher") anchor_tie_break = AnchorTieBreak::higher_level;
    else throw ConfigError("anchor_tie_break must be lower or higher");
  } else if (key == "srt_nh") {
    srt_nh = parse_double(key, value);
  } else if (key == "s_wrs_nh") {
    s_wrs_nh = parse_double(key, value);
  } else if (key == "s_sii_nh") {
    s_sii_nh = parse_double(key, value);
  } else if (key == "delta_sii") {
    delta_sii = parse_double(key, value);
  } else if (key == "delta_pta") {
    delta_pta = parse_double(key, value);
  } else if (key == "alpha") {
    alpha = parse_double(key, value);
  } else if (key == "importance") {
    importance = parse_importance(value);
  } else if (key == "level_distortion") {
    level_distortion = parse_bool(key, value);
  } else if (key == "calibrate_sii") {
    calibrate_sii = parse_bool(key, value);
  } else if (key == "corrected_delta_sh") {
    corrected_delta_sh = parse_bool(key, value);
  } else if (key == "dedup") {
    dedup = parse_bool(key, value);
  } else if (key == "workers") {
    workers = parse_int<unsigned>(key, value);
  } else if (key == "folds") {
    folds = parse_int<int>(key, value);
  } else if (key == "seed") {
    seed = parse_int<std::uint64_t>(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

std::vector<std::pair<std::string, std::string>> PipelineConfig::canonical() const {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("input_format", input_format == InputFormat::csv ? "csv" : "json");
  kv.emplace_back("band_table", band_table ? band_table->string() : "builtin");
  kv.emplace_back("ci_table", ci_table ? ci_table->string() : "binomial");
  for (std::size_t i = 0; i < kNumAudiogramFrequencies; ++i) {
    kv.emplace_back("offset_" + std::to_string(kAudiogramFrequencies[i]), fmt(offsets.offsets[i]));
  }
  kv.emplace_back("no_estimation_floor", std::to_string(no_estimation_floor));
  kv.emplace_back("ear_tie_break", ear_tie_break == EarTieBreak::right ? "right" : "left");
  kv.emplace_back("anchor_tie_break",
                  anchor_tie_break == AnchorTieBreak::lower_level ? "lower" : "higher");
  kv.emplace_back("srt_nh", fmt(srt_nh));
  kv.emplace_back("s_wrs_nh", fmt(s_wrs_nh));
  kv.emplace_back("s_sii_nh", fmt(s_sii_nh));
  kv.emplace_back("delta_sii", fmt(delta_sii));
  kv.emplace_back("delta_pta", fmt(delta_pta));
  kv.emplace_back("alpha", fmt(alpha));
  kv.emplace_back("importance", importance_name(importance));
  kv.emplace_back("level_distortion", level_distortion ? "true" : "false");
  kv.emplace_back("calibrate_sii", calibrate_sii ? "true" : "false");
  kv.emplace_back("corrected_delta_sh", corrected_delta_sh ? "true" : "false");
  kv.emplace_back("dedup", dedup ? "true" : "false");
  kv.emplace_back("folds", std::to_string(folds));
  kv.emplace_back("seed", std::to_string(seed));
  return kv;
}

std::uint64_t PipelineConfig::hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& [k, v] : canonical()) {
    h = fnv1a64(k, h);
    h = fnv1a64("=", h);
    h = fnv1a64(v, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

void apply_config_text(PipelineConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  PipelineConfig config;
  apply_config_text(config, buf.str());
  config.validate();
  return config;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

}  // namespace srtkit
