#include "srtkit/clinical_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "srtkit/errors.hpp"

namespace srtkit {

namespace {

constexpr std::array<int, 4> kPtaFrequencies{500, 1000, 2000, 4000};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

std::optional<double> parse_number(const std::string& text, const std::string& column,
                                   std::size_t line) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
    throw DataError("column '" + column + "': not a number: '" + text + "'", line);
  }
  return value;
}

int checked_wrs(double value, const std::string& column, std::size_t line) {
  if (value < 0.0 || value > 100.0 || std::fmod(value, 5.0) != 0.0) {
    std::ostringstream msg;
    msg << "column '" << column << "': WRS " << value
        << " must be a multiple of 5 in [0, 100]";
    throw DataError(msg.str(), line);
  }
  return static_cast<int>(value);
}

std::string ag_column(int hz) { return "ag" + std::to_string(hz); }
std::string wrs_column(int level) { return "wrs" + std::to_string(level); }

// Adds a point, keeping the higher WRS when a level repeats.
void add_speech_point(SpeechMeasurement& m, SpeechPoint p, std::vector<std::string>& warnings,
                      const std::string& id) {
  auto it = std::find_if(m.points.begin(), m.points.end(),
                         [&](const SpeechPoint& q) { return q.level == p.level; });
  if (it != m.points.end()) {
    std::ostringstream msg;
    msg << "patient " << id << ": duplicate level " << p.level << " dB SPL, keeping WRS "
        << std::max(it->wrs, p.wrs);
    warnings.push_back(msg.str());
    it->wrs = std::max(it->wrs, p.wrs);
    return;
  }
  m.points.push_back(p);
  std::sort(m.points.begin(), m.points.end(),
            [](const SpeechPoint& a, const SpeechPoint& b) { return a.level < b.level; });
}

bool has_any(const PartialAudiogram& a) {
  return std::any_of(a.begin(), a.end(), [](const auto& v) { return v.has_value(); });
}

// Session date ordering: present dates compare lexicographically (ISO 8601),
// missing dates sort after any present date.
bool earlier_session(const RawRow& a, const RawRow& b) {
  if (a.test_date && b.test_date) return *a.test_date < *b.test_date;
  return a.test_date.has_value() && !b.test_date.has_value();
}

// Row-level filtering shared by the CSV and JSON readers.
void finalize_rows(IngestResult& result, std::vector<RawRow> parsed) {
  std::vector<RawRow> kept;
  kept.reserve(parsed.size());
  for (auto& row : parsed) {
    if (!has_any(row.audiogram)) {
      ++result.dropped_no_audiogram;
    } else if (row.speech.empty()) {
      ++result.dropped_no_speech;
    } else {
      kept.push_back(std::move(row));
    }
  }
  // Earliest session per (id, ear); file order breaks ties.
  std::map<std::pair<std::string, Ear>, std::size_t> first;
  std::vector<bool> keep(kept.size(), true);
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto key = std::make_pair(kept[i].id, kept[i].ear);
    auto [it, inserted] = first.emplace(key, i);
    if (inserted) continue;
    ++result.superseded_sessions;
    if (earlier_session(kept[i], kept[it->second])) {
      keep[it->second] = false;
      it->second = i;
    } else {
      keep[i] = false;
    }
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (keep[i]) result.rows.push_back(std::move(kept[i]));
  }
}

}  // namespace

std::optional<std::size_t> frequency_index(int hz) {
  const auto it = std::find(kAudiogramFrequencies.begin(), kAudiogramFrequencies.end(), hz);
  if (it == kAudiogramFrequencies.end()) return std::nullopt;
  return static_cast<std::size_t>(it - kAudiogramFrequencies.begin());
}

double Audiogram::at(int hz) const {
  const auto idx = frequency_index(hz);
  if (!idx) throw std::out_of_range("not an audiogram frequency: " + std::to_string(hz));
  return thresholds[*idx];
}

PartialAudiogram measured_part(const Audiogram& a) {
  PartialAudiogram p{};
  for (std::size_t i = 0; i < kNumAudiogramFrequencies; ++i) {
    if (!a.imputed[i]) p[i] = a.thresholds[i];
  }
  return p;
}

Audiogram flat_audiogram(double hl) {
  Audiogram a;
  a.thresholds.fill(hl);
  a.imputed.fill(false);
  return a;
}

const SpeechPoint& SpeechMeasurement::wrs_max_point() const {
  if (points.empty()) throw DataError("speech measurement has no points");
  const SpeechPoint* best = &points.front();
  for (const auto& p : points) {
    if (p.wrs > best->wrs || (p.wrs == best->wrs && p.level < best->level)) best = &p;
  }
  return *best;
}

void validate_speech(const SpeechMeasurement& m) {
  if (m.points.size() > kNumSpeechLevels) throw DataError("more than 4 speech points");
  for (std::size_t i = 0; i < m.points.size(); ++i) {
    const auto& p = m.points[i];
    if (p.wrs < 0 || p.wrs > 100 || p.wrs % 5 != 0) {
      throw DataError("WRS " + std::to_string(p.wrs) + " must be a multiple of 5 in [0, 100]");
    }
    for (std::size_t j = i + 1; j < m.points.size(); ++j) {
      if (m.points[j].level == p.level) throw DataError("duplicate speech level");
    }
  }
}

std::string to_string(Ear ear) { return ear == Ear::left ? "left" : "right"; }

std::optional<Ear> parse_ear(std::string_view text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "left" || t == "l") return Ear::left;
  if (t == "right" || t == "r") return Ear::right;
  return std::nullopt;
}

HlSplOffsets HlSplOffsets::headphone_default() {
  // 250 500 1000 1500 2000 3000 4000 6000 8000 Hz
  return HlSplOffsets{{18.0, 11.0, 5.5, 5.5, 4.5, 2.5, 9.5, 17.0, 17.5}};
}

double HlSplOffsets::pta_mean() const {
  double sum = 0.0;
  for (int hz : kPtaFrequencies) sum += offsets[*frequency_index(hz)];
  return sum / static_cast<double>(kPtaFrequencies.size());
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> columns = [] {
    std::vector<std::string> c{"id", "ear", "gender", "age", "date"};
    for (int hz : kAudiogramFrequencies) c.push_back(ag_column(hz));
    for (int level : kSpeechLevels) c.push_back(wrs_column(level));
    return c;
  }();
  return columns;
}

IngestResult ingest_csv_text(std::string_view text) {
  IngestResult result;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> column_index;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    for (std::size_t i = 0; i < fields.size(); ++i) column_index[fields[i]] = i;
    for (const auto& name : csv_columns()) {
      if (!column_index.contains(name)) {
        throw DataError("CSV header is missing column '" + name + "'", line_no);
      }
    }
    break;
  }
  if (column_index.empty()) throw DataError("input file is empty");

  std::vector<RawRow> parsed;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.total_rows;
    try {
      const auto fields = split_csv_line(line);
      if (fields.size() < column_index.size()) {
        throw DataError("expected " + std::to_string(column_index.size()) + " fields, got " +
                            std::to_string(fields.size()),
                        line_no);
      }
      auto field = [&](const std::string& name) -> const std::string& {
        return fields[column_index.at(name)];
      };
      RawRow row;
      row.line = line_no;
      row.id = field("id");
      if (row.id.empty()) throw DataError("empty id", line_no);
      const auto ear = parse_ear(field("ear"));
      if (!ear) throw DataError("invalid ear '" + field("ear") + "'", line_no);
      row.ear = *ear;
      if (!field("gender").empty()) row.gender = field("gender");
      row.age_years = parse_number(field("age"), "age", line_no);
      if (!field("date").empty()) row.test_date = field("date");
      for (std::size_t i = 0; i < kNumAudiogramFrequencies; ++i) {
        const auto name = ag_column(kAudiogramFrequencies[i]);
        row.audiogram[i] = parse_number(field(name), name, line_no);
      }
      for (int level : kSpeechLevels) {
        const auto name = wrs_column(level);
        if (const auto v = parse_number(field(name), name, line_no)) {
          add_speech_point(row.speech, {static_cast<double>(level), checked_wrs(*v, name, line_no)},
                           result.warnings, row.id);
        }
      }
      parsed.push_back(std::move(row));
    } catch (const DataError& e) {
      result.errors.push_back({line_no, e.what()});
    }
  }
  if (result.total_rows == 0) throw DataError("input file has a header but no rows");
  finalize_rows(result, std::move(parsed));
  return result;
}

IngestResult ingest_json_text(std::string_view text) {
  using nlohmann::json;
  IngestResult result;
  if (trim(text).empty()) throw DataError("input file is empty");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  const json* records = &doc;
  if (doc.is_object() && doc.contains("patients")) records = &doc.at("patients");
  if (!records->is_array()) throw DataError("JSON input must be an array of patient rows");
  if (records->empty()) throw DataError("input file has no rows");

  auto optional_number = [](const json& obj, const std::string& key,
                            std::size_t line) -> std::optional<double> {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    const auto& v = obj.at(key);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_number(trim(v.get<std::string>()), key, line);
    throw DataError("field '" + key + "' must be a number", line);
  };
  auto optional_string = [](const json& obj, const std::string& key) -> std::optional<std::string> {
    if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
    const auto& v = obj.at(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
  };

  std::vector<RawRow> parsed;
  std::size_t record_no = 0;
  for (const auto& obj : *records) {
    ++record_no;
    ++result.total_rows;
    try {
      if (!obj.is_object()) throw DataError("row is not an object", record_no);
      RawRow row;
      row.line = record_no;
      row.id = optional_string(obj, "id").value_or("");
      if (row.id.empty()) throw DataError("empty id", record_no);
      const auto ear = parse_ear(optional_string(obj, "ear").value_or(""));
      if (!ear) throw DataError("invalid ear", record_no);
      row.ear = *ear;
      row.gender = optional_string(obj, "gender");
      row.age_years = optional_number(obj, "age", record_no);
      row.test_date = optional_string(obj, "date");
      for (std::size_t i = 0; i < kNumAudiogramFrequencies; ++i) {
        row.audiogram[i] = optional_number(obj, ag_column(kAudiogramFrequencies[i]), record_no);
      }
      for (int level : kSpeechLevels) {
        const auto name = wrs_column(level);
        if (const auto v = optional_number(obj, name, record_no)) {
          add_speech_point(row.speech, {static_cast<double>(level), checked_wrs(*v, name, record_no)},
                           result.warnings, row.id);
        }
      }
      if (obj.contains("speech")) {
        for (const auto& p : obj.at("speech")) {
          const double level = p.at("level").get<double>();
          if (std::find(kSpeechLevels.begin(), kSpeechLevels.end(), level) == kSpeechLevels.end()) {
            throw DataError("speech level " + std::to_string(level) + " is not a test level",
                            record_no);
          }
          add_speech_point(row.speech, {level, checked_wrs(p.at("wrs").get<double>(), "speech", record_no)},
                           result.warnings, row.id);
        }
      }
      parsed.push_back(std::move(row));
    } catch (const DataError& e) {
      result.errors.push_back({record_no, e.what()});
    } catch (const nlohmann::json::exception& e) {
      result.errors.push_back({record_no, "line " + std::to_string(record_no) + ": " + e.what()});
    }
  }
  finalize_rows(result, std::move(parsed));
  return result;
}

IngestResult ingest(const std::filesystem::path& path, InputFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open input file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return format == InputFormat::csv ? ingest_csv_text(text) : ingest_json_text(text);
}

void write_csv(std::ostream& out, std::span<const RawRow> rows) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& row : rows) {
    out << row.id << ',' << to_string(row.ear) << ',' << row.gender.value_or("") << ',';
    if (row.age_years) out << *row.age_years;
    out << ',' << row.test_date.value_or("");
    for (const auto& t : row.audiogram) {
      out << ',';
      if (t) out << *t;
    }
    for (int level : kSpeechLevels) {
      out << ',';
      for (const auto& p : row.speech.points) {
        if (p.level == level) out << p.wrs;
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

Audiogram impute_audiogram(const PartialAudiogram& partial) {
  std::vector<std::size_t> measured;
  Audiogram out;
  for (std::size_t i = 0; i < kNumAudiogramFrequencies; ++i) {
    if (partial[i]) {
      measured.push_back(i);
      out.thresholds[i] = std::clamp(*partial[i], kMinThresholdHl, kMaxThresholdHl);
      out.imputed[i] = false;
    }
  }
  if (measured.empty()) throw DataError("audiogram has no measured thresholds");

  for (std::size_t i = 0; i < kNumAudiogramFrequencies; ++i) {
    if (partial[i]) continue;
    out.imputed[i] = true;
    const auto upper = std::find_if(measured.begin(), measured.end(),
                                    [i](std::size_t m) { return m > i; });
    if (upper == measured.begin()) {
      out.thresholds[i] = out.thresholds[*upper];
    } else if (upper == measured.end()) {
      out.thresholds[i] = out.thresholds[measured.back()];
    } else {
      const std::size_t lo = *(upper - 1);
      const std::size_t hi = *upper;
      const double x = std::log(static_cast<double>(kAudiogramFrequencies[i]));
      const double x0 = std::log(static_cast<double>(kAudiogramFrequencies[lo]));
      const double x1 = std::log(static_cast<double>(kAudiogramFrequencies[hi]));
      const double w = (x - x0) / (x1 - x0);
      out.thresholds[i] = (1.0 - w) * out.thresholds[lo] + w * out.thresholds[hi];
    }
  }
  return out;
}

Pta compute_pta(const Audiogram& a, const HlSplOffsets& offsets) {
  double sum = 0.0;
  for (int hz : kPtaFrequencies) sum += a.at(hz);
  Pta p;
  p.hl = sum / static_cast<double>(kPtaFrequencies.size());
  p.spl = p.hl + offsets.pta_mean();
  return p;
}

const PatientRecord& select_better_ear(const PatientRecord& left, const PatientRecord& right,
                                       EarTieBreak tie) {
  if (left.pta_spl < right.pta_spl) return left;
  if (right.pta_spl < left.pta_spl) return right;
  return tie == EarTieBreak::right ? right : left;
}

PatientRecord preprocess(const RawRow& row, const HlSplOffsets& offsets) {
  validate_speech(row.speech);
  PatientRecord rec;
  rec.id = row.id;
  rec.ear = row.ear;
  rec.gender = row.gender;
  rec.age_years = row.age_years;
  rec.test_date = row.test_date;
  rec.audiogram = impute_audiogram(row.audiogram);
  rec.speech = row.speech;
  const Pta pta = compute_pta(rec.audiogram, offsets);
  rec.pta_hl = pta.hl;
  rec.pta_spl = pta.spl;
  return rec;
}

PreprocessResult preprocess_all(std::span<const RawRow> rows, const HlSplOffsets& offsets,
                                EarTieBreak tie) {
  PreprocessResult result;
  std::map<std::string, std::vector<PatientRecord>> by_id;
  for (const auto& row : rows) {
    try {
      auto rec = preprocess(row, offsets);
      by_id[rec.id].push_back(std::move(rec));
    } catch (const DataError& e) {
      result.errors.push_back({row.line, e.what()});
    }
  }
  result.patients.reserve(by_id.size());
  for (auto& [id, ears] : by_id) {
    const PatientRecord* left = nullptr;
    const PatientRecord* right = nullptr;
    for (const auto& r : ears) (r.ear == Ear::left ? left : right) = &r;
    if (left && right) {
      result.patients.push_back(select_better_ear(*left, *right, tie));
      ++result.dropped_other_ear;
    } else {
      result.patients.push_back(left ? *left : *right);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string to_string(SlopeKind kind) {
  switch (kind) {
    case SlopeKind::fully_determined: return "fully_determined";
    case SlopeKind::half_determined: return "half_determined";
    case SlopeKind::undetermined: return "undetermined";
    case SlopeKind::no_estimation: return "no_estimation";
  }
  return "unknown";
}

SlopeCategory categorize(const SpeechMeasurement& speech, int no_estimation_floor) {
  SlopeCategory cat;
  cat.wrs_max_point = speech.wrs_max_point();
  const int wrs_max = cat.wrs_max_point.wrs;
  if (wrs_max < no_estimation_floor) {
    cat.kind = SlopeKind::no_estimation;
    return cat;
  }
  // wrs in [0.15, 0.85] * wrs_max, evaluated in integer percent units.
  for (const auto& p : speech.points) {
    if (p == cat.wrs_max_point) continue;
    if (p.wrs * 100 >= 15 * wrs_max && p.wrs * 100 <= 85 * wrs_max) {
      cat.slope_area_points.push_back(p);
    }
  }
  std::sort(cat.slope_area_points.begin(), cat.slope_area_points.end(),
            [](const SpeechPoint& a, const SpeechPoint& b) { return a.level < b.level; });
  switch (cat.slope_area_points.size()) {
    case 0: cat.kind = SlopeKind::undetermined; break;
    case 1: cat.kind = SlopeKind::half_determined; break;
    default: cat.kind = SlopeKind::fully_determined; break;
  }
  return cat;
}

DedupResult dedup_audiograms(std::span<const PatientRecord> records) {
  DedupResult result;
  result.index_of.reserve(records.size());
  std::map<std::array<double, kNumAudiogramFrequencies>, std::size_t> seen;
  for (const auto& r : records) {
    auto [it, inserted] = seen.emplace(r.audiogram.thresholds, result.unique.size());
    if (inserted) result.unique.push_back(r.audiogram);
    result.index_of.push_back(it->second);
  }
  return result;
}

}  // namespace srtkit
