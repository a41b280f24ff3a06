#include "srtkit/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "srtkit/errors.hpp"
#include "srtkit/psychometrics.hpp"

namespace srtkit {

namespace {

using nlohmann::json;

constexpr std::array<SlopeKind, 4> kKinds{SlopeKind::fully_determined, SlopeKind::half_determined,
                                          SlopeKind::undetermined, SlopeKind::no_estimation};
constexpr std::array<Procedure, 3> kProcedures{Procedure::empirical, Procedure::sii_slope,
                                               Procedure::nh_slope};

// Shortest round-trip text; empty for NaN so that spreadsheets read a blank.
std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // no "-0"
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double bin_floor(double v, double width) { return std::floor(v / width) * width; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Runs body(i) for i in [0, n) on `workers` threads; each index is handled once.
template <typename Body>
void parallel_for(std::size_t n, unsigned workers, Body body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> failures(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        failures[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

struct SiiOutcome {
  std::optional<SiiCurve> curve;
};

}  // namespace

Resources Resources::from_config(const PipelineConfig& config) {
  Resources r;
  const BandTable table = config.band_table ? load_band_table(*config.band_table) : builtin_band_table();
  r.sii = SiiParameters::from_table(table, config.importance);
  r.sii.level_distortion_enabled = config.level_distortion;
  if (config.calibrate_sii) {
    const CalibrationResult cal = calibrate_spectrum(r.sii, config.s_sii_nh);
    r.sii = cal.params;
    r.calibration_contrast = cal.contrast;
  }
  r.ci_table = config.ci_table ? WrsConfidenceTable::load(*config.ci_table) : WrsConfidenceTable::binomial();
  return r;
}

bool StageCounts::conserved() const {
  std::size_t cats = 0;
  for (auto c : categories) cats += c;
  const std::size_t after_ingest =
      input_rows - row_errors - dropped_no_audiogram - dropped_no_speech - superseded_sessions;
  return row_errors + dropped_no_audiogram + dropped_no_speech + superseded_sessions <= input_rows &&
         after_ingest == preprocess_errors + dropped_other_ear + patients && cats == patients;
}

Analysis analyze(std::vector<PatientRecord> patients, const PipelineConfig& config,
                 const Resources& resources) {
  Analysis a;
  a.patients = std::move(patients);
  std::sort(a.patients.begin(), a.patients.end(),
            [](const PatientRecord& x, const PatientRecord& y) { return x.id < y.id; });
  const std::size_t n = a.patients.size();
  a.counts.input_rows = n;
  a.counts.patients = n;

  a.results.resize(n);
  std::vector<std::size_t> need_sii;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = a.results[i];
    r.id = a.patients[i].id;
    r.category = categorize(a.patients[i].speech, config.no_estimation_floor);
    ++a.counts.categories[static_cast<std::size_t>(r.category.kind)];
    if (r.category.kind == SlopeKind::fully_determined || r.category.kind == SlopeKind::half_determined) {
      need_sii.push_back(i);
    }
  }

  // One SII curve per distinct audiogram among the patients that need a slope.
  std::vector<PatientRecord> sii_patients;
  sii_patients.reserve(need_sii.size());
  for (auto i : need_sii) sii_patients.push_back(a.patients[i]);
  std::vector<Audiogram> curves_for;
  std::vector<std::size_t> curve_index(need_sii.size());
  if (config.dedup) {
    DedupResult d = dedup_audiograms(sii_patients);
    curves_for = std::move(d.unique);
    curve_index = std::move(d.index_of);
  } else {
    for (std::size_t j = 0; j < sii_patients.size(); ++j) {
      curves_for.push_back(sii_patients[j].audiogram);
      curve_index[j] = j;
    }
  }
  std::vector<SiiOutcome> curves(curves_for.size());
  parallel_for(curves_for.size(), config.workers, [&](std::size_t u) {
    try {
      curves[u].curve = find_linear_range(curves_for[u], resources.sii);
    } catch (const ModelError&) {
      curves[u].curve.reset();
    }
  });
  a.counts.sii_audiograms = curves.size();
  for (const auto& c : curves) {
    if (!c.curve) ++a.counts.sii_failures;
  }

  const EstimatorSettings settings = EstimatorSettings::from(config);
  std::vector<const SiiCurve*> patient_curve(n, nullptr);
  for (std::size_t j = 0; j < need_sii.size(); ++j) {
    const auto& c = curves[curve_index[j]].curve;
    patient_curve[need_sii[j]] = c ? &*c : nullptr;
  }

  parallel_for(n, config.workers, [&](std::size_t i) {
    const PatientRecord& p = a.patients[i];
    PatientResult& r = a.results[i];
    switch (r.category.kind) {
      case SlopeKind::fully_determined:
        r.estimates.push_back(estimate_empirical(p, r.category, resources.ci_table, settings));
        [[fallthrough]];
      case SlopeKind::half_determined: {
        const Anchor anchor = select_anchor(p, r.category, settings);
        const SiiCurve* curve = patient_curve[i];
        if (curve == nullptr) {
          SrtEstimate e;
          e.procedure = Procedure::sii_slope;
          e.anchor = anchor.point;
          e.fit_points = {anchor.point};
          e.inaudible_anchor = anchor.inaudible_fallback;
          e.srt = e.delta_srt = e.delta_slope = std::numeric_limits<double>::quiet_NaN();
          e.exclusion = kNoPositiveSiiSlope;
          attach_plomp(e, p.pta_spl, settings);
          r.estimates.push_back(e);
          break;
        }
        r.s_sii = curve->s_sii;
        const double s_h = convert_slope(curve->s_sii, config.s_wrs_nh, config.s_sii_nh);
        const double ds_h =
            config.corrected_delta_sh
                ? delta_slope_sii_converted(config.delta_sii,
                                            curve->best_triple[2].level - curve->best_triple[0].level,
                                            config.s_wrs_nh, config.s_sii_nh)
                : delta_slope_sii(config.delta_sii);
        r.estimates.push_back(estimate_sii_slope(p, s_h, ds_h, anchor, resources.ci_table, settings));
        break;
      }
      case SlopeKind::undetermined:
        r.estimates.push_back(estimate_nh_slope(p, settings));
        break;
      case SlopeKind::no_estimation:
        break;
    }
  });

  // Fully- versus half-determined groups.
  std::vector<double> pta_f, pta_h, wrs_f, wrs_h;
  for (std::size_t i = 0; i < n; ++i) {
    const auto kind = a.results[i].category.kind;
    if (kind == SlopeKind::fully_determined) {
      pta_f.push_back(a.patients[i].pta_spl);
      wrs_f.push_back(a.patients[i].speech.wrs_max());
    } else if (kind == SlopeKind::half_determined) {
      pta_h.push_back(a.patients[i].pta_spl);
      wrs_h.push_back(a.patients[i].speech.wrs_max());
    }
  }
  auto compare = [](const std::string& name, double width, const std::vector<double>& x,
                    const std::vector<double>& y) {
    DistRow row{name, width, std::nullopt};
    try {
      row.comparison = compare_distributions(x, y, width);
    } catch (const DataError&) {
    }
    return row;
  };
  a.distributions.push_back(compare("pta_spl", 5.0, pta_f, pta_h));
  a.distributions.push_back(compare("wrs_max", 5.0, wrs_f, wrs_h));

  // SRT_f - SRT_h against the SII slope and the anchor's distance from 50%.
  for (const auto& r : a.results) {
    const SrtEstimate* f = r.find(Procedure::empirical);
    const SrtEstimate* h = r.find(Procedure::sii_slope);
    if (f == nullptr || h == nullptr || f->excluded() || h->excluded()) continue;
    a.glm_rows.push_back({f->srt - h->srt, h->slope_used, static_cast<double>(h->anchor.wrs) - 50.0});
  }
  const std::size_t needed = static_cast<std::size_t>(config.folds) * 2 + 4;
  if (a.glm_rows.size() < needed) {
    a.glm_note = "too few fully-determined patients with both estimates (" +
                 std::to_string(a.glm_rows.size()) + ")";
  } else {
    try {
      a.glm = glm_cv(a.glm_rows, config.folds, config.seed);
    } catch (const std::exception& e) {
      a.glm_note = e.what();
    }
  }
  return a;
}

Analysis analyze_rows(const IngestResult& ingested, const PipelineConfig& config,
                      const Resources& resources) {
  PreprocessResult pre = preprocess_all(ingested.rows, config.offsets, config.ear_tie_break);
  Analysis a = analyze(std::move(pre.patients), config, resources);
  a.counts.input_rows = ingested.total_rows;
  a.counts.row_errors = ingested.errors.size();
  a.counts.dropped_no_audiogram = ingested.dropped_no_audiogram;
  a.counts.dropped_no_speech = ingested.dropped_no_speech;
  a.counts.superseded_sessions = ingested.superseded_sessions;
  a.counts.preprocess_errors = pre.errors.size();
  a.counts.dropped_other_ear = pre.dropped_other_ear;
  a.warnings = ingested.warnings;
  a.errors = ingested.errors;
  a.errors.insert(a.errors.end(), pre.errors.begin(), pre.errors.end());
  if (!a.counts.conserved()) throw std::logic_error("patient counts do not reconcile across stages");
  return a;
}

std::vector<PercentileRow> percentile_series(std::span<const double> x, std::span<const double> values,
                                             double bin_width) {
  if (x.size() != values.size()) throw DataError("percentile series: x and values differ in length");
  std::map<double, std::vector<double>> bins;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isfinite(x[i]) && std::isfinite(values[i])) bins[bin_floor(x[i], bin_width)].push_back(values[i]);
  }
  std::vector<PercentileRow> out;
  for (auto& [bin, v] : bins) {
    PercentileRow row;
    row.bin = bin;
    row.n = v.size();
    for (std::size_t q = 0; q < kSeriesPercentiles.size(); ++q) row.values[q] = percentile(v, kSeriesPercentiles[q]);
    out.push_back(row);
  }
  return out;
}

const std::vector<std::string>& estimates_columns() {
  static const std::vector<std::string> cols{
      "id",          "ear",        "category",     "procedure",  "srt",       "slope",
      "delta_slope", "delta_srt",  "srt_min",      "anchor_level", "anchor_wrs", "fit_levels",
      "inaudible_anchor", "s_sii", "pta_hl",       "pta_spl",    "wrs_max",   "plomp_a",
      "plomp_d",     "delta_d",    "excluded",     "exclusion_reason"};
  return cols;
}

void write_estimates_csv(std::ostream& out, const Analysis& a) {
  const auto& cols = estimates_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
  out << '\n';
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    const PatientRecord& p = a.patients[i];
    const PatientResult& r = a.results[i];
    for (const auto& e : r.estimates) {
      std::string levels;
      for (const auto& pt : e.fit_points) levels += (levels.empty() ? "" : ";") + num(pt.level);
      out << p.id << ',' << to_string(p.ear) << ',' << to_string(r.category.kind) << ','
          << to_string(e.procedure) << ',' << num(e.srt) << ',' << num(e.slope_used) << ','
          << num(e.delta_slope) << ',' << num(e.delta_srt) << ','
          << (e.procedure == Procedure::nh_slope ? num(e.srt_min) : "") << ',' << num(e.anchor.level)
          << ',' << e.anchor.wrs << ',' << levels << ',' << (e.inaudible_anchor ? 1 : 0) << ','
          << (r.s_sii ? num(*r.s_sii) : "") << ',' << num(p.pta_hl) << ',' << num(p.pta_spl) << ','
          << p.speech.wrs_max() << ',' << num(e.plomp_a) << ',' << num(e.plomp_d) << ','
          << num(e.delta_d) << ',' << (e.excluded() ? 1 : 0) << ',' << exclusion_reason(e.exclusion)
          << '\n';
    }
  }
}

void write_population_csv(std::ostream& out, const Analysis& a) {
  out << "kind,label,category,wrs_max,pta_spl_bin,count\n";
  const StageCounts& c = a.counts;
  const std::pair<const char*, std::size_t> stages[] = {
      {"input_rows", c.input_rows},
      {"row_errors", c.row_errors},
      {"dropped_no_audiogram", c.dropped_no_audiogram},
      {"dropped_no_speech", c.dropped_no_speech},
      {"superseded_sessions", c.superseded_sessions},
      {"preprocess_errors", c.preprocess_errors},
      {"dropped_other_ear", c.dropped_other_ear},
      {"patients", c.patients},
      {"sii_audiograms", c.sii_audiograms},
      {"sii_failures", c.sii_failures},
  };
  for (const auto& [name, count] : stages) out << "stage," << name << ",,,," << count << '\n';
  for (auto kind : kKinds) {
    out << "category,," << to_string(kind) << ",,," << c.categories[static_cast<std::size_t>(kind)] << '\n';
  }

  std::map<std::tuple<std::size_t, int, double>, std::size_t> grid;
  std::map<std::pair<std::size_t, std::string>, std::size_t> exclusions;
  for (std::size_t i = 0; i < a.results.size(); ++i) {
    const auto kind = static_cast<std::size_t>(a.results[i].category.kind);
    ++grid[{kind, a.patients[i].speech.wrs_max(), bin_floor(a.patients[i].pta_spl, 5.0)}];
    for (const auto& e : a.results[i].estimates) {
      if (e.excluded()) ++exclusions[{static_cast<std::size_t>(e.procedure), exclusion_reason(e.exclusion)}];
    }
  }
  for (const auto& [key, count] : grid) {
    const auto& [kind, wrs, pta] = key;
    out << "grid,," << to_string(kKinds[kind]) << ',' << wrs << ',' << num(pta) << ',' << count << '\n';
  }
  for (const auto& [key, count] : exclusions) {
    out << "exclusion," << to_string(kProcedures[key.first]) << ',' << key.second << ",,," << count << '\n';
  }
}

void write_stats_csv(std::ostream& out, const Analysis& a) {
  out << "variable,group_x,group_y,n_x,n_y,bin_width,overlapping_index,welch_t,welch_df,p_mean,ks_d,p_dist\n";
  for (const auto& row : a.distributions) {
    out << row.variable << ",fully_determined,half_determined,";
    if (row.comparison) {
      const auto& c = *row.comparison;
      out << c.n_x << ',' << c.n_y << ',' << num(row.bin_width) << ',' << num(c.overlapping_index) << ','
          << num(c.welch.t) << ',' << num(c.welch.df) << ',' << num(c.welch_p) << ',' << num(c.ks.d)
          << ',' << num(c.ks_p) << '\n';
    } else {
      out << ",," << num(row.bin_width) << ",,,,,,\n";
    }
  }
}

void write_stats_json(std::ostream& out, const Analysis& a, const PipelineConfig& config) {
  json j;
  j["alpha"] = config.alpha;
  json dist = json::array();
  for (const auto& row : a.distributions) {
    json d;
    d["variable"] = row.variable;
    d["bin_width"] = row.bin_width;
    if (row.comparison) {
      const auto& c = *row.comparison;
      d["n_fully_determined"] = c.n_x;
      d["n_half_determined"] = c.n_y;
      d["overlapping_index"] = jnum(c.overlapping_index);
      d["welch"] = {{"t", jnum(c.welch.t)}, {"df", jnum(c.welch.df)}, {"p", jnum(c.welch_p)},
                    {"significant", c.welch_p < config.alpha}};
      d["ks"] = {{"d", jnum(c.ks.d)}, {"p", jnum(c.ks_p)}, {"significant", c.ks_p < config.alpha}};
    } else {
      d["note"] = "group too small";
    }
    dist.push_back(d);
  }
  j["distributions"] = dist;

  json glm;
  glm["rows"] = a.glm_rows.size();
  if (a.glm) {
    static const char* names[] = {"beta0", "beta1", "beta2"};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& m = a.glm->mean[k];
      glm["mean"][names[k]] = {{"estimate", jnum(m.estimate)}, {"se", jnum(m.se)},
                               {"tstat", jnum(m.t)}, {"p", jnum(m.p)}};
    }
    glm["rmse_cv"] = jnum(a.glm->rmse_cv);
    glm["pearson_r"] = jnum(a.glm->pearson_r);
    glm["rmse"] = jnum(a.glm->rmse);
    glm["bias"] = jnum(a.glm->bias);
    glm["folds"] = a.glm->folds.size();
  } else {
    glm["note"] = a.glm_note;
  }
  j["glm"] = glm;

  json procs;
  for (auto proc : kProcedures) {
    std::vector<double> dsrt;
    std::size_t rows = 0, excluded = 0;
    for (const auto& r : a.results) {
      const SrtEstimate* e = r.find(proc);
      if (e == nullptr) continue;
      ++rows;
      if (e->excluded()) {
        ++excluded;
      } else {
        dsrt.push_back(e->delta_srt);
      }
    }
    json p{{"rows", rows}, {"excluded", excluded}};
    p["median_delta_srt"] = dsrt.empty() ? json(nullptr) : jnum(percentile(dsrt, 50));
    procs[to_string(proc)] = p;
  }
  j["procedures"] = procs;
  out << j.dump(2) << '\n';
}

void write_glm_csv(std::ostream& out, const Analysis& a) {
  out << "k,parameter,estimate,se,tstat,p\n";
  if (!a.glm) return;
  static const char* names[] = {"beta0", "beta1", "beta2"};
  auto row = [&](const std::string& k, const std::array<GlmCoefficient, 3>& beta) {
    for (std::size_t j = 0; j < 3; ++j) {
      out << k << ',' << names[j] << ',' << num(beta[j].estimate) << ',' << num(beta[j].se) << ','
          << num(beta[j].t) << ',' << num(beta[j].p) << '\n';
    }
  };
  for (const auto& f : a.glm->folds) row(std::to_string(f.k), f.beta);
  row("mean", a.glm->mean);
}

void write_reports(const std::filesystem::path& dir, const Analysis& a, const PipelineConfig& config,
                   const Resources& resources) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "plotdata");
  {
    auto out = open_out(dir / "estimates.csv");
    write_estimates_csv(out, a);
  }
  {
    auto out = open_out(dir / "population.csv");
    write_population_csv(out, a);
  }
  {
    auto out = open_out(dir / "stats.csv");
    write_stats_csv(out, a);
  }
  {
    auto out = open_out(dir / "stats.json");
    write_stats_json(out, a, config);
  }
  {
    auto out = open_out(dir / "glm.csv");
    write_glm_csv(out, a);
  }

  std::vector<std::string> plot_files;
  for (auto proc : kProcedures) {
    const std::string name = to_string(proc);
    std::vector<double> loss, d;
    {
      const std::string file = "srt_loss_vs_pta_" + name + ".csv";
      auto out = open_out(dir / "plotdata" / file);
      out << "id,pta_spl,srt,srt_loss\n";
      for (std::size_t i = 0; i < a.results.size(); ++i) {
        const SrtEstimate* e = a.results[i].find(proc);
        if (e == nullptr || e->excluded()) continue;
        out << a.patients[i].id << ',' << num(a.patients[i].pta_spl) << ',' << num(e->srt) << ','
            << num(e->srt - config.srt_nh) << '\n';
        loss.push_back(100.0 - a.patients[i].speech.wrs_max());
        d.push_back(e->plomp_d);
      }
      plot_files.push_back("plotdata/" + file);
    }
    const std::string file = "d_vs_discrimination_loss_" + name + ".csv";
    auto out = open_out(dir / "plotdata" / file);
    out << "discrimination_loss,n,p10,p30,p50,p70,p90\n";
    for (const auto& row : percentile_series(loss, d, 5.0)) {
      out << num(row.bin) << ',' << row.n;
      for (double v : row.values) out << ',' << num(v);
      out << '\n';
    }
    plot_files.push_back("plotdata/" + file);
  }

  json m;
  m["tool"] = "srtkit";
  m["config_hash"] = hex64(config.hash());
  m["seed"] = config.seed;
  json cfg;
  for (const auto& [k, v] : config.canonical()) cfg[k] = v;
  m["config"] = cfg;
  m["input"] = config.input.string();
  const StageCounts& c = a.counts;
  m["counts"] = {{"input_rows", c.input_rows},
                 {"row_errors", c.row_errors},
                 {"dropped_no_audiogram", c.dropped_no_audiogram},
                 {"dropped_no_speech", c.dropped_no_speech},
                 {"superseded_sessions", c.superseded_sessions},
                 {"preprocess_errors", c.preprocess_errors},
                 {"dropped_other_ear", c.dropped_other_ear},
                 {"patients", c.patients},
                 {"sii_audiograms", c.sii_audiograms},
                 {"sii_failures", c.sii_failures},
                 {"conserved", c.conserved()}};
  for (auto kind : kKinds) m["counts"]["category"][to_string(kind)] = c.categories[static_cast<std::size_t>(kind)];
  m["sii"] = {{"reference_level_db_spl", resources.sii.reference_level()},
              {"calibration_contrast", resources.calibration_contrast ? json(*resources.calibration_contrast)
                                                                      : json(nullptr)}};
  m["ci_table"] = resources.ci_table.source() == WrsConfidenceTable::Source::builtin_binomial ? "binomial"
                                                                                              : "external";
  m["warnings"] = a.warnings.size();
  json errs = json::array();
  for (const auto& e : a.errors) errs.push_back({{"line", e.line}, {"message", e.message}});
  m["row_errors"] = errs;
  json outputs = {"estimates.csv", "population.csv", "stats.csv", "stats.json", "glm.csv"};
  for (const auto& f : plot_files) outputs.push_back(f);
  m["outputs"] = outputs;
  auto out = open_out(dir / "manifest.json");
  out << m.dump(2) << '\n';
}

Analysis run_pipeline(const PipelineConfig& config) {
  config.validate();
  if (config.input.empty()) throw ConfigError("no input file given");
  const Resources resources = Resources::from_config(config);
  const IngestResult ingested = ingest(config.input, config.input_format);
  Analysis a = analyze_rows(ingested, config, resources);
  write_reports(config.output_dir, a, config, resources);
  return a;
}

void write_error_report(const std::filesystem::path& dir, const std::string& stage, const std::string& kind,
                        const std::string& message, int exit_code) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream out(dir / "error.json", std::ios::binary);
  if (!out) return;
  const json j{{"stage", stage}, {"kind", kind}, {"message", message}, {"exit_code", exit_code}};
  out << j.dump(2) << '\n';
}

}  // namespace srtkit
