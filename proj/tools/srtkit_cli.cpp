// srtkit command line: run, simulate, calibrate-sii, validate.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "srtkit/config.hpp"
#include "srtkit/errors.hpp"
#include "srtkit/pipeline.hpp"
#include "srtkit/protocol_sim.hpp"

namespace fs = std::filesystem;
using namespace srtkit;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kInternal = 4 };

struct Overrides {
  std::string config_file;
  std::optional<std::string> input, format, out, importance, band_table, ci_table;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool calibrate = false;
  bool corrected_delta_sh = false;
  bool no_dedup = false;
};

void add_config_flags(CLI::App* cmd, Overrides& o, bool with_input) {
  cmd->add_option("-c,--config", o.config_file, "key = value configuration file");
  if (with_input) {
    cmd->add_option("-i,--input", o.input, "patient table (csv or json)");
    cmd->add_option("--format", o.format, "input format: csv or json");
  }
  cmd->add_option("-o,--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "random seed (cross-validation folds)");
  cmd->add_option("-j,--workers", o.workers, "worker threads");
  cmd->add_option("--importance", o.importance, "band importance: spin, average or flat");
  cmd->add_option("--band-table", o.band_table, "SII band table file");
  cmd->add_option("--ci-table", o.ci_table, "WRS confidence table (wrs, ci_low, ci_high)");
  cmd->add_flag("--calibrate-sii", o.calibrate, "rescale the speech spectrum to the reference SII slope");
  cmd->add_flag("--corrected-delta-sh", o.corrected_delta_sh, "express the SII slope error in %/dB");
  cmd->add_flag("--no-dedup", o.no_dedup, "compute the SII curve for every patient");
}

PipelineConfig build_config(const Overrides& o) {
  PipelineConfig c = o.config_file.empty() ? PipelineConfig{} : load_config(o.config_file);
  if (o.input) c.input = *o.input;
  if (o.format) c.set("input_format", *o.format);
  if (o.out) c.output_dir = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.importance) c.set("importance", *o.importance);
  if (o.band_table) c.band_table = *o.band_table;
  if (o.ci_table) c.ci_table = *o.ci_table;
  if (o.calibrate) c.calibrate_sii = true;
  if (o.corrected_delta_sh) c.corrected_delta_sh = true;
  if (o.no_dedup) c.dedup = false;
  c.validate();
  return c;
}

struct SimOptions {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> noise_seed;
  std::string noise = "binomial";
  double jitter = 5.0;
  std::string stop = "one-word";
};

void add_sim_flags(CLI::App* cmd, SimOptions& s) {
  cmd->add_option("-n,--n", s.n, "number of simulated patients");
  cmd->add_option("--cohort-seed", s.seed, "seed of the cohort generator");
  cmd->add_option("--noise-seed", s.noise_seed, "seed of the measurement noise (default: cohort seed + 1)");
  cmd->add_option("--noise", s.noise, "none or binomial");
  cmd->add_option("--jitter", s.jitter, "audiogram jitter per frequency, dB (5 dB steps)");
  cmd->add_option("--stop", s.stop, "stopping rule: one-word or ceiling");
}

std::vector<SimulatedPatient> simulate(const SimOptions& s) {
  GeneratorConfig g;
  g.jitter = s.jitter;
  StopRule stop;
  if (s.stop == "one-word") stop = StopRule::one_word;
  else if (s.stop == "ceiling") stop = StopRule::ceiling_only;
  else throw ConfigError("--stop must be one-word or ceiling");
  auto cohort = generate_cohort(s.n, g, s.seed);
  simulate_cohort(cohort, parse_noise(s.noise), s.noise_seed.value_or(s.seed + 1), stop);
  return cohort;
}

void print_counts(const Analysis& a) {
  const auto& c = a.counts;
  std::printf("patients %zu: fully %zu, half %zu, undetermined %zu, no estimation %zu\n", c.patients,
              c.categories[0], c.categories[1], c.categories[2], c.categories[3]);
  std::printf("SII curves %zu (%zu without slope)\n", c.sii_audiograms, c.sii_failures);
}

// Runs `body`, mapping exceptions to exit codes and an error.json in `out_dir`.
template <typename Body>
int guarded(const std::string& stage, const std::optional<fs::path>& out_dir, Body body) {
  auto fail = [&](const char* kind, const std::string& msg, int code) {
    std::fprintf(stderr, "srtkit %s: %s error: %s\n", stage.c_str(), kind, msg.c_str());
    if (out_dir) write_error_report(*out_dir, stage, kind, msg, code);
    return code;
  };
  try {
    body();
    return kOk;
  } catch (const ConfigError& e) {
    return fail("config", e.what(), kConfig);
  } catch (const DataError& e) {
    return fail("data", e.what(), kData);
  } catch (const ModelError& e) {
    return fail("model", e.what(), kInternal);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kInternal);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech recognition threshold estimation from clinical word-recognition data"};
  app.require_subcommand(1);

  Overrides run_opts;
  auto* run = app.add_subcommand("run", "estimate SRTs for a patient table and write reports");
  add_config_flags(run, run_opts, true);

  SimOptions sim_opts;
  std::string sim_out = "cohort.csv";
  std::string sim_truth;
  std::string sim_format = "csv";
  auto* sim = app.add_subcommand("simulate", "write a synthetic cohort in the input schema");
  add_sim_flags(sim, sim_opts);
  sim->add_option("-o,--out", sim_out, "output file");
  sim->add_option("--truth", sim_truth, "also write the generating parameters to this CSV");

  Overrides cal_opts;
  std::string cal_table_out;
  auto* cal = app.add_subcommand("calibrate-sii", "fit the speech spectrum to the reference SII slope");
  cal->add_option("-c,--config", cal_opts.config_file, "configuration file");
  cal->add_option("--importance", cal_opts.importance, "band importance: spin, average or flat");
  cal->add_option("--band-table", cal_opts.band_table, "SII band table file");
  cal->add_option("--write-table", cal_table_out, "write the calibrated band table here");

  Overrides val_opts;
  SimOptions val_sim;
  auto* val = app.add_subcommand("validate", "simulate a cohort, run the pipeline and score it against the truth");
  add_config_flags(val, val_opts, false);
  add_sim_flags(val, val_sim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  if (*run) {
    const std::optional<fs::path> out = run_opts.out ? std::optional<fs::path>(*run_opts.out)
                                                     : std::optional<fs::path>(PipelineConfig{}.output_dir);
    return guarded("run", out, [&] {
      const PipelineConfig config = build_config(run_opts);
      const Analysis a = run_pipeline(config);
      print_counts(a);
      std::printf("reports written to %s\n", config.output_dir.string().c_str());
    });
  }

  if (*sim) {
    return guarded("simulate", std::nullopt, [&] {
      const auto cohort = simulate(sim_opts);
      const auto rows = to_raw_rows(cohort);
      std::ofstream out(sim_out, std::ios::binary);
      if (!out) throw ConfigError("cannot write " + sim_out);
      write_csv(out, rows);
      if (!sim_truth.empty()) {
        std::ofstream truth(sim_truth, std::ios::binary);
        if (!truth) throw ConfigError("cannot write " + sim_truth);
        write_truth_csv(truth, cohort);
      }
      std::printf("%zu simulated patients written to %s\n", cohort.size(), sim_out.c_str());
    });
  }

  if (*cal) {
    return guarded("calibrate-sii", std::nullopt, [&] {
      PipelineConfig config = build_config(cal_opts);
      const BandTable table = config.band_table ? load_band_table(*config.band_table) : builtin_band_table();
      const SiiParameters base = SiiParameters::from_table(table, config.importance);
      const SiiCurve before = find_linear_range(flat_audiogram(0.0), base);
      const CalibrationResult result = calibrate_spectrum(base, config.s_sii_nh);
      std::printf("zero-audiogram SII slope: %.6f 1/dB before, %.9f 1/dB after (contrast %.6f)\n",
                  before.s_sii, result.achieved_slope, result.contrast);
      std::printf("%-4s %10s %10s %8s %6s\n", "class", "s_sii", "s_wrs", "R2", "conv");
      for (std::size_t k = 0; k < kNumBisgaard; ++k) {
        const SiiCurve c = find_linear_range(bisgaard_audiogram(k), result.params);
        std::printf("%-4s %10.5f %10.3f %8.5f %6s\n", bisgaard_name(k).c_str(), c.s_sii,
                    convert_slope(c.s_sii, config.s_wrs_nh, config.s_sii_nh), c.r_squared,
                    c.converged ? "yes" : "no");
      }
      if (!cal_table_out.empty()) {
        BandTable out_table = table;
        out_table.speech_spectrum = result.params.speech_spectrum;
        std::ofstream out(cal_table_out, std::ios::binary);
        if (!out) throw ConfigError("cannot write " + cal_table_out);
        write_band_table(out, out_table);
      }
    });
  }

  if (*val) {
    const fs::path out = val_opts.out.value_or("srtkit_validate");
    return guarded("validate", out, [&] {
      PipelineConfig config = build_config(val_opts);
      config.output_dir = out;
      config.input = "simulated";
      const auto cohort = simulate(val_sim);
      IngestResult ingested;
      ingested.rows = to_raw_rows(cohort);
      ingested.total_rows = ingested.rows.size();
      const Resources resources = Resources::from_config(config);
      const Analysis a = analyze_rows(ingested, config, resources);
      write_reports(out, a, config, resources);
      const OracleReport report = validate(cohort, a.results, EstimatorSettings::from(config));
      std::ofstream rep(out / "validate.csv", std::ios::binary);
      write_oracle_report(rep, report);
      {
        std::ofstream truth(out / "truth.csv", std::ios::binary);
        write_truth_csv(truth, cohort);
      }
      print_counts(a);
      for (const auto& p : report.procedures) {
        std::printf("%-10s rows %6zu  bias %7.3f dB  rmse %7.3f dB  coverage %6.3f  median dSRT %7.3f dB\n",
                    to_string(p.procedure).c_str(), p.rows, p.bias, p.rmse, p.coverage, p.median_delta_srt);
      }
    });
  }
  return kOk;
}
