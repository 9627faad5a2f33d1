// rloc command-line front end.
//
// Subcommands:
//   run      - single experiment from a config (or defaults), CSV/JSON out
//   sweep    - one experiment per sweep value, flattened into one file
//   plot     - render a sweep results file as an SVG figure
//   validate - resolve the config, generate the scenario, report problems
//
// Exit codes: 0 success, 2 config error, 3 precondition/degeneracy,
// 4 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rloc/rloc.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir = "out";
  std::string format = "csv";
  int parallelism = 0;
  std::vector<std::string> technique_names;
};

void add_common(CLI::App* cmd, CommonFlags* flags, bool with_output) {
  cmd->add_option("--config", flags->config_path, "TOML config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", flags->seed, "Override the master seed")
      ->each([flags](const std::string&) { flags->seed_given = true; });
  cmd->add_option("--parallelism", flags->parallelism,
                  "Worker threads for trials")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--technique", flags->technique_names,
                  "Restrict to named techniques (repeatable)");
  if (with_output) {
    cmd->add_option("--out", flags->out_dir, "Output directory");
    cmd->add_option("--format", flags->format, "Results file format")
        ->check(CLI::IsMember({"csv", "json"}));
  }
}

rloc::ExperimentConfig load_config(const CommonFlags& flags) {
  rloc::ExperimentConfig cfg;
  if (!flags.config_path.empty()) cfg = rloc::parse_config(flags.config_path);
  if (flags.seed_given) cfg.seed = flags.seed;
  if (flags.parallelism > 0) cfg.parallelism = flags.parallelism;
  if (!flags.technique_names.empty()) {
    std::vector<rloc::Technique> picked;
    for (const std::string& name : flags.technique_names) {
      const rloc::Technique t = rloc::technique_from_name(name);
      if (std::find(picked.begin(), picked.end(), t) == picked.end())
        picked.push_back(t);
    }
    cfg.techniques = picked;
  }
  cfg.validate();
  return cfg;
}

void print_table(const std::vector<rloc::TechniqueRow>& rows) {
  std::printf("%-14s %-12s %6s %12s %10s %14s %7s\n", "technique", "alias",
              "value", "nrmse_m", "conv_rate", "runtime_mean_s", "trials");
  for (const rloc::TechniqueRow& r : rows) {
    std::printf("%-14s %-12s %6d %12.6f %10.4f %14.9f %7d\n",
                rloc::technique_name(r.technique),
                rloc::technique_alias(r.technique), r.sweep_value, r.nrmse_m,
                r.convergence_rate, r.runtime_mean_s, r.trials);
  }
}

int run_cmd(const CommonFlags& flags) {
  const rloc::ExperimentConfig cfg = load_config(flags);
  const rloc::ExperimentResult result = rloc::run_experiment(cfg);
  std::filesystem::create_directories(flags.out_dir);
  const std::string path = flags.out_dir + "/results." + flags.format;
  rloc::emit_results(result, flags.format, path);
  print_table(result.rows);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int sweep_cmd(const CommonFlags& flags) {
  const rloc::ExperimentConfig cfg = load_config(flags);
  if (cfg.sweep_axis == rloc::SweepAxis::None)
    throw rloc::config_error(
        "sweep subcommand requires sweep.axis (and sweep.values) in the "
        "config");
  const std::vector<rloc::ExperimentResult> results =
      rloc::sweep_experiment(cfg);
  std::vector<rloc::TechniqueRow> rows;
  for (const rloc::ExperimentResult& r : results)
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  std::filesystem::create_directories(flags.out_dir);
  const std::string path = flags.out_dir + "/sweep-" +
                           rloc::sweep_axis_name(cfg.sweep_axis) + "." +
                           flags.format;
  rloc::emit_results(rows, rloc::provenance_json(cfg), flags.format, path);
  print_table(rows);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int plot_cmd(const std::string& in_path, const std::string& figure,
             const std::string& out_dir) {
  const rloc::LoadedResults loaded = rloc::load_results_file(in_path);
  const rloc::SweepAxis axis = figure == "rescuers-sweep"
                                   ? rloc::SweepAxis::Rescuers
                                   : rloc::SweepAxis::Victims;
  std::filesystem::create_directories(out_dir);
  const std::string path = out_dir + "/" + figure + ".svg";
  rloc::emit_plot(loaded.rows, axis, loaded.provenance, path);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int validate_cmd(const CommonFlags& flags) {
  const rloc::ExperimentConfig cfg = load_config(flags);
  std::cout << "resolved config:\n" << rloc::emit_config(cfg);
  const rloc::Scenario scenario = rloc::generate_scenario(
      cfg.victims, cfg.rescuers, rloc::Rect{0.0, 0.0, cfg.area_m, cfg.area_m},
      cfg.seed);
  const rloc::ValidationReport report = rloc::validate_scenario(scenario);
  for (const std::string& w : report.warnings)
    std::cout << "warning: " << w << "\n";
  if (!report.pass()) {
    for (const std::string& v : report.violations)
      std::cerr << "violation: " << v << "\n";
    throw rloc::precondition_error("scenario validation failed");
  }
  std::cout << "scenario ok: " << cfg.victims << " victims, " << cfg.rescuers
            << " rescuers, " << rloc::fmt_double(cfg.area_m) << " m area, seed "
            << cfg.seed << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rloc: GPS-independent localization benchmark"};
  app.require_subcommand(1);

  CommonFlags run_flags, sweep_flags, validate_flags;
  std::string plot_in, plot_figure, plot_out = "out";

  CLI::App* run = app.add_subcommand("run", "Run a single experiment");
  add_common(run, &run_flags, true);

  CLI::App* sweep = app.add_subcommand("sweep", "Run a sweep experiment");
  add_common(sweep, &sweep_flags, true);

  CLI::App* plot = app.add_subcommand("plot", "Render a sweep figure (SVG)");
  plot->add_option("--in", plot_in, "Results file (CSV or JSON) from sweep")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--figure", plot_figure, "Figure to render")
      ->required()
      ->check(CLI::IsMember({"rescuers-sweep", "victims-sweep"}));
  plot->add_option("--out", plot_out, "Output directory");

  CLI::App* validate =
      app.add_subcommand("validate", "Check a config and its scenario");
  add_common(validate, &validate_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(run)) return run_cmd(run_flags);
    if (app.got_subcommand(sweep)) return sweep_cmd(sweep_flags);
    if (app.got_subcommand(plot)) return plot_cmd(plot_in, plot_figure, plot_out);
    if (app.got_subcommand(validate)) return validate_cmd(validate_flags);
  } catch (const rloc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case rloc::ErrorKind::Config:
        return 2;
      case rloc::ErrorKind::Precondition:
        return 3;
      case rloc::ErrorKind::Runtime:
        return 4;
    }
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
