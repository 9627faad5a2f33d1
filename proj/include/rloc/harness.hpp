#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rloc/channel.hpp"
#include "rloc/error.hpp"
#include "rloc/rng.hpp"
#include "rloc/scenario.hpp"
#include "rloc/solvers.hpp"
#include "rloc/version.hpp"

namespace rloc {

// ---------------------------------------------------------------------------
// Techniques

enum class Technique {
  ToaCoop,
  TdoaNoncoop,
  AoaCoop,
  RssdNoncoop,
  RssCoopGd,
  RssCoopMm,
};

inline constexpr Technique kAllTechniques[] = {
    Technique::ToaCoop,     Technique::TdoaNoncoop, Technique::AoaCoop,
    Technique::RssdNoncoop, Technique::RssCoopGd,   Technique::RssCoopMm,
};

inline const char* technique_name(Technique t) {
  switch (t) {
    case Technique::ToaCoop: return "toa-coop";
    case Technique::TdoaNoncoop: return "tdoa-noncoop";
    case Technique::AoaCoop: return "aoa-coop";
    case Technique::RssdNoncoop: return "rssd-noncoop";
    case Technique::RssCoopGd: return "rss-coop-gd";
    case Technique::RssCoopMm: return "rss-coop-mm";
  }
  return "?";
}

/// Conventional labels for the algorithm families these solvers stand in for.
inline const char* technique_alias(Technique t) {
  switch (t) {
    case Technique::ToaCoop: return "ToA-Chen";
    case Technique::TdoaNoncoop: return "P-TDoA";
    case Technique::AoaCoop: return "EM-POG-AMP";
    case Technique::RssdNoncoop: return "RLBM";
    case Technique::RssCoopGd: return "IRDL";
    case Technique::RssCoopMm: return "FCUP";
  }
  return "?";
}

inline Technique technique_from_name(const std::string& name) {
  for (Technique t : kAllTechniques)
    if (name == technique_name(t)) return t;
  throw config_error("unknown technique: " + name);
}

inline bool technique_is_cooperative(Technique t) {
  return t == Technique::ToaCoop || t == Technique::AoaCoop ||
         t == Technique::RssCoopGd || t == Technique::RssCoopMm;
}

/// Per-technique solver profile: shared tolerance 1e-3, iteration caps 10
/// for the RSSD stand-in and 2000 for both RSS solvers.
inline SolverOptions default_options(Technique t) {
  SolverOptions opts;
  switch (t) {
    case Technique::RssdNoncoop:
      opts.max_iters = 10;
      break;
    case Technique::RssCoopGd:
    case Technique::RssCoopMm:
      opts.max_iters = 2000;
      break;
    default:
      break;
  }
  return opts;
}

inline constexpr double kSolverTol = 1e-3;
inline constexpr int kIterCapRssd = 10;
inline constexpr int kIterCapRss = 2000;
inline constexpr int kIterCapDefault = 100;

// ---------------------------------------------------------------------------
// Configuration

enum class SweepAxis { None, Rescuers, Victims };

inline const char* sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::None: return "none";
    case SweepAxis::Rescuers: return "rescuers";
    case SweepAxis::Victims: return "victims";
  }
  return "?";
}

/// Channel settings as configured (angle sigma in degrees, as written in
/// config files); converted to solver units on demand so emitted configs
/// round-trip exactly.
struct ChannelConfig {
  double ple = 3.0;
  double sigma_shadow_db = 3.0;
  double sigma_range_m = 0.3;
  double sigma_angle_deg = 2.0;
  double ref_loss_db = 40.0;
  double ref_dist_m = 1.0;

  ChannelParams to_params() const {
    ChannelParams p;
    p.ple = ple;
    p.sigma_shadow_db = sigma_shadow_db;
    p.sigma_range_m = sigma_range_m;
    p.sigma_angle_rad = sigma_angle_deg * std::numbers::pi / 180.0;
    p.ref_loss_db = ref_loss_db;
    p.ref_dist_m = ref_dist_m;
    return p;
  }

  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

inline constexpr std::uint64_t kDefaultSeed = 42;

struct ExperimentConfig {
  int victims = 5;
  int rescuers = 10;
  double area_m = 100.0;  // square side length
  std::uint64_t seed = kDefaultSeed;
  ChannelConfig channel;
  std::vector<Technique> techniques{std::begin(kAllTechniques),
                                    std::end(kAllTechniques)};
  int trials = 3000;
  int parallelism = 1;
  SweepAxis sweep_axis = SweepAxis::None;
  std::vector<int> sweep_values;
  bool redraw_powers = false;  // re-draw transmit powers every trial

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;

  void validate() const {
    if (victims < 1) throw config_error("scenario.victims must be >= 1");
    if (rescuers < 3) throw config_error("scenario.rescuers must be >= 3");
    if (!(area_m > 0.0)) throw config_error("scenario.area_m must be > 0");
    channel.to_params().validate();
    if (trials < 1) throw config_error("run.trials must be >= 1");
    if (parallelism < 1) throw config_error("run.parallelism must be >= 1");
    if (techniques.empty()) throw config_error("run.techniques must be non-empty");
    if (sweep_axis != SweepAxis::None) {
      if (sweep_values.empty())
        throw config_error("sweep.values must be non-empty");
      for (std::size_t i = 0; i + 1 < sweep_values.size(); ++i)
        if (sweep_values[i] >= sweep_values[i + 1])
          throw config_error("sweep.values must be strictly ascending");
      const int lo = sweep_values.front();
      if (sweep_axis == SweepAxis::Rescuers && lo < 3)
        throw config_error("sweep.values: rescuer counts must be >= 3");
      if (sweep_axis == SweepAxis::Victims && lo < 1)
        throw config_error("sweep.values: victim counts must be >= 1");
    } else if (!sweep_values.empty()) {
      throw config_error("sweep.values given without sweep.axis");
    }
  }
};

/// Canonical JSON echo of a config; hashed for provenance. nlohmann objects
/// serialize with sorted keys, so the dump is deterministic.
inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json techniques = nlohmann::json::array();
  for (Technique t : c.techniques) techniques.push_back(technique_name(t));
  return {
      {"scenario",
       {{"victims", c.victims},
        {"rescuers", c.rescuers},
        {"area_m", c.area_m},
        {"seed", c.seed}}},
      {"channel",
       {{"ple", c.channel.ple},
        {"sigma_shadow_db", c.channel.sigma_shadow_db},
        {"sigma_range_m", c.channel.sigma_range_m},
        {"sigma_angle_deg", c.channel.sigma_angle_deg},
        {"ref_loss_db", c.channel.ref_loss_db},
        {"ref_dist_m", c.channel.ref_dist_m}}},
      {"run",
       {{"trials", c.trials},
        {"techniques", techniques},
        {"parallelism", c.parallelism},
        {"redraw_powers", c.redraw_powers}}},
      {"sweep",
       {{"axis", sweep_axis_name(c.sweep_axis)},
        {"values", c.sweep_values}}},
  };
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
  const std::string dump = config_json(c).dump();
  return fnv1a64(dump.data(), dump.size());
}

/// Everything a reader needs to reproduce or audit a result file. No
/// timestamps or host data: emitted artifacts must be byte-stable.
inline nlohmann::json provenance_json(const ExperimentConfig& c) {
  char hash_buf[19];
  std::snprintf(hash_buf, sizeof hash_buf, "0x%016llx",
                static_cast<unsigned long long>(config_hash(c)));
  nlohmann::json j = config_json(c);
  j["version"] = kVersion;
  j["config_hash"] = hash_buf;
  j["master_seed"] = c.seed;
  j["power_range_dbm"] = {kTxPowerLoDbm, kTxPowerHiDbm};
  j["solver"] = {{"tol", kSolverTol},
                 {"iter_cap_rssd", kIterCapRssd},
                 {"iter_cap_rss", kIterCapRss},
                 {"iter_cap_default", kIterCapDefault}};
  j["nrmse"] =
      "sqrt(sum of squared position errors / (trials x victims)), meters";
  j["prng"] =
      "mt19937_64 seeded via splitmix64 mixing of (master_seed, trial, "
      "stream tag); Box-Muller normals, two engine outputs per draw";
  return j;
}

// ---------------------------------------------------------------------------
// Metrics

/// Per-victim RMSE in meters over M trials x N victims:
/// sqrt((1/(M N)) sum_m sum_i |est - truth|^2). Normalized by counts only,
/// so the value stays a length.
inline double nrmse(const std::vector<std::vector<Point>>& estimates,
                    const std::vector<std::vector<Point>>& truths) {
  if (estimates.size() != truths.size() || estimates.empty())
    throw precondition_error("nrmse: shape mismatch");
  double sum_sq = 0.0;
  std::size_t n_points = 0;
  for (std::size_t m = 0; m < estimates.size(); ++m) {
    if (estimates[m].size() != truths[m].size() || estimates[m].empty())
      throw precondition_error("nrmse: shape mismatch");
    for (std::size_t i = 0; i < estimates[m].size(); ++i) {
      const double dx = estimates[m][i].x - truths[m][i].x;
      const double dy = estimates[m][i].y - truths[m][i].y;
      sum_sq += dx * dx + dy * dy;
    }
    n_points += estimates[m].size();
  }
  return std::sqrt(sum_sq / static_cast<double>(n_points));
}

// ---------------------------------------------------------------------------
// Trials

struct TrialOutcome {
  std::vector<Point> estimates;          // one per victim
  std::vector<double> power_estimates;   // RSS solvers only
  int iterations = 0;
  bool converged = false;
  double solve_time_s = 0.0;  // wall time of the solve call(s) only
};

namespace detail {

inline std::vector<int> all_rescuer_indices(const Scenario& s) {
  std::vector<int> idx(static_cast<std::size_t>(s.n_rescuers()));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

inline Scenario with_redrawn_powers(const Scenario& s, NoiseStream& stream) {
  Scenario out = s;
  for (double& p : out.tx_power_dbm)
    p = stream.uniform(kTxPowerLoDbm, kTxPowerHiDbm);
  return out;
}

}  // namespace detail

/// Synthesizes the technique's measurements from the (master_seed,
/// trial_index, modality) noise stream and runs its solver: once jointly for
/// cooperative techniques, per victim sequentially for non-cooperative ones.
/// The modality keying means techniques sharing a measurement type see
/// identical noise realizations in the same trial.
inline TrialOutcome run_trial(const Scenario& s, Technique technique,
                              const ChannelParams& params,
                              std::uint64_t trial_index,
                              std::uint64_t master_seed,
                              bool redraw_powers = false) {
  if (!technique_is_cooperative(technique) && s.n_rescuers() < 3)
    throw precondition_error(
        "non-cooperative technique needs every victim to reach >= 3 rescuers");

  const SolverOptions opts = default_options(technique);
  TrialOutcome out;

  switch (technique) {
    case Technique::ToaCoop: {
      NoiseStream stream(master_seed, trial_index, StreamTag::Toa);
      std::vector<Link> links = victim_rescuer_links(s);
      const std::vector<Link> vv = victim_victim_links(s);
      links.insert(links.end(), vv.begin(), vv.end());
      const MeasurementSet meas = gen_toa_ranges(s, links, params, stream);
      const SolveResult r =
          solve_toa_coop(meas, s.rescuers, s.n_victims(), opts);
      out.estimates = r.positions;
      out.iterations = r.iterations;
      out.converged = r.converged;
      out.solve_time_s = r.wall_time_s;
      break;
    }
    case Technique::TdoaNoncoop: {
      NoiseStream stream(master_seed, trial_index, StreamTag::Tdoa);
      const std::vector<int> rescuer_set = detail::all_rescuer_indices(s);
      out.converged = true;
      for (int v = 0; v < s.n_victims(); ++v) {
        const MeasurementSet meas =
            gen_tdoa(s, v, rescuer_set, params, stream);
        const SolveResult r = solve_tdoa_noncoop(meas, s.rescuers, opts);
        out.estimates.push_back(r.positions.at(0));
        out.iterations += r.iterations;
        out.converged = out.converged && r.converged;
        out.solve_time_s += r.wall_time_s;
      }
      break;
    }
    case Technique::AoaCoop: {
      // Bearings from the AoA stream; the cooperative victim-victim ranges
      // are ToA measurements and come from the ToA stream, so they match
      // the ranges the ToA technique sees in the same trial bit for bit.
      NoiseStream aoa_stream(master_seed, trial_index, StreamTag::Aoa);
      MeasurementSet meas =
          gen_aoa(s, victim_rescuer_links(s), params, aoa_stream);
      if (s.n_victims() > 1) {
        NoiseStream toa_stream(master_seed, trial_index, StreamTag::Toa);
        std::vector<Link> links = victim_rescuer_links(s);
        const std::vector<Link> vv = victim_victim_links(s);
        links.insert(links.end(), vv.begin(), vv.end());
        const MeasurementSet toa = gen_toa_ranges(s, links, params, toa_stream);
        for (const Measurement& m : toa.entries)
          if (m.link.kind == LinkKind::VictimVictim) meas.entries.push_back(m);
      }
      const SolveResult r =
          solve_aoa(meas, s.rescuers, s.n_victims(), params, opts);
      out.estimates = r.positions;
      out.iterations = r.iterations;
      out.converged = r.converged;
      out.solve_time_s = r.wall_time_s;
      break;
    }
    case Technique::RssdNoncoop: {
      NoiseStream stream(master_seed, trial_index, StreamTag::Rss);
      const Scenario& src = s;
      Scenario redrawn;
      const Scenario* use = &src;
      if (redraw_powers) {
        redrawn = detail::with_redrawn_powers(s, stream);
        use = &redrawn;
      }
      const MeasurementSet rss =
          gen_rss(*use, victim_rescuer_links(*use), params, stream);
      const MeasurementSet rssd = derive_rssd(rss, use->n_victims());
      const SolveResult r =
          solve_rssd_noncoop(rssd, use->rescuers, params, opts);
      out.estimates = r.positions;
      out.iterations = r.iterations;
      out.converged = r.converged;
      out.solve_time_s = r.wall_time_s;
      break;
    }
    case Technique::RssCoopGd:
    case Technique::RssCoopMm: {
      NoiseStream stream(master_seed, trial_index, StreamTag::Rss);
      const Scenario& src = s;
      Scenario redrawn;
      const Scenario* use = &src;
      if (redraw_powers) {
        redrawn = detail::with_redrawn_powers(s, stream);
        use = &redrawn;
      }
      std::vector<Link> links = victim_rescuer_links(*use);
      const std::vector<Link> vv = victim_victim_links(*use);
      links.insert(links.end(), vv.begin(), vv.end());
      const MeasurementSet rss = gen_rss(*use, links, params, stream);
      const SolveResult r =
          technique == Technique::RssCoopGd
              ? solve_rss_coop_gd(rss, use->rescuers, use->n_victims(), params,
                                  opts)
              : solve_rss_coop_mm(rss, use->rescuers, use->n_victims(), params,
                                  opts);
      out.estimates = r.positions;
      out.power_estimates = r.power_estimates;
      out.iterations = r.iterations;
      out.converged = r.converged;
      out.solve_time_s = r.wall_time_s;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct TechniqueRow {
  Technique technique = Technique::ToaCoop;
  SweepAxis sweep_axis = SweepAxis::None;
  int sweep_value = 0;
  double nrmse_m = 0.0;
  double runtime_mean_s = 0.0;
  double runtime_total_s = 0.0;
  double convergence_rate = 0.0;
  int trials = 0;
  std::uint64_t seed = 0;
  int excluded_trials = 0;  // non-finite estimates, left out of NRMSE
};

struct ExperimentResult {
  std::vector<TechniqueRow> rows;
  nlohmann::json provenance;
};

namespace detail {

struct TrialRecord {
  double sq_err_sum = 0.0;
  double solve_time_s = 0.0;
  bool converged = false;
  bool usable = false;  // finite estimates from a completed solve
};

/// Runs all trials of one technique with a slot-indexed result pool:
/// workers pull trial indices from a shared counter but write into the
/// trial's own slot, and aggregation reads slots in index order, so the
/// result is bit-identical for any worker count.
inline TechniqueRow run_technique(const Scenario& scenario,
                                  Technique technique,
                                  const ChannelParams& params,
                                  const ExperimentConfig& config) {
  const int n_trials = config.trials;
  std::vector<TrialRecord> records(static_cast<std::size_t>(n_trials));

  auto do_trial = [&](int index) {
    TrialRecord rec;
    try {
      const TrialOutcome trial =
          run_trial(scenario, technique, params,
                    static_cast<std::uint64_t>(index), config.seed,
                    config.redraw_powers);
      rec.converged = trial.converged;
      rec.solve_time_s = trial.solve_time_s;
      double sq = 0.0;
      bool finite = trial.estimates.size() == scenario.victims.size();
      for (std::size_t v = 0; v < trial.estimates.size() && finite; ++v) {
        const double dx = trial.estimates[v].x - scenario.victims[v].x;
        const double dy = trial.estimates[v].y - scenario.victims[v].y;
        if (!std::isfinite(dx) || !std::isfinite(dy)) finite = false;
        sq += dx * dx + dy * dy;
      }
      if (finite) {
        rec.sq_err_sum = sq;
        rec.usable = true;
      }
    } catch (const Error&) {
      // Trial-level solver failure: counted as a non-converged trial with
      // no usable estimate.
    }
    records[static_cast<std::size_t>(index)] = rec;
  };

  const int workers = std::min(config.parallelism, n_trials);
  if (workers <= 1) {
    for (int i = 0; i < n_trials; ++i) do_trial(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n_trials; i = next.fetch_add(1))
          do_trial(i);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  TechniqueRow row;
  row.technique = technique;
  row.trials = n_trials;
  row.seed = config.seed;
  double sq_sum = 0.0;
  int usable = 0, converged = 0;
  for (const TrialRecord& rec : records) {
    row.runtime_total_s += rec.solve_time_s;
    if (rec.converged) ++converged;
    if (rec.usable) {
      sq_sum += rec.sq_err_sum;
      ++usable;
    }
  }
  row.runtime_mean_s = row.runtime_total_s / n_trials;
  row.convergence_rate = static_cast<double>(converged) / n_trials;
  row.excluded_trials = n_trials - usable;
  row.nrmse_m =
      usable > 0
          ? std::sqrt(sq_sum / (static_cast<double>(usable) *
                                static_cast<double>(scenario.victims.size())))
          : std::numeric_limits<double>::quiet_NaN();
  return row;
}

}  // namespace detail

/// Draws the scenario once from the config seed, then runs every technique
/// for config.trials independent noise draws. Scenario-level problems
/// (invalid config, degenerate geometry) surface before any trial runs.
inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       SweepAxis label_axis = SweepAxis::None,
                                       int label_value = 0) {
  config.validate();
  const Scenario scenario =
      generate_scenario(config.victims, config.rescuers,
                        Rect{0.0, 0.0, config.area_m, config.area_m},
                        config.seed);
  const ValidationReport report = validate_scenario(scenario);
  if (!report.pass()) {
    std::string msg = "scenario invalid:";
    for (const std::string& v : report.violations) msg += " " + v;
    throw precondition_error(msg);
  }

  const ChannelParams params = config.channel.to_params();
  params.validate();

  ExperimentResult result;
  result.provenance = provenance_json(config);
  for (Technique t : config.techniques) {
    TechniqueRow row = detail::run_technique(scenario, t, params, config);
    row.sweep_axis = label_axis;
    row.sweep_value = label_value;
    result.rows.push_back(row);
  }
  return result;
}

/// One experiment per sweep value. Each value re-draws the scenario with the
/// derived seed (master seed XOR value); the victims sweep drops
/// non-cooperative techniques.
inline std::vector<ExperimentResult> sweep_experiment(
    const ExperimentConfig& config) {
  config.validate();
  if (config.sweep_axis == SweepAxis::None)
    throw config_error("sweep requested but sweep.axis is not set");

  std::vector<ExperimentResult> results;
  for (int value : config.sweep_values) {
    ExperimentConfig derived = config;
    derived.sweep_axis = SweepAxis::None;
    derived.sweep_values.clear();
    derived.seed = config.seed ^ static_cast<std::uint64_t>(value);
    if (config.sweep_axis == SweepAxis::Rescuers) {
      derived.rescuers = value;
    } else {
      derived.victims = value;
      std::vector<Technique> coop;
      for (Technique t : derived.techniques)
        if (technique_is_cooperative(t)) coop.push_back(t);
      if (coop.empty())
        throw config_error(
            "victims sweep excludes non-cooperative techniques and no "
            "cooperative technique remains");
      derived.techniques = std::move(coop);
    }
    results.push_back(run_experiment(derived, config.sweep_axis, value));
  }
  return results;
}

}  // namespace rloc
