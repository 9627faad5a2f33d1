#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/scenario.hpp"
#include "rloc/solve/rss.hpp"

using namespace rloc;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

MeasurementSet all_links_rss(const Scenario& s, const ChannelParams& p,
                             std::uint64_t master, std::uint64_t trial) {
  NoiseStream st(master, trial, StreamTag::Rss);
  MeasurementSet vr = gen_rss(s, victim_rescuer_links(s), p, st);
  const MeasurementSet vv = gen_rss(s, victim_victim_links(s), p, st);
  vr.entries.insert(vr.entries.end(), vv.entries.begin(), vv.entries.end());
  return vr;
}

Scenario canonical_two_victims() {
  Scenario s;
  s.bounds = Rect::square(100.0);
  s.victims = {{30.0, 40.0}, {70.0, 55.0}};
  s.rescuers = {{0.0, 0.0}, {100.0, 0.0}, {0.0, 100.0}, {100.0, 100.0}};
  s.tx_power_dbm = {7.0, -3.0};
  return s;
}

}  // namespace

TEST_CASE("analytic gradient matches central differences", "[solver][rss]") {
  const ChannelParams p;
  const Scenario s = generate_scenario(2, 4, Rect::square(100.0), 5);
  const MeasurementSet meas = all_links_rss(s, p, 5, 0);

  NoiseStream pts(501, 0, StreamTag::Scenario);
  const double h = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<Point> pos = {{pts.uniform(0.0, 100.0), pts.uniform(0.0, 100.0)},
                              {pts.uniform(0.0, 100.0), pts.uniform(0.0, 100.0)}};
    std::vector<double> pw = {pts.uniform(-20.0, 10.0),
                              pts.uniform(-20.0, 10.0)};
    const auto [f, g] = rss_objective_and_gradient(pos, pw, meas, s.rescuers, p);

    Eigen::VectorXd fd(6);
    for (int i = 0; i < 6; ++i) {
      auto pos_hi = pos;
      auto pos_lo = pos;
      auto pw_hi = pw;
      auto pw_lo = pw;
      if (i < 4) {
        const std::size_t v = static_cast<std::size_t>(i / 2);
        if (i % 2 == 0) {
          pos_hi[v].x += h;
          pos_lo[v].x -= h;
        } else {
          pos_hi[v].y += h;
          pos_lo[v].y -= h;
        }
      } else {
        pw_hi[static_cast<std::size_t>(i - 4)] += h;
        pw_lo[static_cast<std::size_t>(i - 4)] -= h;
      }
      const double f_hi =
          rss_objective_and_gradient(pos_hi, pw_hi, meas, s.rescuers, p).first;
      const double f_lo =
          rss_objective_and_gradient(pos_lo, pw_lo, meas, s.rescuers, p).first;
      fd(i) = (f_hi - f_lo) / (2.0 * h);
    }
    worst = std::max(worst, (fd - g).norm() / std::max(1.0, g.norm()));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("objective value and gradient behave at an exact fit",
          "[solver][rss]") {
  const ChannelParams p;
  const std::vector<Point> rescuers = {{0.0, 0.0}, {10.0, 0.0}};
  const Point truth{3.0, 4.0};
  const double power = -2.0;

  MeasurementSet ms;
  ms.modality = Modality::Rss;
  for (int j = 0; j < 2; ++j) {
    const double d = distance(truth, rescuers[static_cast<std::size_t>(j)]);
    ms.entries.push_back({{LinkKind::VictimRescuer, 0, j}, p.rss_dbm(power, d)});
  }

  const auto [f0, g0] =
      rss_objective_and_gradient({truth}, {power}, ms, rescuers, p);
  CHECK(f0 == 0.0);
  CHECK(g0.norm() == 0.0);

  // Biasing both observations by 1 dB leaves residuals of exactly 1 dB each.
  for (Measurement& m : ms.entries) m.value += 1.0;
  const auto [f1, g1] =
      rss_objective_and_gradient({truth}, {power}, ms, rescuers, p);
  CHECK(f1 == Approx(2.0).margin(1e-12));
  // Pure power misfit: d/dP of each residual is -1, so dF/dP = -2 * sum(e).
  CHECK(g1(2) == Approx(-4.0).margin(1e-12));

  CHECK_THROWS_WITH(
      rss_objective_and_gradient({truth}, {power, power}, ms, rescuers, p),
      ContainsSubstring("size mismatch"));
}

TEST_CASE("rssd solver recovers the victim without knowing transmit power",
          "[solver][rss]") {
  Scenario s = canonical_two_victims();
  s.victims = {{30.0, 40.0}};
  s.tx_power_dbm = {7.0};
  ChannelParams quiet;
  quiet.sigma_shadow_db = 0.0;

  NoiseStream st(1, 0, StreamTag::Rss);
  const MeasurementSet d1 =
      derive_rssd(gen_rss(s, victim_rescuer_links(s), quiet, st), 1);
  SolverOptions opts;
  opts.max_iters = 10;
  const SolveResult r1 = solve_rssd_noncoop(d1, s.rescuers, quiet, opts);
  REQUIRE(r1.positions.size() == 1);
  CHECK(distance(r1.positions[0], s.victims[0]) < 1e-3);
  CHECK(r1.power_estimates.empty());

  // A different transmit power yields the byte-identical estimate.
  Scenario s2 = s;
  s2.tx_power_dbm = {-5.0};
  NoiseStream st2(1, 0, StreamTag::Rss);
  const MeasurementSet d2 =
      derive_rssd(gen_rss(s2, victim_rescuer_links(s2), quiet, st2), 1);
  const SolveResult r2 = solve_rssd_noncoop(d2, s.rescuers, quiet, opts);
  CHECK(r1.positions[0].x == r2.positions[0].x);
  CHECK(r1.positions[0].y == r2.positions[0].y);
}

TEST_CASE("rssd solver honors its iteration budget per victim",
          "[solver][rss]") {
  const ChannelParams p;
  const Scenario s = generate_scenario(2, 8, Rect::square(100.0), 13);
  NoiseStream st(13, 0, StreamTag::Rss);
  const MeasurementSet d =
      derive_rssd(gen_rss(s, victim_rescuer_links(s), p, st), s.n_victims());

  SolverOptions opts;
  opts.max_iters = 10;
  const SolveResult r = solve_rssd_noncoop(d, s.rescuers, p, opts);
  REQUIRE(r.positions.size() == 2);
  // Victim traces are concatenated; each contributes its starting value.
  CHECK(r.iterations <= 2 * opts.max_iters);
  CHECK(r.objective_trace.size() ==
        static_cast<std::size_t>(r.iterations) + 2);

  const SolveResult again = solve_rssd_noncoop(d, s.rescuers, p, opts);
  CHECK(again.positions[0].x == r.positions[0].x);
  CHECK(again.positions[1].y == r.positions[1].y);
  CHECK(again.objective_trace == r.objective_trace);
}

TEST_CASE("rssd solver rejects malformed inputs", "[solver][rss]") {
  const ChannelParams p;
  const std::vector<Point> rescuers = {{0.0, 0.0}, {100.0, 0.0}, {0.0, 100.0}};

  SECTION("wrong modality") {
    MeasurementSet ms;
    ms.modality = Modality::Rss;
    ms.rssd_reference = {0};
    CHECK_THROWS_WITH(solve_rssd_noncoop(ms, rescuers, p),
                      ContainsSubstring("wrong modality"));
  }

  SECTION("missing reference table") {
    MeasurementSet ms;
    ms.modality = Modality::Rssd;
    ms.entries = {{{LinkKind::VictimRescuer, 0, 1}, 3.0}};
    CHECK_THROWS_WITH(solve_rssd_noncoop(ms, rescuers, p),
                      ContainsSubstring("missing rssd_reference"));
  }

  SECTION("too few difference entries") {
    MeasurementSet ms;
    ms.modality = Modality::Rssd;
    ms.rssd_reference = {0};
    ms.entries = {{{LinkKind::VictimRescuer, 0, 1}, 3.0},
                  {{LinkKind::VictimRescuer, 0, 2}, 5.0}};
    CHECK_THROWS_WITH(solve_rssd_noncoop(ms, rescuers, p),
                      ContainsSubstring("needs >= 3 difference entries"));
  }

  SECTION("victim-victim entries") {
    MeasurementSet ms;
    ms.modality = Modality::Rssd;
    ms.rssd_reference = {0};
    ms.entries = {{{LinkKind::VictimVictim, 0, 1}, 3.0},
                  {{LinkKind::VictimRescuer, 0, 1}, 4.0},
                  {{LinkKind::VictimRescuer, 0, 2}, 5.0}};
    CHECK_THROWS_WITH(solve_rssd_noncoop(ms, rescuers, p),
                      ContainsSubstring("victim->rescuer links only"));
  }
}

TEST_CASE("cooperative solvers recover an exact-fit scene", "[solver][rss]") {
  const Scenario s = canonical_two_victims();
  ChannelParams quiet;
  quiet.sigma_shadow_db = 0.0;
  const MeasurementSet meas = all_links_rss(s, quiet, 1, 0);

  SolverOptions opts;
  opts.max_iters = 2000;

  const SolveResult gd = solve_rss_coop_gd(meas, s.rescuers, 2, quiet, opts);
  REQUIRE(gd.positions.size() == 2);
  REQUIRE(gd.power_estimates.size() == 2);
  CHECK(distance(gd.positions[0], s.victims[0]) < 1e-3);
  CHECK(distance(gd.positions[1], s.victims[1]) < 1e-3);
  CHECK(gd.power_estimates[0] == Approx(7.0).margin(1e-6));
  CHECK(gd.power_estimates[1] == Approx(-3.0).margin(1e-6));
  CHECK(gd.converged);

  const SolveResult mm = solve_rss_coop_mm(meas, s.rescuers, 2, quiet, opts);
  CHECK(distance(mm.positions[0], s.victims[0]) < 1e-3);
  CHECK(distance(mm.positions[1], s.victims[1]) < 1e-3);
  CHECK(mm.power_estimates[0] == Approx(7.0).margin(1e-6));
  CHECK(mm.power_estimates[1] == Approx(-3.0).margin(1e-6));
  CHECK(mm.converged);
}

TEST_CASE("alternating solver shifts power estimates with the data",
          "[solver][rss]") {
  const ChannelParams p;
  const Scenario s = generate_scenario(2, 6, Rect::square(100.0), 9);
  NoiseStream st(9, 0, StreamTag::Rss);
  const MeasurementSet base = gen_rss(s, victim_rescuer_links(s), p, st);

  MeasurementSet shifted = base;
  for (Measurement& m : shifted.entries)
    if (m.link.src == 0) m.value += 6.0;

  SolverOptions opts;
  opts.max_iters = 2000;
  const SolveResult a = solve_rss_coop_mm(base, s.rescuers, 2, p, opts);
  const SolveResult b = solve_rss_coop_mm(shifted, s.rescuers, 2, p, opts);

  // The profiled misfit does not see a per-victim constant, so positions are
  // unchanged and only the affected victim's power absorbs the shift.
  CHECK(distance(a.positions[0], b.positions[0]) < 1e-9);
  CHECK(distance(a.positions[1], b.positions[1]) < 1e-9);
  CHECK(b.power_estimates[0] - a.power_estimates[0] ==
        Approx(6.0).margin(1e-9));
  CHECK(b.power_estimates[1] - a.power_estimates[1] ==
        Approx(0.0).margin(1e-9));
}

TEST_CASE("descent and alternating solvers agree on the misfit",
          "[solver][rss]") {
  const ChannelParams p;
  SolverOptions opts;
  opts.max_iters = 2000;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const Scenario s = generate_scenario(3, 8, Rect::square(100.0), seed);
    const MeasurementSet meas = all_links_rss(s, p, seed, 0);
    const double fg =
        solve_rss_coop_gd(meas, s.rescuers, 3, p, opts).final_objective();
    const double fm =
        solve_rss_coop_mm(meas, s.rescuers, 3, p, opts).final_objective();
    const double ratio =
        std::max(fg, fm) / std::max(1e-12, std::min(fg, fm));
    CHECK(ratio < 1.5);
  }
}

TEST_CASE("cooperative solver traces are monotone and capped",
          "[solver][rss]") {
  const ChannelParams p;
  const Scenario s = generate_scenario(2, 6, Rect::square(100.0), 21);
  const MeasurementSet meas = all_links_rss(s, p, 21, 0);

  SolverOptions opts;
  opts.max_iters = 50;  // deliberately small: the cap must bind cleanly
  for (const SolveResult& r :
       {solve_rss_coop_gd(meas, s.rescuers, 2, p, opts),
        solve_rss_coop_mm(meas, s.rescuers, 2, p, opts)}) {
    CHECK(r.iterations <= opts.max_iters);
    CHECK(r.objective_trace.size() ==
          static_cast<std::size_t>(r.iterations) + 1);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      CHECK(r.objective_trace[i] <= r.objective_trace[i - 1]);
  }
}

TEST_CASE("cooperative solvers reject malformed inputs", "[solver][rss]") {
  const ChannelParams p;
  const std::vector<Point> rescuers = {{50.0, 50.0}, {60.0, 60.0}};

  SECTION("empty measurement set") {
    MeasurementSet ms;
    ms.modality = Modality::Rss;
    CHECK_THROWS_WITH(solve_rss_coop_gd(ms, rescuers, 1, p),
                      ContainsSubstring("no measurements"));
    CHECK_THROWS_WITH(solve_rss_coop_mm(ms, rescuers, 1, p),
                      ContainsSubstring("no measurements"));
  }

  SECTION("wrong modality") {
    MeasurementSet ms;
    ms.modality = Modality::Rssd;
    ms.entries = {{{LinkKind::VictimRescuer, 0, 0}, 3.0}};
    CHECK_THROWS_WITH(solve_rss_coop_gd(ms, rescuers, 1, p),
                      ContainsSubstring("wrong modality"));
    CHECK_THROWS_WITH(solve_rss_coop_mm(ms, rescuers, 1, p),
                      ContainsSubstring("wrong modality"));
  }

  SECTION("positions and powers must be jointly identifiable") {
    MeasurementSet ms;
    ms.modality = Modality::Rss;
    for (int k = 0; k < 3; ++k)
      ms.entries.push_back(
          {{LinkKind::VictimRescuer, 0, 0}, -60.0 - static_cast<double>(k)});
    CHECK_THROWS_WITH(solve_rss_coop_gd(ms, rescuers, 1, p),
                      ContainsSubstring("not jointly identifiable"));
  }

  SECTION("init overrides must cover every victim") {
    const Scenario s = canonical_two_victims();
    const MeasurementSet meas = all_links_rss(s, p, 1, 0);
    SolverOptions opts;
    opts.init_positions = {{10.0, 10.0}};  // one entry for two victims
    CHECK_THROWS_WITH(solve_rss_coop_gd(meas, s.rescuers, 2, p, opts),
                      ContainsSubstring("init_positions size mismatch"));
    SolverOptions opts2;
    opts2.init_powers = {0.0};
    CHECK_THROWS_WITH(solve_rss_coop_mm(meas, s.rescuers, 2, p, opts2),
                      ContainsSubstring("init_powers size mismatch"));
  }
}

TEST_CASE("gradient descent reruns are bit-identical", "[solver][rss]") {
  const ChannelParams p;
  const Scenario s = generate_scenario(2, 6, Rect::square(100.0), 31);
  const MeasurementSet meas = all_links_rss(s, p, 31, 0);
  SolverOptions opts;
  opts.max_iters = 500;
  const SolveResult a = solve_rss_coop_gd(meas, s.rescuers, 2, p, opts);
  const SolveResult b = solve_rss_coop_gd(meas, s.rescuers, 2, p, opts);
  CHECK(a.positions[0].x == b.positions[0].x);
  CHECK(a.positions[1].y == b.positions[1].y);
  CHECK(a.power_estimates == b.power_estimates);
  CHECK(a.objective_trace == b.objective_trace);
}
