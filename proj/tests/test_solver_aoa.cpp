#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/scenario.hpp"
#include "rloc/solve/aoa.hpp"

using namespace rloc;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

double bearing_to(Point victim, Point anchor) {
  return wrap_angle(std::atan2(victim.y - anchor.y, victim.x - anchor.x));
}

MeasurementSet exact_bearings(Point victim, const std::vector<Point>& anchors,
                              int victim_index = 0) {
  MeasurementSet ms;
  ms.modality = Modality::AoaBearing;
  for (int j = 0; j < static_cast<int>(anchors.size()); ++j)
    ms.entries.push_back(
        {{LinkKind::VictimRescuer, victim_index, j},
         bearing_to(victim, anchors[static_cast<std::size_t>(j)])});
  return ms;
}

}  // namespace

TEST_CASE("two crossing bearings intersect at the victim", "[solver][aoa]") {
  const std::vector<Point> anchors = {{0.0, 0.0}, {100.0, 0.0}};
  MeasurementSet ms;
  ms.modality = Modality::AoaBearing;
  ms.entries = {{{LinkKind::VictimRescuer, 0, 0}, std::numbers::pi / 4.0},
                {{LinkKind::VictimRescuer, 0, 1}, 3.0 * std::numbers::pi / 4.0}};
  const ChannelParams p;
  const SolveResult r = solve_aoa(ms, anchors, 1, p);
  CHECK(distance(r.positions[0], {50.0, 50.0}) < 1e-6);
  CHECK(r.converged);
}

TEST_CASE("many exact bearings pin a generic victim", "[solver][aoa]") {
  const Point truth{30.0, 40.0};
  const std::vector<Point> anchors = {{0.0, 0.0},   {100.0, 0.0}, {0.0, 100.0},
                                      {100.0, 100.0}, {50.0, 0.0},  {0.0, 50.0}};
  const ChannelParams p;
  const SolveResult r = solve_aoa(exact_bearings(truth, anchors), anchors, 1, p);
  CHECK(distance(r.positions[0], truth) < 1e-6);
}

TEST_CASE("bearings straddling the angle seam still triangulate",
          "[solver][aoa]") {
  // True bearings are just under +pi and just above -pi; an unwrapped
  // residual would see a ~2 pi disagreement and walk away.
  const Point truth{0.0, 50.0};
  const std::vector<Point> anchors = {{100.0, 49.0}, {100.0, 51.0}};
  const MeasurementSet ms = exact_bearings(truth, anchors);
  CHECK(ms.entries[0].value > 3.1);
  CHECK(ms.entries[1].value < -3.1);
  const ChannelParams p;
  const SolveResult r = solve_aoa(ms, anchors, 1, p);
  CHECK(distance(r.positions[0], truth) < 1e-6);
}

TEST_CASE("a single bearing plus a cooperative range localizes",
          "[solver][aoa]") {
  Scenario s;
  s.bounds = Rect::square(100.0);
  s.victims = {{30.0, 40.0}, {70.0, 55.0}};
  s.rescuers = {{0.0, 0.0}, {100.0, 0.0}, {0.0, 100.0}, {100.0, 100.0}};

  MeasurementSet ms = exact_bearings(s.victims[0], s.rescuers, 0);
  ms.entries.push_back(
      {{LinkKind::VictimRescuer, 1, 3}, bearing_to(s.victims[1], s.rescuers[3])});
  ms.entries.push_back(
      {{LinkKind::VictimVictim, 0, 1}, distance(s.victims[0], s.victims[1])});

  const ChannelParams p;
  SolverOptions opts;
  opts.tol = 1e-12;
  opts.max_iters = 300;
  const SolveResult r = solve_aoa(ms, s.rescuers, 2, p, opts);
  REQUIRE(r.positions.size() == 2);
  CHECK(distance(r.positions[0], s.victims[0]) < 1e-6);
  CHECK(distance(r.positions[1], s.victims[1]) < 1e-6);
}

TEST_CASE("noisy bearings keep the fix near the victim", "[solver][aoa]") {
  const Scenario s = generate_scenario(1, 10, Rect::square(100.0), 7);
  const ChannelParams p;  // 2 degree bearing noise
  NoiseStream st(7, 0, StreamTag::Aoa);
  const MeasurementSet ms = gen_aoa(s, victim_rescuer_links(s), p, st);
  const SolveResult r = solve_aoa(ms, s.rescuers, 1, p);
  CHECK(distance(r.positions[0], s.victims[0]) < 2.0);
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
    CHECK(r.objective_trace[i] <= r.objective_trace[i - 1]);
}

TEST_CASE("triangulation rejects degenerate inputs", "[solver][aoa]") {
  const ChannelParams p;

  SECTION("parallel bearings with no cooperative links") {
    const std::vector<Point> anchors = {{0.0, 0.0}, {50.0, 0.0}};
    MeasurementSet ms;
    ms.modality = Modality::AoaBearing;
    ms.entries = {{{LinkKind::VictimRescuer, 0, 0}, std::numbers::pi / 2.0},
                  {{LinkKind::VictimRescuer, 0, 1}, std::numbers::pi / 2.0}};
    CHECK_THROWS_WITH(solve_aoa(ms, anchors, 1, p),
                      ContainsSubstring("parallel bearings"));
  }

  SECTION("one bearing and no cooperation") {
    const std::vector<Point> anchors = {{0.0, 0.0}, {50.0, 0.0}};
    MeasurementSet ms;
    ms.modality = Modality::AoaBearing;
    ms.entries = {{{LinkKind::VictimRescuer, 0, 0}, 0.5}};
    CHECK_THROWS_WITH(solve_aoa(ms, anchors, 1, p),
                      ContainsSubstring("needs >= 2 bearings"));
  }

  SECTION("a cooperating victim with no bearings at all") {
    const std::vector<Point> anchors = {{0.0, 0.0}, {100.0, 0.0},
                                        {0.0, 100.0}};
    MeasurementSet ms = exact_bearings({30.0, 40.0}, anchors, 0);
    ms.entries.push_back({{LinkKind::VictimVictim, 0, 1}, 25.0});
    CHECK_THROWS_WITH(solve_aoa(ms, anchors, 2, p),
                      ContainsSubstring("has no bearings"));
  }

  SECTION("two barely-connected victims are rank deficient") {
    const std::vector<Point> anchors = {{0.0, 0.0}, {100.0, 0.0}};
    MeasurementSet ms;
    ms.modality = Modality::AoaBearing;
    ms.entries = {{{LinkKind::VictimRescuer, 0, 0}, 0.7},
                  {{LinkKind::VictimRescuer, 1, 1}, 2.3},
                  {{LinkKind::VictimVictim, 0, 1}, 20.0}};
    CHECK_THROWS_WITH(solve_aoa(ms, anchors, 2, p),
                      ContainsSubstring("rank-deficient"));
  }

  SECTION("wrong modality") {
    MeasurementSet ms;
    ms.modality = Modality::ToaRange;
    ms.entries = {{{LinkKind::VictimRescuer, 0, 0}, 0.5},
                  {{LinkKind::VictimRescuer, 0, 1}, 1.5}};
    CHECK_THROWS_WITH(solve_aoa(ms, {{0.0, 0.0}, {50.0, 0.0}}, 1, p),
                      ContainsSubstring("wrong modality"));
  }

  SECTION("init override must cover every victim") {
    const std::vector<Point> anchors = {{0.0, 0.0}, {100.0, 0.0}};
    MeasurementSet ms = exact_bearings({30.0, 40.0}, anchors, 0);
    SolverOptions opts;
    opts.init_positions = {{10.0, 10.0}, {20.0, 20.0}};
    CHECK_THROWS_WITH(solve_aoa(ms, anchors, 1, p, opts),
                      ContainsSubstring("init_positions size mismatch"));
  }
}

TEST_CASE("explicit init and determinism contracts hold", "[solver][aoa]") {
  const Point truth{30.0, 40.0};
  const std::vector<Point> anchors = {{0.0, 0.0}, {100.0, 0.0}, {0.0, 100.0}};
  const MeasurementSet ms = exact_bearings(truth, anchors);
  const ChannelParams p;

  SolverOptions opts;
  opts.init_positions = {{55.0, 60.0}};
  opts.max_iters = 0;
  const SolveResult frozen = solve_aoa(ms, anchors, 1, p, opts);
  CHECK(frozen.positions[0].x == 55.0);
  CHECK(frozen.positions[0].y == 60.0);
  CHECK(frozen.iterations == 0);

  const SolveResult a = solve_aoa(ms, anchors, 1, p);
  const SolveResult b = solve_aoa(ms, anchors, 1, p);
  CHECK(a.positions[0].x == b.positions[0].x);
  CHECK(a.positions[0].y == b.positions[0].y);
  CHECK(a.objective_trace == b.objective_trace);
}
