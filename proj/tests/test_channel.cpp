#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/geometry.hpp"
#include "rloc/rng.hpp"
#include "rloc/scenario.hpp"

using namespace rloc;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

Scenario corner_scenario() {
  Scenario s;
  s.bounds = Rect::square(100.0);
  s.victims = {{30.0, 40.0}, {62.0, 71.0}};
  s.rescuers = {{0.0, 0.0}, {100.0, 0.0}, {0.0, 100.0}, {100.0, 100.0}};
  s.tx_power_dbm = {7.0, -2.5};
  return s;
}

ChannelParams zero_noise() {
  ChannelParams p;
  p.sigma_shadow_db = 0.0;
  p.sigma_range_m = 0.0;
  p.sigma_angle_rad = 0.0;
  return p;
}

}  // namespace

TEST_CASE("rss_dbm matches the closed-form path loss", "[channel]") {
  ChannelParams p;  // ple 3, ref_loss 40 dB, ref_dist 1 m
  CHECK(p.rss_dbm(10.0, 100.0) == Approx(-90.0).margin(1e-12));
  CHECK(p.rss_dbm(10.0, 1.0) == Approx(-30.0).margin(1e-12));
  CHECK(p.rss_dbm(0.0, 10.0) == Approx(-70.0).margin(1e-12));

  ChannelParams q;
  q.ple = 2.0;
  // Doubling distance under exponent 2 costs 20*log10(2) dB.
  CHECK(q.rss_dbm(5.0, 40.0) - q.rss_dbm(5.0, 20.0) ==
        Approx(-20.0 * std::log10(2.0)));
}

TEST_CASE("zero-sigma measurements equal the geometric model exactly",
          "[channel]") {
  const Scenario s = corner_scenario();
  const ChannelParams p = zero_noise();
  const std::vector<Link> links = victim_rescuer_links(s);

  NoiseStream toa_stream(7, 0, StreamTag::Toa);
  const MeasurementSet toa = gen_toa_ranges(s, links, p, toa_stream);
  REQUIRE(toa.modality == Modality::ToaRange);
  REQUIRE(toa.size() == links.size());
  for (std::size_t i = 0; i < toa.size(); ++i) {
    CHECK(toa.entries[i].link == links[i]);
    CHECK(toa.entries[i].value == link_distance(s, links[i]));
  }

  NoiseStream aoa_stream(7, 0, StreamTag::Aoa);
  const MeasurementSet aoa = gen_aoa(s, links, p, aoa_stream);
  REQUIRE(aoa.modality == Modality::AoaBearing);
  for (std::size_t i = 0; i < aoa.size(); ++i) {
    const Point v = s.victims[static_cast<std::size_t>(links[i].src)];
    const Point r = s.rescuers[static_cast<std::size_t>(links[i].dst)];
    CHECK(aoa.entries[i].value ==
          wrap_angle(std::atan2(v.y - r.y, v.x - r.x)));
  }

  NoiseStream tdoa_stream(7, 0, StreamTag::Tdoa);
  const MeasurementSet tdoa = gen_tdoa(s, 0, {0, 1, 2, 3}, p, tdoa_stream);
  REQUIRE(tdoa.modality == Modality::TdoaRangeDiff);
  REQUIRE(tdoa.tdoa_reference == 0);
  REQUIRE(tdoa.size() == 3);
  const double d0 = distance(s.victims[0], s.rescuers[0]);
  for (std::size_t j = 0; j < tdoa.size(); ++j) {
    const int rj = tdoa.entries[j].link.dst;
    const double dj =
        distance(s.victims[0], s.rescuers[static_cast<std::size_t>(rj)]);
    CHECK(tdoa.entries[j].value == dj - d0);
  }

  NoiseStream rss_stream(7, 0, StreamTag::Rss);
  const MeasurementSet rss = gen_rss(s, links, p, rss_stream);
  REQUIRE(rss.modality == Modality::Rss);
  for (std::size_t i = 0; i < rss.size(); ++i) {
    const double d = link_distance(s, links[i]);
    const double tx =
        s.tx_power_dbm[static_cast<std::size_t>(links[i].src)];
    CHECK(rss.entries[i].value == p.rss_dbm(tx, d));
  }
}

TEST_CASE("toa ranges clamp at the minimum range", "[channel]") {
  Scenario s;
  s.bounds = Rect::square(100.0);
  s.victims = {{0.0, 0.0}};
  s.rescuers = {{1e-9, 0.0}, {50.0, 50.0}};
  s.tx_power_dbm = {0.0};

  const ChannelParams quiet = zero_noise();
  NoiseStream st(3, 0, StreamTag::Toa);
  const MeasurementSet ms =
      gen_toa_ranges(s, victim_rescuer_links(s), quiet, st);
  CHECK(ms.entries[0].value == kMinRangeM);

  // Violent noise still never produces a non-positive range.
  ChannelParams loud = zero_noise();
  loud.sigma_range_m = 1e6;
  std::vector<Link> links(200, Link{LinkKind::VictimRescuer, 0, 1});
  NoiseStream st2(3, 1, StreamTag::Toa);
  const MeasurementSet noisy = gen_toa_ranges(s, links, loud, st2);
  for (const Measurement& m : noisy.entries) CHECK(m.value >= kMinRangeM);
}

TEST_CASE("per-link noise is the sigma-scaled stream deviate", "[channel]") {
  const Scenario s = corner_scenario();
  const ChannelParams p;  // defaults: 0.3 m, 2 deg, 3 dB
  const std::vector<Link> links = victim_rescuer_links(s);

  NoiseStream gen_stream(9, 4, StreamTag::Toa);
  const MeasurementSet toa = gen_toa_ranges(s, links, p, gen_stream);
  NoiseStream twin(9, 4, StreamTag::Toa);
  for (std::size_t i = 0; i < toa.size(); ++i) {
    const double expected =
        link_distance(s, links[i]) + p.sigma_range_m * twin.normal();
    CHECK(toa.entries[i].value == expected);
  }

  NoiseStream rss_stream(9, 4, StreamTag::Rss);
  const MeasurementSet rss = gen_rss(s, links, p, rss_stream);
  NoiseStream rss_twin(9, 4, StreamTag::Rss);
  for (std::size_t i = 0; i < rss.size(); ++i) {
    const double d = link_distance(s, links[i]);
    const double tx =
        s.tx_power_dbm[static_cast<std::size_t>(links[i].src)];
    const double expected =
        p.rss_dbm(tx, d) + p.sigma_shadow_db * rss_twin.normal();
    CHECK(rss.entries[i].value == expected);
  }
}

TEST_CASE("noise variance tracks the configured sigmas", "[channel]") {
  Scenario s;
  s.bounds = Rect::square(100.0);
  s.victims = {{80.0, 20.0}};
  s.rescuers = {{20.0, 20.0}};
  s.tx_power_dbm = {0.0};
  const ChannelParams p;  // sigma_range 0.3 m, sigma_shadow 3 dB, 2 deg

  const std::size_t n = 100000;
  const std::vector<Link> links(n, Link{LinkKind::VictimRescuer, 0, 0});

  const auto stats = [](const MeasurementSet& ms, double center) {
    double mean = 0.0;
    for (const Measurement& m : ms.entries) mean += m.value - center;
    mean /= static_cast<double>(ms.size());
    double var = 0.0;
    for (const Measurement& m : ms.entries) {
      const double e = m.value - center - mean;
      var += e * e;
    }
    var /= static_cast<double>(ms.size() - 1);
    return std::pair{mean, var};
  };

  NoiseStream toa_stream(11, 0, StreamTag::Toa);
  const auto [toa_mean, toa_var] =
      stats(gen_toa_ranges(s, links, p, toa_stream), 60.0);
  CHECK(toa_mean == Approx(0.0).margin(0.005));
  CHECK(toa_var == Approx(0.09).epsilon(0.05));

  NoiseStream rss_stream(11, 0, StreamTag::Rss);
  const auto [rss_mean, rss_var] =
      stats(gen_rss(s, links, p, rss_stream), p.rss_dbm(0.0, 60.0));
  CHECK(rss_mean == Approx(0.0).margin(0.05));
  CHECK(rss_var == Approx(9.0).epsilon(0.05));

  NoiseStream aoa_stream(11, 0, StreamTag::Aoa);
  const auto [aoa_mean, aoa_var] =
      stats(gen_aoa(s, links, p, aoa_stream), 0.0);  // true bearing is 0
  CHECK(aoa_mean == Approx(0.0).margin(0.001));
  CHECK(aoa_var ==
        Approx(p.sigma_angle_rad * p.sigma_angle_rad).epsilon(0.05));
}

TEST_CASE("aoa bearings stay inside the principal interval", "[channel]") {
  Scenario s;
  s.bounds = Rect::square(100.0);
  s.victims = {{10.0, 50.0}};
  s.rescuers = {{90.0, 50.0}};  // true bearing pi, right at the seam
  s.tx_power_dbm = {0.0};

  ChannelParams p = zero_noise();
  p.sigma_angle_rad = 3.0;  // wide enough to wrap many times
  const std::vector<Link> links(2000, Link{LinkKind::VictimRescuer, 0, 0});
  NoiseStream st(17, 0, StreamTag::Aoa);
  const MeasurementSet ms = gen_aoa(s, links, p, st);
  bool crossed_seam = false;
  for (const Measurement& m : ms.entries) {
    CHECK(m.value > -std::numbers::pi);
    CHECK(m.value <= std::numbers::pi);
    if (m.value < 0.0) crossed_seam = true;
  }
  CHECK(crossed_seam);  // wrapping actually exercised, not just in range
}

TEST_CASE("equal stream keys regenerate identical measurements", "[channel]") {
  const Scenario s = corner_scenario();
  const ChannelParams p;
  const std::vector<Link> links = victim_rescuer_links(s);

  NoiseStream a(21, 5, StreamTag::Rss);
  NoiseStream b(21, 5, StreamTag::Rss);
  const MeasurementSet ra = gen_rss(s, links, p, a);
  const MeasurementSet rb = gen_rss(s, links, p, b);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i)
    CHECK(ra.entries[i].value == rb.entries[i].value);

  NoiseStream c(21, 6, StreamTag::Rss);  // next trial: different everywhere
  const MeasurementSet rc = gen_rss(s, links, p, c);
  std::size_t same = 0;
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (ra.entries[i].value == rc.entries[i].value) ++same;
  CHECK(same == 0);
}

TEST_CASE("rssd differencing picks the strongest anchor", "[channel]") {
  MeasurementSet rss;
  rss.modality = Modality::Rss;
  rss.entries = {{{LinkKind::VictimRescuer, 0, 0}, -60.0},
                 {{LinkKind::VictimRescuer, 0, 1}, -70.0},
                 {{LinkKind::VictimRescuer, 0, 2}, -75.0}};

  const MeasurementSet d = derive_rssd(rss, 1);
  REQUIRE(d.modality == Modality::Rssd);
  REQUIRE(d.rssd_reference == std::vector<int>{0});
  REQUIRE(d.size() == 2);
  CHECK(d.entries[0].link.dst == 1);
  CHECK(d.entries[0].value == 10.0);
  CHECK(d.entries[1].link.dst == 2);
  CHECK(d.entries[1].value == 15.0);

  SECTION("flat profile keeps the lowest index and zero differences") {
    for (Measurement& m : rss.entries) m.value = -50.0;
    const MeasurementSet flat = derive_rssd(rss, 1);
    CHECK(flat.rssd_reference == std::vector<int>{0});
    REQUIRE(flat.size() == 2);
    CHECK(flat.entries[0].value == 0.0);
    CHECK(flat.entries[1].value == 0.0);
  }

  SECTION("tied maxima resolve to the lowest rescuer index") {
    rss.entries[1].value = -55.0;
    rss.entries[2].value = -55.0;
    const MeasurementSet tied = derive_rssd(rss, 1);
    CHECK(tied.rssd_reference == std::vector<int>{1});
    REQUIRE(tied.size() == 2);
    CHECK(tied.entries[0].link.dst == 0);
    CHECK(tied.entries[0].value == 5.0);
    CHECK(tied.entries[1].link.dst == 2);
    CHECK(tied.entries[1].value == 0.0);
  }
}

TEST_CASE("rssd differencing handles several victims in order", "[channel]") {
  MeasurementSet rss;
  rss.modality = Modality::Rss;
  rss.entries = {{{LinkKind::VictimRescuer, 0, 0}, -60.0},
                 {{LinkKind::VictimRescuer, 0, 1}, -50.0},
                 {{LinkKind::VictimRescuer, 1, 0}, -40.0},
                 {{LinkKind::VictimRescuer, 1, 1}, -45.0}};
  const MeasurementSet d = derive_rssd(rss, 2);
  REQUIRE(d.rssd_reference == std::vector<int>{1, 0});
  REQUIRE(d.size() == 2);
  CHECK(d.entries[0].link.src == 0);
  CHECK(d.entries[0].link.dst == 0);
  CHECK(d.entries[0].value == 10.0);
  CHECK(d.entries[1].link.src == 1);
  CHECK(d.entries[1].link.dst == 1);
  CHECK(d.entries[1].value == 5.0);
}

TEST_CASE("rssd differencing is invariant to a common power shift",
          "[channel]") {
  // Differencing cancels any constant added to one victim's observations.
  NoiseStream st(33, 0, StreamTag::Rss);
  MeasurementSet rss;
  rss.modality = Modality::Rss;
  for (int r = 0; r < 12; ++r)
    rss.entries.push_back(
        {{LinkKind::VictimRescuer, 0, r}, st.uniform(-90.0, -40.0)});

  MeasurementSet shifted = rss;
  for (Measurement& m : shifted.entries) m.value += 3.5;

  const MeasurementSet a = derive_rssd(rss, 1);
  const MeasurementSet b = derive_rssd(shifted, 1);
  REQUIRE(a.size() == b.size());
  CHECK(a.rssd_reference == b.rssd_reference);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.entries[i].value == b.entries[i].value);
}

TEST_CASE("transmit power cancels through generation at zero shadowing",
          "[channel]") {
  Scenario s = corner_scenario();
  s.victims = {{30.0, 40.0}};
  s.tx_power_dbm = {7.0};
  const ChannelParams p = zero_noise();

  NoiseStream st1(1, 0, StreamTag::Rss);
  const MeasurementSet d1 =
      derive_rssd(gen_rss(s, victim_rescuer_links(s), p, st1), 1);

  Scenario s2 = s;
  s2.tx_power_dbm = {-5.0};
  NoiseStream st2(1, 0, StreamTag::Rss);
  const MeasurementSet d2 =
      derive_rssd(gen_rss(s2, victim_rescuer_links(s2), p, st2), 1);

  REQUIRE(d1.size() == d2.size());
  CHECK(d1.rssd_reference == d2.rssd_reference);
  for (std::size_t i = 0; i < d1.size(); ++i)
    CHECK(d1.entries[i].value == d2.entries[i].value);
}

TEST_CASE("channel generators reject malformed inputs", "[channel]") {
  const Scenario s = corner_scenario();
  const ChannelParams p;

  SECTION("empty link list") {
    NoiseStream st(1, 0, StreamTag::Toa);
    CHECK_THROWS_WITH(gen_toa_ranges(s, {}, p, st),
                      ContainsSubstring("no links"));
  }

  SECTION("tdoa needs at least three rescuers") {
    NoiseStream st(1, 0, StreamTag::Tdoa);
    CHECK_THROWS_WITH(gen_tdoa(s, 0, {0, 1}, p, st),
                      ContainsSubstring("need >= 3 rescuers"));
  }

  SECTION("aoa rejects victim-victim links") {
    NoiseStream st(1, 0, StreamTag::Aoa);
    const std::vector<Link> vv = {{LinkKind::VictimVictim, 0, 1}};
    CHECK_THROWS_WITH(gen_aoa(s, vv, p, st),
                      ContainsSubstring("victim->rescuer links only"));
  }

  SECTION("rss rejects links inside the reference distance") {
    Scenario tight = s;
    tight.victims = {{0.5, 0.0}};
    tight.tx_power_dbm = {0.0};
    NoiseStream st(1, 0, StreamTag::Rss);
    CHECK_THROWS_WITH(
        gen_rss(tight, victim_rescuer_links(tight), p, st),
        ContainsSubstring("inside reference distance"));

    // Exactly at the reference distance is allowed.
    Scenario edge = s;
    edge.victims = {{1.0, 0.0}};
    edge.tx_power_dbm = {0.0};
    const std::vector<Link> one = {{LinkKind::VictimRescuer, 0, 0}};
    NoiseStream st2(1, 0, StreamTag::Rss);
    CHECK_NOTHROW(gen_rss(edge, one, zero_noise(), st2));
  }

  SECTION("rssd derivation needs rss input and two observations") {
    MeasurementSet toa;
    toa.modality = Modality::ToaRange;
    CHECK_THROWS_WITH(derive_rssd(toa, 1),
                      ContainsSubstring("input must be RSS"));

    MeasurementSet lone;
    lone.modality = Modality::Rss;
    lone.entries = {{{LinkKind::VictimRescuer, 0, 0}, -60.0}};
    CHECK_THROWS_WITH(derive_rssd(lone, 1),
                      ContainsSubstring("insufficient for differencing"));

    // Victim 0 is well served; victim 1 has no observations at all.
    MeasurementSet skewed;
    skewed.modality = Modality::Rss;
    skewed.entries = {{{LinkKind::VictimRescuer, 0, 0}, -60.0},
                      {{LinkKind::VictimRescuer, 0, 1}, -65.0}};
    CHECK_THROWS_WITH(derive_rssd(skewed, 2), ContainsSubstring("victim 1"));
  }
}

TEST_CASE("measurement sets survive a json round trip", "[channel]") {
  const Scenario s = corner_scenario();
  const ChannelParams p;
  NoiseStream st(5, 2, StreamTag::Rss);
  const MeasurementSet ms = gen_rss(s, victim_rescuer_links(s), p, st);
  const MeasurementSet back =
      nlohmann::json(derive_rssd(ms, s.n_victims())).get<MeasurementSet>();
  const MeasurementSet ref = derive_rssd(ms, s.n_victims());
  REQUIRE(back.modality == ref.modality);
  REQUIRE(back.size() == ref.size());
  CHECK(back.rssd_reference == ref.rssd_reference);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(back.entries[i].link == ref.entries[i].link);
    CHECK(back.entries[i].value == ref.entries[i].value);
  }
}
