#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rloc/error.hpp"
#include "rloc/rng.hpp"
#include "rloc/scenario.hpp"

namespace rloc {

// Floor applied to synthesized ranges so downstream logs and divisions stay
// finite when a large negative noise draw would push a range to zero.
inline constexpr double kMinRangeM = 1e-3;

/// Log-distance path loss and per-modality noise parameters.
struct ChannelParams {
  double ple = 3.0;                // path loss exponent (gamma)
  double sigma_shadow_db = 3.0;    // log-normal shadowing, dB
  double sigma_range_m = 0.3;      // ToA ranging noise as distance (c*sigma_t)
  double sigma_angle_rad = 2.0 * std::numbers::pi / 180.0;  // AoA noise
  double ref_loss_db = 40.0;       // L0 at the reference distance
  double ref_dist_m = 1.0;         // d0
  double prop_speed_mps = 3.0e8;   // c

  void validate() const {
    if (!(ple > 0.0)) throw config_error("channel.ple must be > 0");
    if (sigma_shadow_db < 0.0 || sigma_range_m < 0.0 || sigma_angle_rad < 0.0)
      throw config_error("channel sigmas must be >= 0");
    if (!(ref_dist_m > 0.0)) throw config_error("channel.ref_dist_m must be > 0");
    if (!(prop_speed_mps > 0.0)) throw config_error("propagation speed must be > 0");
  }

  /// Received power in dBm at distance d for transmit power p_tx.
  /// Evaluation order keeps the path term independent of p_tx, so RSS
  /// differencing cancels the transmit power to the last ulp.
  double rss_dbm(double p_tx_dbm, double d) const {
    const double path = ref_loss_db + 10.0 * ple * std::log10(d / ref_dist_m);
    return p_tx_dbm - path;
  }
};

enum class LinkKind { VictimRescuer, VictimVictim };

/// Directed wireless link: src is always a victim index; dst is a rescuer
/// index (VictimRescuer) or another victim index (VictimVictim).
struct Link {
  LinkKind kind = LinkKind::VictimRescuer;
  int src = 0;
  int dst = 0;

  friend bool operator==(const Link&, const Link&) = default;
};

enum class Modality { ToaRange, TdoaRangeDiff, AoaBearing, Rss, Rssd };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::ToaRange: return "toa-range";
    case Modality::TdoaRangeDiff: return "tdoa-range-diff";
    case Modality::AoaBearing: return "aoa-bearing";
    case Modality::Rss: return "rss";
    case Modality::Rssd: return "rssd";
  }
  return "?";
}

struct Measurement {
  Link link;
  double value = 0.0;  // meters, meters, radians in (-pi, pi], dBm, or dB
};

/// Noisy observations of one modality over a link topology.
/// TDoA entries hold (r_dst - r_ref) against the shared reference rescuer;
/// RSSD entries hold (P_ref - P_dst) against a per-victim reference rescuer.
struct MeasurementSet {
  Modality modality = Modality::ToaRange;
  std::vector<Measurement> entries;
  int tdoa_reference = -1;
  std::vector<int> rssd_reference;  // indexed by victim, -1 when absent

  std::size_t size() const { return entries.size(); }
};

/// All victim->rescuer links, ordered by (victim, rescuer).
inline std::vector<Link> victim_rescuer_links(const Scenario& s) {
  std::vector<Link> links;
  links.reserve(static_cast<std::size_t>(s.n_victims() * s.n_rescuers()));
  for (int v = 0; v < s.n_victims(); ++v)
    for (int r = 0; r < s.n_rescuers(); ++r)
      links.push_back({LinkKind::VictimRescuer, v, r});
  return links;
}

/// All victim->victim links, one direction per pair (i < j), ordered by (i, j).
inline std::vector<Link> victim_victim_links(const Scenario& s) {
  std::vector<Link> links;
  for (int i = 0; i < s.n_victims(); ++i)
    for (int j = i + 1; j < s.n_victims(); ++j)
      links.push_back({LinkKind::VictimVictim, i, j});
  return links;
}

inline Point node_position(const Scenario& s, const Link& link, bool dst) {
  if (!dst) return s.victims.at(static_cast<std::size_t>(link.src));
  return link.kind == LinkKind::VictimRescuer
             ? s.rescuers.at(static_cast<std::size_t>(link.dst))
             : s.victims.at(static_cast<std::size_t>(link.dst));
}

inline double link_distance(const Scenario& s, const Link& link) {
  return distance(node_position(s, link, false), node_position(s, link, true));
}

/// Per link: r = d + eps, eps ~ N(0, sigma_range^2), clamped to >= 1 mm.
inline MeasurementSet gen_toa_ranges(const Scenario& s,
                                     const std::vector<Link>& links,
                                     const ChannelParams& params,
                                     NoiseStream& stream) {
  if (links.empty()) throw precondition_error("gen_toa_ranges: no links");
  MeasurementSet ms;
  ms.modality = Modality::ToaRange;
  ms.entries.reserve(links.size());
  for (const Link& link : links) {
    const double d = link_distance(s, link);
    const double r = d + stream.normal(params.sigma_range_m);
    ms.entries.push_back({link, std::max(r, kMinRangeM)});
  }
  return ms;
}

/// Range differences against rescuer_set[0] for one victim. Each rescuer's
/// arrival shares the victim's transmit epoch; rescuer-side noises are
/// independent, so entry j holds (r_j - r_0) with two independent noise draws.
inline MeasurementSet gen_tdoa(const Scenario& s, int victim,
                               const std::vector<int>& rescuer_set,
                               const ChannelParams& params,
                               NoiseStream& stream) {
  if (rescuer_set.size() < 3)
    throw precondition_error("gen_tdoa: underdetermined, need >= 3 rescuers");
  const Point v = s.victims.at(static_cast<std::size_t>(victim));
  std::vector<double> ranges;
  ranges.reserve(rescuer_set.size());
  for (int r : rescuer_set) {
    const double d = distance(v, s.rescuers.at(static_cast<std::size_t>(r)));
    ranges.push_back(d + stream.normal(params.sigma_range_m));
  }
  MeasurementSet ms;
  ms.modality = Modality::TdoaRangeDiff;
  ms.tdoa_reference = rescuer_set[0];
  for (std::size_t j = 1; j < rescuer_set.size(); ++j) {
    ms.entries.push_back(
        {{LinkKind::VictimRescuer, victim, rescuer_set[j]}, ranges[j] - ranges[0]});
  }
  return ms;
}

/// Bearing from rescuer to victim: atan2(yv - yr, xv - xr) + noise, wrapped
/// to (-pi, pi]. Victims carry no antenna arrays, so links must be
/// victim->rescuer.
inline MeasurementSet gen_aoa(const Scenario& s, const std::vector<Link>& links,
                              const ChannelParams& params,
                              NoiseStream& stream) {
  MeasurementSet ms;
  ms.modality = Modality::AoaBearing;
  ms.entries.reserve(links.size());
  for (const Link& link : links) {
    if (link.kind != LinkKind::VictimRescuer)
      throw precondition_error("gen_aoa: victim->rescuer links only");
    const Point v = s.victims.at(static_cast<std::size_t>(link.src));
    const Point r = s.rescuers.at(static_cast<std::size_t>(link.dst));
    const double theta = std::atan2(v.y - r.y, v.x - r.x) +
                         stream.normal(params.sigma_angle_rad);
    ms.entries.push_back({link, wrap_angle(theta)});
  }
  return ms;
}

/// Log-normal shadowing RSS in dBm: P_t - L0 - 10*gamma*log10(d/d0) + w.
inline MeasurementSet gen_rss(const Scenario& s, const std::vector<Link>& links,
                              const ChannelParams& params,
                              NoiseStream& stream) {
  MeasurementSet ms;
  ms.modality = Modality::Rss;
  ms.entries.reserve(links.size());
  for (const Link& link : links) {
    const double d = link_distance(s, link);
    if (d < params.ref_dist_m)
      throw precondition_error("gen_rss: link inside reference distance");
    const double p_tx = s.tx_power_dbm.at(static_cast<std::size_t>(link.src));
    const double p_rx =
        params.rss_dbm(p_tx, d) + stream.normal(params.sigma_shadow_db);
    ms.entries.push_back({link, p_rx});
  }
  return ms;
}

/// Per victim, subtracts every rescuer RSS from the strongest one (ties:
/// lowest rescuer index). The unknown transmit power cancels; entries are
/// D_j = P_ref - P_j >= 0 in dB, ordered by rescuer index, reference omitted.
inline MeasurementSet derive_rssd(const MeasurementSet& rss, int n_victims) {
  if (rss.modality != Modality::Rss)
    throw precondition_error("derive_rssd: input must be RSS");
  MeasurementSet ms;
  ms.modality = Modality::Rssd;
  ms.rssd_reference.assign(static_cast<std::size_t>(n_victims), -1);
  for (int v = 0; v < n_victims; ++v) {
    // Collect this victim's rescuer observations in entry order.
    std::vector<const Measurement*> obs;
    for (const Measurement& m : rss.entries) {
      if (m.link.kind == LinkKind::VictimRescuer && m.link.src == v)
        obs.push_back(&m);
    }
    if (obs.size() < 2)
      throw precondition_error(
          "derive_rssd: insufficient for differencing (victim " +
          std::to_string(v) + ")");
    std::size_t ref = 0;
    for (std::size_t j = 1; j < obs.size(); ++j)
      if (obs[j]->value > obs[ref]->value) ref = j;
    ms.rssd_reference[static_cast<std::size_t>(v)] = obs[ref]->link.dst;
    for (std::size_t j = 0; j < obs.size(); ++j) {
      if (j == ref) continue;
      ms.entries.push_back(
          {obs[j]->link, obs[ref]->value - obs[j]->value});
    }
  }
  return ms;
}

// JSON fixtures.

NLOHMANN_JSON_SERIALIZE_ENUM(LinkKind, {{LinkKind::VictimRescuer, "vr"},
                                        {LinkKind::VictimVictim, "vv"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Modality,
                             {{Modality::ToaRange, "toa-range"},
                              {Modality::TdoaRangeDiff, "tdoa-range-diff"},
                              {Modality::AoaBearing, "aoa-bearing"},
                              {Modality::Rss, "rss"},
                              {Modality::Rssd, "rssd"}})

inline void to_json(nlohmann::json& j, const Measurement& m) {
  j = {{"src", m.link.src},
       {"dst", m.link.dst},
       {"kind", m.link.kind},
       {"value", m.value}};
}
inline void from_json(const nlohmann::json& j, Measurement& m) {
  j.at("src").get_to(m.link.src);
  j.at("dst").get_to(m.link.dst);
  j.at("kind").get_to(m.link.kind);
  j.at("value").get_to(m.value);
}

inline void to_json(nlohmann::json& j, const MeasurementSet& ms) {
  j = {{"modality", ms.modality},
       {"entries", ms.entries},
       {"tdoa_reference", ms.tdoa_reference},
       {"rssd_reference", ms.rssd_reference}};
}
inline void from_json(const nlohmann::json& j, MeasurementSet& ms) {
  j.at("modality").get_to(ms.modality);
  j.at("entries").get_to(ms.entries);
  j.at("tdoa_reference").get_to(ms.tdoa_reference);
  j.at("rssd_reference").get_to(ms.rssd_reference);
}

}  // namespace rloc
