#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rloc/error.hpp"
#include "rloc/harness.hpp"
#include "rloc/textutil.hpp"

namespace rloc {

// Config files are a small TOML subset: [section] headers, `key = value`
// lines, #-comments, and flat arrays. Every recognized key maps onto
// ExperimentConfig; anything unrecognized is a hard error so typos cannot
// silently fall back to defaults. An empty file is the default experiment.

namespace detail {

inline std::string strip_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

[[noreturn]] inline void config_fail(const std::string& what, int lineno) {
  throw config_error(what + " (line " + std::to_string(lineno) + ")");
}

inline std::vector<std::string> split_array(std::string_view body,
                                            int lineno) {
  std::vector<std::string> items;
  std::string current;
  bool in_string = false;
  for (char ch : body) {
    if (ch == '"') in_string = !in_string;
    if (ch == ',' && !in_string) {
      items.emplace_back(trim(current));
      current.clear();
    } else {
      current += ch;
    }
  }
  const auto last = trim(current);
  if (!last.empty()) items.emplace_back(last);
  if (in_string) config_fail("unterminated string in array", lineno);
  for (const std::string& item : items)
    if (item.empty()) config_fail("empty array element", lineno);
  return items;
}

inline std::string parse_string_value(std::string_view raw, int lineno) {
  raw = trim(raw);
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"')
    config_fail("expected a quoted string", lineno);
  const auto body = raw.substr(1, raw.size() - 2);
  if (body.find('"') != std::string_view::npos ||
      body.find('\\') != std::string_view::npos)
    config_fail("unsupported escape in string", lineno);
  return std::string(body);
}

}  // namespace detail

/// Parses config text. Unspecified keys keep the default experiment values;
/// the parsed config is validated before being returned.
inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::string section;
  std::set<std::string> seen;
  int lineno = 0;

  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string stripped = detail::strip_comment(raw);
    const std::string_view line = trim(stripped);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        detail::config_fail("malformed section header", lineno);
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "scenario" && section != "channel" && section != "run" &&
          section != "sweep")
        detail::config_fail("unknown section: [" + section + "]", lineno);
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      detail::config_fail("expected key = value", lineno);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      detail::config_fail("expected key = value", lineno);
    if (section.empty())
      detail::config_fail("key outside of a [section]: " + key, lineno);
    const std::string full = section + "." + key;
    if (!seen.insert(full).second)
      detail::config_fail("duplicate key: " + full, lineno);

    auto as_int = [&](int& out) {
      if (!parse_number(value, out))
        detail::config_fail(full + " must be an integer", lineno);
    };
    auto as_u64 = [&](std::uint64_t& out) {
      if (!parse_number(value, out))
        detail::config_fail(full + " must be a non-negative integer", lineno);
    };
    auto as_double = [&](double& out) {
      if (!parse_number(value, out))
        detail::config_fail(full + " must be a number", lineno);
    };
    auto as_bool = [&](bool& out) {
      if (value == "true") out = true;
      else if (value == "false") out = false;
      else detail::config_fail(full + " must be true or false", lineno);
    };
    auto array_body = [&]() -> std::string_view {
      if (value.front() != '[' || value.back() != ']')
        detail::config_fail(full + " must be an array", lineno);
      return value.substr(1, value.size() - 2);
    };

    if (full == "scenario.victims") as_int(cfg.victims);
    else if (full == "scenario.rescuers") as_int(cfg.rescuers);
    else if (full == "scenario.area_m") as_double(cfg.area_m);
    else if (full == "scenario.seed") as_u64(cfg.seed);
    else if (full == "channel.ple") as_double(cfg.channel.ple);
    else if (full == "channel.sigma_shadow_db")
      as_double(cfg.channel.sigma_shadow_db);
    else if (full == "channel.sigma_range_m")
      as_double(cfg.channel.sigma_range_m);
    else if (full == "channel.sigma_angle_deg")
      as_double(cfg.channel.sigma_angle_deg);
    else if (full == "channel.ref_loss_db") as_double(cfg.channel.ref_loss_db);
    else if (full == "channel.ref_dist_m") as_double(cfg.channel.ref_dist_m);
    else if (full == "run.trials") as_int(cfg.trials);
    else if (full == "run.parallelism") as_int(cfg.parallelism);
    else if (full == "run.redraw_powers") as_bool(cfg.redraw_powers);
    else if (full == "run.techniques") {
      cfg.techniques.clear();
      for (const std::string& item : detail::split_array(array_body(), lineno))
        cfg.techniques.push_back(
            technique_from_name(detail::parse_string_value(item, lineno)));
    } else if (full == "sweep.axis") {
      const std::string axis = detail::parse_string_value(value, lineno);
      if (axis == "rescuers") cfg.sweep_axis = SweepAxis::Rescuers;
      else if (axis == "victims") cfg.sweep_axis = SweepAxis::Victims;
      else detail::config_fail("sweep.axis must be \"rescuers\" or \"victims\"",
                               lineno);
    } else if (full == "sweep.values") {
      cfg.sweep_values.clear();
      for (const std::string& item :
           detail::split_array(array_body(), lineno)) {
        int v = 0;
        if (!parse_number(item, v))
          detail::config_fail("sweep.values must be integers", lineno);
        cfg.sweep_values.push_back(v);
      }
    } else {
      detail::config_fail("unknown key: " + full, lineno);
    }
  }

  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// Canonical TOML form of a config; parse_config_text(emit_config(c)) == c.
inline std::string emit_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[scenario]\n";
  out << "victims = " << cfg.victims << "\n";
  out << "rescuers = " << cfg.rescuers << "\n";
  out << "area_m = " << fmt_double(cfg.area_m) << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "\n[channel]\n";
  out << "ple = " << fmt_double(cfg.channel.ple) << "\n";
  out << "sigma_shadow_db = " << fmt_double(cfg.channel.sigma_shadow_db)
      << "\n";
  out << "sigma_range_m = " << fmt_double(cfg.channel.sigma_range_m) << "\n";
  out << "sigma_angle_deg = " << fmt_double(cfg.channel.sigma_angle_deg)
      << "\n";
  out << "ref_loss_db = " << fmt_double(cfg.channel.ref_loss_db) << "\n";
  out << "ref_dist_m = " << fmt_double(cfg.channel.ref_dist_m) << "\n";
  out << "\n[run]\n";
  out << "trials = " << cfg.trials << "\n";
  out << "techniques = [";
  for (std::size_t i = 0; i < cfg.techniques.size(); ++i) {
    if (i) out << ", ";
    out << '"' << technique_name(cfg.techniques[i]) << '"';
  }
  out << "]\n";
  out << "parallelism = " << cfg.parallelism << "\n";
  out << "redraw_powers = " << (cfg.redraw_powers ? "true" : "false") << "\n";
  if (cfg.sweep_axis != SweepAxis::None) {
    out << "\n[sweep]\n";
    out << "axis = \"" << sweep_axis_name(cfg.sweep_axis) << "\"\n";
    out << "values = [";
    for (std::size_t i = 0; i < cfg.sweep_values.size(); ++i) {
      if (i) out << ", ";
      out << cfg.sweep_values[i];
    }
    out << "]\n";
  }
  return out.str();
}

}  // namespace rloc
