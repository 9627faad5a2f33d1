#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rloc/error.hpp"
#include "rloc/harness.hpp"
#include "rloc/textutil.hpp"

namespace rloc {

inline constexpr const char* kCsvHeader =
    "technique,sweep_axis,sweep_value,nrmse_m,runtime_mean_s,runtime_total_s,"
    "convergence_rate,trials,seed";

namespace detail {

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_failure("cannot write file: " + path);
  out << content;
  if (!out) throw runtime_failure("short write: " + path);
}

inline SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "none") return SweepAxis::None;
  if (name == "rescuers") return SweepAxis::Rescuers;
  if (name == "victims") return SweepAxis::Victims;
  throw config_error("unknown sweep axis: " + name);
}

}  // namespace detail

/// CSV with the fixed column schema, preceded by provenance comment lines.
/// Only the two runtime columns vary between identical re-runs.
inline std::string results_csv(const std::vector<TechniqueRow>& rows,
                               const nlohmann::json& provenance) {
  std::ostringstream out;
  out << "# rloc " << kVersion << "\n";
  out << "# provenance: " << provenance.dump() << "\n";
  bool any_excluded = false;
  for (const TechniqueRow& r : rows) any_excluded |= r.excluded_trials > 0;
  if (any_excluded) {
    out << "# excluded_trials:";
    for (const TechniqueRow& r : rows)
      if (r.excluded_trials > 0)
        out << " " << technique_name(r.technique) << "=" << r.excluded_trials;
    out << "\n";
  }
  out << kCsvHeader << "\n";
  for (const TechniqueRow& r : rows) {
    out << technique_name(r.technique) << ","
        << sweep_axis_name(r.sweep_axis) << "," << r.sweep_value << ","
        << fmt_double(r.nrmse_m) << "," << fmt_double(r.runtime_mean_s) << ","
        << fmt_double(r.runtime_total_s) << ","
        << fmt_double(r.convergence_rate) << "," << r.trials << "," << r.seed
        << "\n";
  }
  return out.str();
}

inline nlohmann::json results_json(const std::vector<TechniqueRow>& rows,
                                   const nlohmann::json& provenance) {
  nlohmann::json out;
  out["provenance"] = provenance;
  out["results"] = nlohmann::json::array();
  for (const TechniqueRow& r : rows) {
    out["results"].push_back({{"technique", technique_name(r.technique)},
                              {"sweep_axis", sweep_axis_name(r.sweep_axis)},
                              {"sweep_value", r.sweep_value},
                              {"nrmse_m", r.nrmse_m},
                              {"runtime_mean_s", r.runtime_mean_s},
                              {"runtime_total_s", r.runtime_total_s},
                              {"convergence_rate", r.convergence_rate},
                              {"trials", r.trials},
                              {"seed", r.seed},
                              {"excluded_trials", r.excluded_trials}});
  }
  return out;
}

inline void emit_results(const std::vector<TechniqueRow>& rows,
                         const nlohmann::json& provenance,
                         const std::string& format, const std::string& path) {
  if (format == "csv") {
    detail::write_file(path, results_csv(rows, provenance));
  } else if (format == "json") {
    detail::write_file(path, results_json(rows, provenance).dump(2) + "\n");
  } else {
    throw config_error("unknown output format: " + format);
  }
}

inline void emit_results(const ExperimentResult& result,
                         const std::string& format, const std::string& path) {
  emit_results(result.rows, result.provenance, format, path);
}

struct LoadedResults {
  std::vector<TechniqueRow> rows;
  nlohmann::json provenance;
};

inline LoadedResults load_results_csv_text(const std::string& text) {
  LoadedResults out;
  out.provenance = nlohmann::json::object();
  std::istringstream in(text);
  std::string raw;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const std::string_view tag = "# provenance: ";
      if (raw.rfind(tag, 0) == 0) {
        out.provenance =
            nlohmann::json::parse(raw.substr(tag.size()), nullptr, false);
        if (out.provenance.is_discarded())
          throw config_error("results file: bad provenance JSON");
      }
      continue;
    }
    if (!header_seen) {
      if (line != kCsvHeader)
        throw config_error("results file: unexpected CSV header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream fs{std::string(line)};
    while (std::getline(fs, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw config_error("results file: bad row at line " +
                         std::to_string(lineno));
    TechniqueRow r;
    r.technique = technique_from_name(fields[0]);
    r.sweep_axis = detail::sweep_axis_from_name(fields[1]);
    bool ok = parse_number(fields[2], r.sweep_value) &&
              parse_number(fields[3], r.nrmse_m) &&
              parse_number(fields[4], r.runtime_mean_s) &&
              parse_number(fields[5], r.runtime_total_s) &&
              parse_number(fields[6], r.convergence_rate) &&
              parse_number(fields[7], r.trials) &&
              parse_number(fields[8], r.seed);
    if (!ok)
      throw config_error("results file: bad numeric field at line " +
                         std::to_string(lineno));
    out.rows.push_back(r);
  }
  if (!header_seen) throw config_error("results file: missing CSV header");
  return out;
}

inline LoadedResults load_results_json_text(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.contains("results"))
    throw config_error("results file: not a results JSON document");
  LoadedResults out;
  out.provenance = j.value("provenance", nlohmann::json::object());
  for (const nlohmann::json& e : j.at("results")) {
    TechniqueRow r;
    r.technique = technique_from_name(e.at("technique").get<std::string>());
    r.sweep_axis =
        detail::sweep_axis_from_name(e.at("sweep_axis").get<std::string>());
    r.sweep_value = e.at("sweep_value").get<int>();
    r.nrmse_m = e.at("nrmse_m").is_number() ? e.at("nrmse_m").get<double>()
                                            : std::nan("");
    r.runtime_mean_s = e.at("runtime_mean_s").get<double>();
    r.runtime_total_s = e.at("runtime_total_s").get<double>();
    r.convergence_rate = e.at("convergence_rate").get<double>();
    r.trials = e.at("trials").get<int>();
    r.seed = e.at("seed").get<std::uint64_t>();
    r.excluded_trials = e.value("excluded_trials", 0);
    out.rows.push_back(r);
  }
  return out;
}

inline LoadedResults load_results_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open results file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
    return load_results_json_text(text);
  return load_results_csv_text(text);
}

// ---------------------------------------------------------------------------
// SVG sweep figure

namespace detail {

inline const char* series_color(Technique t) {
  static constexpr const char* kPalette[] = {
      "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"};
  return kPalette[static_cast<int>(t)];
}

struct Series {
  Technique technique;
  std::vector<std::pair<int, double>> points;  // (sweep value, nrmse)
};

}  // namespace detail

/// Deterministic log-y sweep figure: one labeled polyline per technique,
/// x ticks at the sweep values, y ticks at powers of ten. Identical inputs
/// produce identical bytes (fixed layout, fixed-precision coordinates, no
/// timestamps).
inline std::string render_plot_svg(const std::vector<TechniqueRow>& rows,
                                   SweepAxis axis,
                                   const nlohmann::json& provenance) {
  std::vector<detail::Series> series;
  std::vector<int> values;
  double min_pos = 0.0, max_pos = 0.0;
  for (const TechniqueRow& r : rows) {
    if (r.sweep_axis != axis) continue;
    auto it = std::find_if(series.begin(), series.end(),
                           [&](const detail::Series& s) {
                             return s.technique == r.technique;
                           });
    if (it == series.end()) {
      series.push_back({r.technique, {}});
      it = series.end() - 1;
    }
    it->points.emplace_back(r.sweep_value, r.nrmse_m);
    if (std::find(values.begin(), values.end(), r.sweep_value) == values.end())
      values.push_back(r.sweep_value);
    if (std::isfinite(r.nrmse_m) && r.nrmse_m > 0.0) {
      if (min_pos == 0.0 || r.nrmse_m < min_pos) min_pos = r.nrmse_m;
      if (r.nrmse_m > max_pos) max_pos = r.nrmse_m;
    }
  }
  if (series.empty())
    throw precondition_error(std::string("missing sweep data for axis: ") +
                             sweep_axis_name(axis));
  std::sort(values.begin(), values.end());
  for (detail::Series& s : series)
    std::sort(s.points.begin(), s.points.end());

  if (min_pos == 0.0) {  // all values were zero or non-finite
    min_pos = 1e-3;
    max_pos = 1.0;
  }
  int e_lo = static_cast<int>(std::floor(std::log10(min_pos)));
  int e_hi = static_cast<int>(std::ceil(std::log10(max_pos)));
  if (e_hi <= e_lo) e_hi = e_lo + 1;

  const double width = 800, height = 500;
  const double ml = 70, mr = 170, mt = 40, mb = 55;
  const double pw = width - ml - mr, ph = height - mt - mb;
  const double vmin = values.front(), vmax = values.back();

  auto x_of = [&](double v) {
    if (vmax == vmin) return ml + pw / 2.0;
    return ml + (v - vmin) / (vmax - vmin) * pw;
  };
  auto y_of = [&](double nrmse) {
    double clamped = nrmse;
    if (!std::isfinite(clamped) || clamped <= 0.0)
      clamped = std::pow(10.0, e_lo);
    const double t = (std::log10(clamped) - e_lo) / (e_hi - e_lo);
    const double tc = std::min(1.0, std::max(0.0, t));
    return mt + ph - tc * ph;
  };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<!-- provenance: " << provenance.dump() << " -->\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt_fixed(ml + pw / 2.0, 2)
      << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">NRMSE vs number of "
      << sweep_axis_name(axis) << "</text>\n";

  // Gridlines and ticks.
  for (int e = e_lo; e <= e_hi; ++e) {
    const double y = y_of(std::pow(10.0, e));
    svg << "<line x1=\"" << fmt_fixed(ml, 2) << "\" y1=\"" << fmt_fixed(y, 2)
        << "\" x2=\"" << fmt_fixed(ml + pw, 2) << "\" y2=\"" << fmt_fixed(y, 2)
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << fmt_fixed(ml - 8, 2) << "\" y=\""
        << fmt_fixed(y + 4, 2)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"12\">"
        << fmt_double(std::pow(10.0, e)) << "</text>\n";
  }
  for (int v : values) {
    const double x = x_of(v);
    svg << "<line x1=\"" << fmt_fixed(x, 2) << "\" y1=\"" << fmt_fixed(mt, 2)
        << "\" x2=\"" << fmt_fixed(x, 2) << "\" y2=\"" << fmt_fixed(mt + ph, 2)
        << "\" stroke=\"#eeeeee\"/>\n";
    svg << "<text x=\"" << fmt_fixed(x, 2) << "\" y=\""
        << fmt_fixed(mt + ph + 18, 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">"
        << v << "</text>\n";
  }
  svg << "<rect x=\"" << fmt_fixed(ml, 2) << "\" y=\"" << fmt_fixed(mt, 2)
      << "\" width=\"" << fmt_fixed(pw, 2) << "\" height=\""
      << fmt_fixed(ph, 2) << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  // Axis titles.
  svg << "<text x=\"" << fmt_fixed(ml + pw / 2.0, 2) << "\" y=\""
      << fmt_fixed(height - 12, 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">number of "
      << sweep_axis_name(axis) << "</text>\n";
  svg << "<text x=\"18\" y=\"" << fmt_fixed(mt + ph / 2.0, 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 18 "
      << fmt_fixed(mt + ph / 2.0, 2) << ")\">NRMSE (m), log scale</text>\n";

  // Series.
  for (const detail::Series& s : series) {
    const char* color = detail::series_color(s.technique);
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      if (i) svg << " ";
      svg << fmt_fixed(x_of(s.points[i].first), 2) << ","
          << fmt_fixed(y_of(s.points[i].second), 2);
    }
    svg << "\"/>\n";
    for (const auto& [v, n] : s.points) {
      svg << "<circle cx=\"" << fmt_fixed(x_of(v), 2) << "\" cy=\""
          << fmt_fixed(y_of(n), 2) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
    }
  }

  // Legend.
  double ly = mt + 10;
  for (const detail::Series& s : series) {
    const char* color = detail::series_color(s.technique);
    svg << "<line x1=\"" << fmt_fixed(ml + pw + 12, 2) << "\" y1=\""
        << fmt_fixed(ly - 4, 2) << "\" x2=\"" << fmt_fixed(ml + pw + 34, 2)
        << "\" y2=\"" << fmt_fixed(ly - 4, 2) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fmt_fixed(ml + pw + 40, 2) << "\" y=\""
        << fmt_fixed(ly, 2)
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << technique_name(s.technique) << "</text>\n";
    ly += 20;
  }

  svg << "</svg>\n";
  return svg.str();
}

inline void emit_plot(const std::vector<TechniqueRow>& rows, SweepAxis axis,
                      const nlohmann::json& provenance,
                      const std::string& path) {
  detail::write_file(path, render_plot_svg(rows, axis, provenance));
}

}  // namespace rloc
