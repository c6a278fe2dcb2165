#pragma once

#include <charconv>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "opse/layouts.hpp"
#include "opse/speaker_field.hpp"

namespace opse {

/// Shortest round-trip decimal formatting; CSV files rely on it being
/// byte-stable across runs.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
      if (row.size() != header.size())
        throw std::logic_error("CsvTable: row width does not match header");
      for (std::size_t i = 0; i < row.size(); ++i)
        out << (i ? "," : "") << format_double(row[i]);
      out << '\n';
    }
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write(out);
  }
};

/// Layout JSON: {"speakers": [{"azimuth_deg": a} | {"position": [x, y]},
/// optional "orientation_deg" (absolute, degrees)]}.  The listener sits at
/// the origin; omitted orientations point at it.
inline Layout load_layout_json(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("layout JSON: ") + e.what());
  }
  if (!j.contains("speakers") || !j["speakers"].is_array() || j["speakers"].empty())
    throw std::invalid_argument("layout JSON: needs a non-empty 'speakers' array");
  std::vector<Loudspeaker> speakers;
  for (const auto& s : j["speakers"]) {
    Vec2 pos;
    if (s.contains("position")) {
      if (!s["position"].is_array() || s["position"].size() != 2)
        throw std::invalid_argument("layout JSON: 'position' must be [x, y]");
      pos = Vec2(s["position"][0].get<double>(), s["position"][1].get<double>());
    } else if (s.contains("azimuth_deg")) {
      const double a = deg_to_rad(s["azimuth_deg"].get<double>());
      pos = Vec2(std::cos(a), std::sin(a));
    } else {
      throw std::invalid_argument("layout JSON: speaker needs 'azimuth_deg' or 'position'");
    }
    if (pos.norm() < 1e-12)
      throw std::invalid_argument("layout JSON: speaker at the listener position");
    Vec2 orient = -pos.normalized();
    if (s.contains("orientation_deg")) {
      const double o = deg_to_rad(s["orientation_deg"].get<double>());
      orient = Vec2(std::cos(o), std::sin(o));
    }
    speakers.emplace_back(pos, orient);
  }
  return Layout(std::move(speakers));
}

inline Layout load_layout_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open layout file '" + path + "'");
  return load_layout_json(in);
}

/// Minimal polyline plot: one curve per y-column of the table against the
/// first column, auto-scaled into a fixed viewport.
inline void write_svg_lines(std::ostream& out, const CsvTable& t) {
  const int W = 640, H = 400, M = 40;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
  if (t.rows.size() >= 2 && t.header.size() >= 2) {
    double xmin = t.rows.front()[0], xmax = xmin, ymin = t.rows.front()[1], ymax = ymin;
    for (const auto& r : t.rows) {
      xmin = std::min(xmin, r[0]);
      xmax = std::max(xmax, r[0]);
      for (std::size_t c = 1; c < r.size(); ++c) {
        ymin = std::min(ymin, r[c]);
        ymax = std::max(ymax, r[c]);
      }
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    for (std::size_t c = 1; c < t.header.size(); ++c) {
      out << "<polyline fill=\"none\" stroke=\"" << colors[(c - 1) % 8] << "\" points=\"";
      for (const auto& r : t.rows) {
        const double px = M + (W - 2 * M) * (r[0] - xmin) / (xmax - xmin);
        const double py = H - M - (H - 2 * M) * (r[c] - ymin) / (ymax - ymin);
        out << format_double(px) << ',' << format_double(py) << ' ';
      }
      out << "\"/>\n";
    }
  }
  out << "<rect x=\"" << M << "\" y=\"" << M << "\" width=\"" << (W - 2 * M) << "\" height=\""
      << (H - 2 * M) << "\" fill=\"none\" stroke=\"#000\"/>\n</svg>\n";
}

inline void write_svg_file(const std::string& path, const CsvTable& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_svg_lines(out, t);
}

}  // namespace opse
