#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "opse/math.hpp"
#include "opse/speaker_field.hpp"

namespace opse {

/// Builtin 2D layouts, unit radius, loudspeakers oriented at the origin.
/// The azimuths of itu_5_0 / itu_3_0 / lrslsr / pentagon are standard; the
/// remaining ones are reasonable defaults and can always be replaced by an
/// explicit speaker list.
inline const std::vector<std::pair<std::string, std::vector<double>>>& builtin_layouts() {
  static const std::vector<std::pair<std::string, std::vector<double>>> table = {
      {"itu_5_0", {0.0, -30.0, 30.0, -110.0, 110.0}},
      {"itu_3_0", {0.0, -30.0, 30.0}},
      {"lrc", {0.0, -30.0, 30.0}},
      {"wide_lrc", {0.0, -45.0, 45.0}},
      {"surround_lrc", {0.0, -120.0, 120.0}},
      {"lr_rear", {-30.0, 30.0, 180.0}},
      {"lrslsr", {-30.0, 30.0, -110.0, 110.0}},
      {"pentagon", {0.0, 72.0, 144.0, -144.0, -72.0}},
  };
  return table;
}

inline std::vector<std::string> builtin_layout_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : builtin_layouts()) names.push_back(name);
  return names;
}

inline Layout layout_from_azimuths(const std::vector<double>& degs, double radius = 1.0) {
  std::vector<Loudspeaker> speakers;
  for (double deg : degs) {
    const double a = deg_to_rad(deg);
    const Vec2 pos(radius * std::cos(a), radius * std::sin(a));
    speakers.emplace_back(pos, -pos.normalized());
  }
  return Layout(std::move(speakers));
}

inline bool is_builtin_layout(const std::string& name) {
  for (const auto& [n, _] : builtin_layouts())
    if (n == name) return true;
  return false;
}

inline Layout builtin_layout(const std::string& name) {
  for (const auto& [n, degs] : builtin_layouts())
    if (n == name) return layout_from_azimuths(degs);
  throw std::invalid_argument("unknown layout '" + name + "'");
}

/// Unit direction matrix for the panning problems, one column per speaker.
inline Eigen::Matrix2Xd layout_directions(const Layout& layout) {
  Eigen::Matrix2Xd V(2, layout.size());
  for (std::size_t n = 0; n < layout.size(); ++n) V.col(n) = layout.speakers[n].unit_direction();
  return V;
}

}  // namespace opse
