#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "recseg/geom.hpp"

namespace recseg::ply {

using Rgb = std::array<std::uint8_t, 3>;

// Fixed 64-entry palette: golden-angle hue steps at alternating value and
// saturation, so neighbouring ids look different.
inline const std::array<Rgb, 64>& palette() {
  static const std::array<Rgb, 64> colors = [] {
    std::array<Rgb, 64> c{};
    for (int i = 0; i < 64; ++i) {
      const double h = std::fmod(i * 137.508, 360.0) / 60.0;
      const double s = (i % 2) ? 0.65 : 0.9;
      const double v = (i % 3 == 0) ? 0.95 : ((i % 3 == 1) ? 0.8 : 0.65);
      const double ch = v * s;
      const double x = ch * (1 - std::abs(std::fmod(h, 2.0) - 1));
      double r = 0, g = 0, b = 0;
      switch (static_cast<int>(h)) {
        case 0: r = ch; g = x; break;
        case 1: r = x; g = ch; break;
        case 2: g = ch; b = x; break;
        case 3: g = x; b = ch; break;
        case 4: r = x; b = ch; break;
        default: r = ch; b = x; break;
      }
      const double m = v - ch;
      auto q = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
      c[static_cast<std::size_t>(i)] = {q(r + m), q(g + m), q(b + m)};
    }
    return c;
  }();
  return colors;
}

inline Rgb color_for(int instance) {
  const auto n = static_cast<int>(palette().size());
  return palette()[static_cast<std::size_t>(((instance % n) + n) % n)];
}

// ASCII PLY with per-vertex position, normal and instance color.
inline std::string write_ply(const PointCloud& cloud, const std::vector<int>& instance) {
  if (instance.size() != cloud.size()) throw InvalidArgument("PLY export: label count does not match point count");
  std::ostringstream ss;
  ss << "ply\nformat ascii 1.0\n"
     << "element vertex " << cloud.size() << "\n"
     << "property float x\nproperty float y\nproperty float z\n"
     << "property float nx\nproperty float ny\nproperty float nz\n"
     << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
     << "end_header\n";
  ss << std::setprecision(7);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.positions[i];
    const auto& n = cloud.normals[i];
    const Rgb c = color_for(instance[i]);
    ss << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << n.x() << ' ' << n.y() << ' ' << n.z() << ' '
       << int(c[0]) << ' ' << int(c[1]) << ' ' << int(c[2]) << '\n';
  }
  return ss.str();
}

}  // namespace recseg::ply
