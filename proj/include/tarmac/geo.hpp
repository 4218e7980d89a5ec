#pragma once

#include <cmath>
#include <numbers>
#include <span>

namespace tarmac {

inline constexpr double kEarthRadiusM = 6'371'000.0;

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const LatLon&) const = default;
};

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }

/// Great-circle distance on a sphere of radius 6,371 km.
inline double haversine_m(LatLon a, LatLon b) {
  const double phi1 = deg_to_rad(a.lat);
  const double phi2 = deg_to_rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg_to_rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(std::fmin(1.0, h)));
}

namespace detail {

inline bool on_segment(LatLon p, LatLon a, LatLon b) {
  const double cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
  if (cross != 0.0) return false;
  return p.lon >= std::fmin(a.lon, b.lon) && p.lon <= std::fmax(a.lon, b.lon) && p.lat >= std::fmin(a.lat, b.lat) &&
         p.lat <= std::fmax(a.lat, b.lat);
}

}  // namespace detail

/// Even-odd ray casting in the (lon, lat) plane. `ring` is closed (first ==
/// last). Points exactly on an edge count as inside.
inline bool point_in_ring(LatLon p, std::span<const LatLon> ring) {
  if (ring.size() < 4) return false;
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 2; i + 1 < ring.size(); j = i++) {
    const LatLon& a = ring[i];
    const LatLon& b = ring[j];
    if (detail::on_segment(p, a, b)) return true;
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double x_cross = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
      if (p.lon < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace tarmac
