#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "support.hpp"

using namespace tarmac;
using support::at;

namespace {

std::vector<LatLon> square(double lat0, double lon0, double lat1, double lon1) {
  return {{lat0, lon0}, {lat0, lon1}, {lat1, lon1}, {lat1, lon0}, {lat0, lon0}};
}

// Andrew's monotone chain in (x = lon, y = lat); counter-clockwise, open.
std::vector<std::pair<double, double>> hull(std::vector<std::pair<double, double>> pts) {
  std::sort(pts.begin(), pts.end(), [](auto a, auto b) { return a.second < b.second || (a.second == b.second && a.first < b.first); });
  auto cross = [](auto o, auto a, auto b) {
    return (a.second - o.second) * (b.first - o.first) - (a.first - o.first) * (b.second - o.second);
  };
  std::vector<std::pair<double, double>> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i - 1]) <= 0) --k;
    h[k++] = pts[i - 1];
  }
  h.resize(k - 1);
  return h;
}

Trajectory track(const std::vector<GpsPoint>& pts) {
  Trajectory t;
  t.vehicle_id = pts.front().vehicle_id;
  for (const auto& p : pts) t.points.push_back({p, std::nullopt, Zone::other});
  return t;
}

}  // namespace

TEST(Geo, HaversineExamples) {
  const LatLon a{33.9425, -118.4081};
  EXPECT_EQ(haversine_m(a, a), 0.0);
  const double d = haversine_m({0, 0}, {0, 1});
  EXPECT_NEAR(d, 111'195.0, 1.0);
  EXPECT_NEAR(d, oracle::spherical_law_m(0, 0, 0, 1), 1e-6);
}

TEST(Geo, HaversineSymmetricAndMatchesOracle) {
  support::Gen g(100);
  for (int i = 0; i < 100; ++i) {
    const LatLon a{g.uniform(-90, 90), g.uniform(-180, 180)};
    const LatLon b{g.uniform(-90, 90), g.uniform(-180, 180)};
    EXPECT_EQ(haversine_m(a, b), haversine_m(b, a));
    EXPECT_NEAR(haversine_m(a, b), oracle::spherical_law_m(a.lat, a.lon, b.lat, b.lon), 1.0);
  }
}

TEST(Zones, PriorityAndOutside) {
  const ZoneMap zones({{Zone::apron, square(0, 0, 2, 2)}, {Zone::runway, square(1, 1, 3, 3)}, {Zone::parking, square(-2, -2, -1, -1)}});
  EXPECT_EQ(zones.classify({2, 2}), Zone::runway);      // centroid of the runway square
  EXPECT_EQ(zones.classify({1.5, 1.5}), Zone::runway);  // inside apron and runway
  EXPECT_EQ(zones.classify({0.5, 0.5}), Zone::apron);
  EXPECT_EQ(zones.classify({-1.5, -1.5}), Zone::parking);
  EXPECT_EQ(zones.classify({10, 10}), Zone::other);
  EXPECT_EQ(zones.classify({0, 1}), Zone::apron);  // on an edge counts as inside
  EXPECT_EQ(zones.classify({0, 0}), Zone::apron);  // vertex
}

TEST(Zones, BadRingsRejected) {
  EXPECT_THROW(ZoneMap({{Zone::apron, {{0, 0}, {0, 1}, {1, 1}}}}), ConfigError);
  EXPECT_THROW(ZoneMap({{Zone::apron, {{0, 0}, {0, 1}, {1, 1}, {1, 0}}}}), ConfigError);
  EXPECT_THROW(ZoneMap::from_json(nlohmann::json::parse(R"({"zones":[{"name":"taxiway","ring":[]}]})")), ConfigError);
}

TEST(Zones, JsonRoundTrip) {
  const ZoneMap zones({{Zone::runway, square(33.94, -118.41, 33.95, -118.40)}});
  const ZoneMap back = ZoneMap::from_json(zones.to_json());
  EXPECT_EQ(back.to_json(), zones.to_json());
  EXPECT_TRUE(back.has(Zone::runway));
  EXPECT_FALSE(back.has(Zone::apron));
}

// Property: on random convex polygons, ray casting agrees with half-planes.
TEST(Zones, AgreesWithHalfPlaneOracleOnConvexPolygons) {
  support::Gen g(101);
  int disagreements = 0;
  for (int poly = 0; poly < 50; ++poly) {
    std::vector<std::pair<double, double>> cloud;
    const double clat = g.uniform(-60, 60), clon = g.uniform(-170, 170), r = g.uniform(0.001, 0.05);
    for (int i = 0, n = g.integer(3, 12); i < n; ++i) cloud.emplace_back(clat + g.uniform(-r, r), clon + g.uniform(-r, r));
    const auto h = hull(cloud);
    if (h.size() < 3) continue;
    std::vector<LatLon> ring;
    for (auto [lat, lon] : h) ring.push_back({lat, lon});
    ring.push_back(ring.front());
    const ZoneMap zones({{Zone::apron, ring}});
    for (int s = 0; s < 200; ++s) {
      const double lat = clat + g.uniform(-1.5 * r, 1.5 * r), lon = clon + g.uniform(-1.5 * r, 1.5 * r);
      const bool lib = zones.classify({lat, lon}) == Zone::apron;
      if (lib != oracle::inside_convex(lat, lon, h)) ++disagreements;
    }
  }
  EXPECT_EQ(disagreements, 0);
}

TEST(Clean, DropReasons) {
  const TimePoint t0 = at("2016-07-01T10:00:00Z");
  std::vector<GpsPoint> pts = {
      support::point("A", "X1", t0, 33.9, -118.4),
      support::point("A", "X1", t0 + std::chrono::seconds{1}, 33.9, -118.4),           // stationary: kept
      support::point("A", "X1", t0 + std::chrono::seconds{2}, 33.9 + 0.0899, -118.4),  // ~10 km in 1 s
      support::point("A", "X1", t0 + std::chrono::seconds{3}, 33.9, -118.4, std::nullopt),
      support::point("A", "X1", t0 + std::chrono::seconds{1}, 33.9, -118.4),  // exact duplicate
  };
  const CleanResult r = clean_points(pts);
  EXPECT_EQ(r.stats.input, 5u);
  EXPECT_EQ(r.stats.kept, 2u);
  EXPECT_EQ(r.stats.discontinuity, 1u);
  EXPECT_EQ(r.stats.missing_altitude, 1u);
  EXPECT_EQ(r.stats.duplicate_timestamp, 1u);
}

// Property: kept + dropped == input and kept points are time-ordered per vehicle.
TEST(Clean, ConservationProperty) {
  support::Gen g(102);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<GpsPoint> pts;
    const TimePoint t0 = at("2016-07-01T10:00:00Z");
    for (int i = 0, n = g.integer(0, 80); i < n; ++i) {
      pts.push_back(support::point("V" + std::to_string(g.integer(0, 3)), std::nullopt,
                                   t0 + std::chrono::seconds{g.integer(0, 60)}, 33.9 + g.uniform(0, g.coin(0.1) ? 1.0 : 1e-4),
                                   -118.4, g.coin(0.1) ? std::nullopt : std::optional<double>(30.0)));
    }
    const CleanResult r = clean_points(pts, g.uniform(5, 200));
    EXPECT_EQ(r.stats.kept + r.stats.dropped(), r.stats.input);
    EXPECT_EQ(r.points.size(), r.stats.kept);
    for (std::size_t i = 1; i < r.points.size(); ++i) {
      if (r.points[i].vehicle_id == r.points[i - 1].vehicle_id) {
        EXPECT_LT(r.points[i - 1].time, r.points[i].time);
      }
    }
  }
}

TEST(Segment, Examples) {
  const TimePoint t0 = at("2016-07-01T10:00:00Z");
  std::vector<GpsPoint> contiguous;
  for (int i = 0; i < 10; ++i) contiguous.push_back(support::point("A", "X1", t0 + std::chrono::seconds{i}, 33.9, -118.4));
  const auto one = segment(contiguous);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].points.size(), 10u);

  auto gapped = contiguous;
  gapped.push_back(support::point("A", "X1", t0 + std::chrono::hours{2}, 33.9, -118.4));
  EXPECT_EQ(segment(gapped).size(), 2u);

  std::vector<GpsPoint> shared_tail = {support::point("N1", "AA1", t0, 33.9, -118.4),
                                       support::point("N1", "AA2", t0 + std::chrono::seconds{5}, 33.9, -118.4)};
  EXPECT_EQ(segment(shared_tail).size(), 2u);
}

TEST(Segment, SameFlightOnDifferentDatesSplits) {
  std::vector<GpsPoint> pts = {support::point("N1", "AA1", at("2016-07-01T23:59:59Z"), 33.9, -118.4),
                               support::point("N1", "AA1", at("2016-07-02T00:00:01Z"), 33.9, -118.4)};
  const auto t = segment(pts);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_NE(t[0].date, t[1].date);
  SegmentOptions local;
  local.day_zone = TimeZone::parse("-07:00");
  EXPECT_EQ(segment(pts, local).size(), 1u);
}

TEST(Kinematics, Examples) {
  const TimePoint t0 = at("2016-07-01T10:00:00Z");
  const double dlat = 100.0 / kEarthRadiusM * 180.0 / std::numbers::pi;
  Trajectory t = compute_kinematics(track({support::point("A", {}, t0, 10.0, 20.0),
                                           support::point("A", {}, t0 + std::chrono::seconds{10}, 10.0 + dlat, 20.0)}));
  EXPECT_FALSE(t.points[0].speed_mps.has_value());
  EXPECT_NEAR(*t.points[1].speed_mps, 10.0, 1e-9);

  const Trajectory single = compute_kinematics(track({support::point("A", {}, t0, 10.0, 20.0)}));
  EXPECT_FALSE(single.points[0].speed_mps.has_value());

  try {
    compute_kinematics(track({support::point("A", {}, t0, 10, 20), support::point("A", {}, t0, 10, 20)}));
    FAIL();
  } catch (const ContractViolation& e) {
    EXPECT_STREQ(e.what(), "zero time delta at index 1");
  }
}

// Property: label_zones is idempotent and per-point, so order does not matter.
TEST(Labels, IdempotentAndOrderIndependent) {
  const ScenarioLayout layout = default_layout();
  support::Gen g(103);
  std::vector<GpsPoint> pts;
  for (int i = 0; i < 300; ++i) {
    const LatLon p = layout.at(g.uniform(-500, 1700), g.uniform(-20, 260));
    pts.push_back(support::point("A", {}, at("2016-07-01T10:00:00Z") + std::chrono::seconds{i}, p.lat, p.lon));
  }
  const Trajectory once = label_zones(track(pts), layout.zones);
  EXPECT_EQ(label_zones(once, layout.zones), once);
  auto shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), g.eng);
  const Trajectory other = label_zones(track(shuffled), layout.zones);
  for (const auto& tp : other.points) {
    auto it = std::find_if(once.points.begin(), once.points.end(), [&](const auto& o) { return o.point == tp.point; });
    ASSERT_NE(it, once.points.end());
    EXPECT_EQ(it->zone, tp.zone);
  }
}

TEST(Surface, PipelineConservesPointsAndKeepsSpeedsFinite) {
  const Scenario& sc = support::small_scenario();
  const SurfaceResult s = prepare_surface(sc.points, sc.zones, kDefaultMaxGroundSpeedMps, kDefaultGapThresholdS, sc.spec.zone);
  std::size_t in_trajectories = 0;
  for (const auto& t : s.trajectories) {
    in_trajectories += t.points.size();
    for (std::size_t i = 0; i < t.points.size(); ++i) {
      if (i > 0) {
        ASSERT_TRUE(t.points[i].speed_mps.has_value());
        EXPECT_TRUE(std::isfinite(*t.points[i].speed_mps));
        EXPECT_GE(*t.points[i].speed_mps, 0.0);
        EXPECT_LT(t.points[i - 1].point.time, t.points[i].point.time);
      }
    }
  }
  EXPECT_EQ(in_trajectories + s.stats.dropped(), sc.points.size());
  EXPECT_GT(s.stats.dropped(), 0u);
}

TEST(Surface, LabeledFileRoundTrip) {
  const Scenario& sc = support::small_scenario();
  const SurfaceResult s = prepare_surface(sc.points, sc.zones, kDefaultMaxGroundSpeedMps, kDefaultGapThresholdS, sc.spec.zone);
  std::ostringstream out;
  write_labeled_trajectories(out, s.trajectories);
  std::istringstream in(out.str());
  EXPECT_EQ(read_labeled_trajectories(in), s.trajectories);
}
