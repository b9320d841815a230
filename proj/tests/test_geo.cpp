#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdrsig/geo.hpp"
#include "support.hpp"

using namespace cdrsig;

namespace {

Tower site(const std::string& id, double x, double y) {
  Tower t;
  t.tower_id = id;
  t.x = x;
  t.y = y;
  return t;
}

std::vector<Tower> random_sites(test::Gen& g, int n, double w, double h) {
  std::vector<Tower> out;
  for (int i = 0; i < n; ++i) out.push_back(site("t" + std::to_string(i), g.uniform(0, w), g.uniform(0, h)));
  return out;
}

double overlap_1d(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

struct Rect {
  double x0, y0, x1, y1;
};

Rect random_rect(test::Gen& g, double extent) {
  const double x0 = g.uniform(0, extent), y0 = g.uniform(0, extent);
  return {x0, y0, x0 + g.uniform(1, extent / 2), y0 + g.uniform(1, extent / 2)};
}

ZonePolygon zone_of(const std::string& id, ZoneKind kind, const Rect& r, std::map<std::string, double> attrs = {}) {
  return make_rectangle_zone(id, kind, r.x0, r.y0, r.x1, r.y1, std::move(attrs));
}

// Grid of w×h unit-rectangle districts covering [0,w·s]×[0,h·s].
std::vector<ZonePolygon> grid(int w, int h, double s, ZoneKind kind, const std::string& prefix) {
  std::vector<ZonePolygon> out;
  for (int i = 0; i < w; ++i) {
    for (int j = 0; j < h; ++j) {
      out.push_back(make_rectangle_zone(prefix + std::to_string(i) + "_" + std::to_string(j), kind, i * s, j * s,
                                        (i + 1) * s, (j + 1) * s));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("shoelace area is signed by orientation") {
  const std::vector<Point> ccw = {{0, 0}, {2, 0}, {2, 3}, {0, 3}};
  CHECK(geo::ring_area(ccw) == doctest::Approx(6.0));
  std::vector<Point> cw(ccw.rbegin(), ccw.rend());
  CHECK(geo::ring_area(cw) == doctest::Approx(-6.0));
}

TEST_CASE("convex clipping of rectangles matches the analytic overlap") {
  test::Gen g(31);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_rect(g, 10), b = random_rect(g, 10);
    const std::vector<Point> sa = {{a.x0, a.y0}, {a.x1, a.y0}, {a.x1, a.y1}, {a.x0, a.y1}};
    const std::vector<Point> sb = {{b.x0, b.y0}, {b.x1, b.y0}, {b.x1, b.y1}, {b.x0, b.y1}};
    const auto clipped = geo::clip_to_convex(sa, sb);
    const double expected = overlap_1d(a.x0, a.x1, b.x0, b.x1) * overlap_1d(a.y0, a.y1, b.y0, b.y1);
    const double got = clipped.size() < 3 ? 0.0 : std::abs(geo::ring_area(clipped));
    CHECK(got == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("intersection area of rectangles") {
  test::Gen g(37);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_rect(g, 10), b = random_rect(g, 10);
    const double expected = overlap_1d(a.x0, a.x1, b.x0, b.x1) * overlap_1d(a.y0, a.y1, b.y0, b.y1);
    CHECK(geo::intersection_area(zone_of("a", ZoneKind::district, a), zone_of("b", ZoneKind::taz, b)) ==
          doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("Voronoi cells tile the bound and hold their nearest points") {
  test::Gen g(41);
  for (int trial = 0; trial < 10; ++trial) {
    const double w = 1000, h = 700;
    const auto bound = make_rectangle_zone("bound", ZoneKind::district, 0, 0, w, h);
    const auto sites = random_sites(g, g.integer(2, 40), w, h);
    const auto part = geo::build_voronoi(sites, bound);
    REQUIRE(part.cells.size() == sites.size());
    CHECK(part.total_area() == doctest::Approx(w * h).epsilon(1e-9));
    CHECK(part.bound_area == doctest::Approx(w * h));
    for (std::size_t i = 0; i < sites.size(); ++i) {
      CHECK(part.cells[i].tower_id == sites[i].tower_id);
      CHECK(part.find(sites[i].tower_id) == &part.cells[i]);
    }
    for (int s = 0; s < 300; ++s) {
      const Point p(g.uniform(0, w), g.uniform(0, h));
      std::size_t nearest = 0;
      double best = std::numeric_limits<double>::infinity(), second = best;
      for (std::size_t i = 0; i < sites.size(); ++i) {
        const double d = std::hypot(sites[i].x - p.x(), sites[i].y - p.y());
        if (d < best) {
          second = best;
          best = d;
          nearest = i;
        } else if (d < second) {
          second = d;
        }
      }
      if (second - best < 1e-6) continue;
      CHECK(bg::within(p, part.cells[nearest].shape));
    }
  }
}

TEST_CASE("Voronoi rejects empty bounds and coincident sites") {
  const auto bound = make_rectangle_zone("bound", ZoneKind::district, 0, 0, 10, 10);
  auto code_of = [&](const std::vector<Tower>& sites) {
    try {
      geo::build_voronoi(sites, bound);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Internal;
  };
  CHECK(code_of({site("a", 20, 20), site("b", 30, 30)}) == ErrorCode::EmptyBound);
  CHECK(code_of({site("a", 1, 1), site("b", 1, 1)}) == ErrorCode::DuplicateTowerLocation);
}

TEST_CASE("a site outside the bound can still own part of it") {
  const auto bound = make_rectangle_zone("bound", ZoneKind::district, 0, 0, 10, 10);
  const auto part = geo::build_voronoi({site("in", 2, 5), site("out", 12, 5)}, bound);
  CHECK(part.find("in")->area == doctest::Approx(70.0));
  CHECK(part.find("out")->area == doctest::Approx(30.0));
}

TEST_CASE("near-duplicate towers merge into the smallest id") {
  std::vector<Tower> placed = {site("c", 0, 0), site("a", 0.5, 0), site("b", 100, 100), site("d", 100.3, 100.4)};
  const auto merged = geo::merge_near_duplicate_towers(TowerSet(placed), 1.0);
  REQUIRE(merged.representatives.size() == 2);
  CHECK(merged.representatives[0].tower_id == "a");
  CHECK(merged.representatives[1].tower_id == "b");
  CHECK(merged.alias.at("c") == "a");
  CHECK(merged.alias.at("d") == "b");
  CHECK(merged.alias.at("b") == "b");
  CHECK_THROWS_AS(geo::merge_near_duplicate_towers(TowerSet({site("x", 1, 1), site("y", 1, 1)})), Error);
}

TEST_CASE("areal weights of grids match the analytic overlap") {
  test::Gen g(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ZonePolygon> districts, zones;
    std::vector<Rect> dr, zr;
    for (int i = 0; i < 5; ++i) {
      dr.push_back(random_rect(g, 50));
      districts.push_back(zone_of("d" + std::to_string(i), ZoneKind::district, dr.back()));
    }
    for (int j = 0; j < 6; ++j) {
      zr.push_back(random_rect(g, 50));
      zones.push_back(zone_of("z" + std::to_string(j), ZoneKind::taz, zr.back(), {{"population", g.uniform(0, 1000)}}));
    }
    const auto w = geo::areal_weights(districts, zones);
    REQUIRE(w.weights.rows() == 5);
    REQUIRE(w.weights.cols() == 6);
    for (int i = 0; i < 5; ++i) {
      double covered = 0;
      for (int j = 0; j < 6; ++j) {
        const double inter = overlap_1d(dr[i].x0, dr[i].x1, zr[j].x0, zr[j].x1) *
                             overlap_1d(dr[i].y0, dr[i].y1, zr[j].y0, zr[j].y1);
        const double area_z = (zr[j].x1 - zr[j].x0) * (zr[j].y1 - zr[j].y0);
        CHECK(std::abs(w.weights.coeff(i, j) - inter / area_z) <= 1e-9);
        covered += inter;
      }
      CHECK(std::abs(w.covered_area[i] - covered) <= 1e-9 * std::max(1.0, covered));
      CHECK(w.district_area[i] == doctest::Approx((dr[i].x1 - dr[i].x0) * (dr[i].y1 - dr[i].y0)));
    }
  }
}

TEST_CASE("population interpolation equals the explicit double sum") {
  test::Gen g(47);
  for (int trial = 0; trial < 20; ++trial) {
    const auto districts = grid(4, 3, 100, ZoneKind::district, "d");
    std::vector<ZonePolygon> tazs;
    for (int j = 0; j < 8; ++j) {
      tazs.push_back(zone_of("z" + std::to_string(j), ZoneKind::taz, random_rect(g, 300),
                             {{"population", std::floor(g.uniform(0, 5000))}}));
    }
    const auto est = geo::interpolate_population(districts, tazs);
    for (const auto& d : districts) {
      double expected = 0;
      for (const auto& z : tazs) expected += geo::intersection_area(d, z) / z.area * *z.attribute("population");
      CHECK(std::abs(est.population.at(d.zone_id) - expected) <= 1e-9 * std::max(1.0, expected));
    }
  }
}

TEST_CASE("population is conserved when zones lie inside the districts") {
  test::Gen g(53);
  const auto districts = grid(5, 5, 100, ZoneKind::district, "d");
  std::vector<ZonePolygon> tazs = grid(10, 10, 50, ZoneKind::taz, "z");
  double total = 0;
  for (auto& z : tazs) {
    const double p = std::floor(g.uniform(0, 1000));
    z.attributes["population"] = p;
    total += p;
  }
  const auto est = geo::interpolate_population(districts, tazs);
  double sum = 0;
  for (const auto& [id, p] : est.population) sum += p;
  CHECK(sum == doctest::Approx(total).epsilon(1e-12));
  CHECK(est.partially_covered.empty());
  for (const auto& [id, c] : est.coverage) CHECK(c == doctest::Approx(1.0));
}

TEST_CASE("penetration equals the explicit double sum over Voronoi cells") {
  test::Gen g(59);
  for (int trial = 0; trial < 10; ++trial) {
    const auto districts = grid(3, 3, 100, ZoneKind::district, "d");
    const auto bound = make_rectangle_zone("bound", ZoneKind::district, 0, 0, 300, 300);
    const auto sites = random_sites(g, 25, 300, 300);
    const auto part = geo::build_voronoi(sites, bound);
    std::map<std::string, double> homes, pops;
    for (const auto& s : sites) {
      if (g.coin(0.8)) homes[s.tower_id] = g.integer(0, 200);
    }
    for (const auto& d : districts) pops[d.zone_id] = g.coin(0.9) ? g.uniform(500, 5000) : 0.0;
    const auto res = geo::penetration_rate(districts, part, homes, pops);
    for (const auto& d : districts) {
      double weighted = 0;
      for (const auto& cell : part.cells) {
        const auto it = homes.find(cell.tower_id);
        if (it == homes.end() || cell.area <= 0) continue;
        weighted += geo::intersection_area(d.shape, cell.shape) / cell.area * it->second;
      }
      CHECK(std::abs(res.weighted_homes.at(d.zone_id) - weighted) <= 1e-9 * std::max(1.0, weighted));
      if (pops[d.zone_id] > 0) {
        CHECK(std::abs(res.rate.at(d.zone_id) - weighted / pops[d.zone_id]) <= 1e-9);
      } else {
        CHECK(std::find(res.zero_population.begin(), res.zero_population.end(), d.zone_id) !=
              res.zero_population.end());
        CHECK(res.rate.count(d.zone_id) == 0);
      }
    }
  }
}

TEST_CASE("locating districts breaks boundary ties by id") {
  const std::vector<ZonePolygon> d = {make_rectangle_zone("b", ZoneKind::district, 0, 0, 1, 1),
                                      make_rectangle_zone("a", ZoneKind::district, 1, 0, 2, 1)};
  CHECK(geo::locate_district(Point(0.5, 0.5), d) == "b");
  CHECK(geo::locate_district(Point(1.0, 0.5), d) == "a");
  CHECK(geo::locate_district(Point(0.0, 0.0), d) == "b");
  CHECK_FALSE(geo::locate_district(Point(3.0, 0.5), d).has_value());
}

TEST_CASE("average spatial resolution") {
  const auto zones = grid(2, 2, 1000, ZoneKind::district, "d");
  CHECK(geo::avg_spatial_resolution_km(zones) == doctest::Approx(1.0));
  CHECK_THROWS_AS(geo::avg_spatial_resolution_km({}), Error);
}

TEST_CASE("diagnostic outputs mention every cell and weight") {
  const auto bound = make_rectangle_zone("bound", ZoneKind::district, 0, 0, 10, 10);
  const auto part = geo::build_voronoi({site("a", 2, 2), site("b", 8, 8)}, bound);
  const auto gj = geo::voronoi_geojson(part, Projection::identity());
  CHECK(gj.find("\"a\"") != std::string::npos);
  CHECK(gj.find("\"b\"") != std::string::npos);
  const auto w = geo::areal_weights(grid(2, 1, 5, ZoneKind::district, "d"), part);
  CHECK(geo::weights_csv(w).find("d0_0") != std::string::npos);
}
