#include "cdrsig/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cdrsig/csv.hpp"

namespace cdrsig::geo {

namespace {

std::vector<Point> open_ring(const Polygon::ring_type& ring) {
  std::vector<Point> out(ring.begin(), ring.end());
  if (out.size() > 1 && bg::equals(out.front(), out.back())) out.pop_back();
  return out;
}

// Sutherland-Hodgman step keeping points with a*x + b*y <= c.
std::vector<Point> clip_halfplane(const std::vector<Point>& poly, double a, double b, double c) {
  std::vector<Point> out;
  if (poly.empty()) return out;
  out.reserve(poly.size() + 2);
  auto f = [&](const Point& p) { return c - (a * p.x() + b * p.y()); };
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point& cur = poly[i];
    const Point& nxt = poly[(i + 1) % poly.size()];
    const double fc = f(cur);
    const double fn = f(nxt);
    if (fc >= 0.0) out.push_back(cur);
    if ((fc >= 0.0) != (fn >= 0.0)) {
      const double t = fc / (fc - fn);
      out.emplace_back(cur.x() + t * (nxt.x() - cur.x()), cur.y() + t * (nxt.y() - cur.y()));
    }
  }
  if (out.size() < 3) out.clear();
  return out;
}

bool is_convex_ccw(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  if (ring_area(ring) <= 0.0) return false;
  double scale = 0.0;
  for (const auto& p : ring) scale = std::max({scale, std::abs(p.x()), std::abs(p.y())});
  const double eps = 1e-12 * std::max(scale * scale, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p0 = ring[i];
    const Point& p1 = ring[(i + 1) % n];
    const Point& p2 = ring[(i + 2) % n];
    const double cross = (p1.x() - p0.x()) * (p2.y() - p1.y()) - (p1.y() - p0.y()) * (p2.x() - p1.x());
    if (cross < -eps) return false;
  }
  return true;
}

double overlap_with_convex(const Polygon& subject, const std::vector<Point>& convex) {
  double area = std::abs(ring_area(clip_to_convex(open_ring(subject.outer()), convex)));
  for (const auto& hole : subject.inners()) {
    area -= std::abs(ring_area(clip_to_convex(open_ring(hole), convex)));
  }
  return std::max(area, 0.0);
}

double polygon_overlap(const Polygon& a, const Polygon& b) {
  if (!bg::intersects(bg::return_envelope<Box>(a), bg::return_envelope<Box>(b))) return 0.0;
  if (b.inners().empty()) {
    auto ring = open_ring(b.outer());
    if (is_convex_ccw(ring)) return overlap_with_convex(a, ring);
  }
  if (a.inners().empty()) {
    auto ring = open_ring(a.outer());
    if (is_convex_ccw(ring)) return overlap_with_convex(b, ring);
  }
  MultiPolygon out;
  try {
    bg::intersection(a, b, out);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::InvalidGeometry, std::string("polygon overlay failed: ") + e.what());
  }
  return bg::area(out);
}

double multipolygon_overlap(const MultiPolygon& a, const MultiPolygon& b) {
  double area = 0.0;
  for (const auto& pa : a) {
    for (const auto& pb : b) area += polygon_overlap(pa, pb);
  }
  return area;
}

void validate(const MultiPolygon& g, const char* which) {
  std::string reason;
  if (!bg::is_valid(g, reason)) {
    throw Error(ErrorCode::InvalidGeometry, std::string(which) + " polygon invalid: " + reason);
  }
}

// Uniform bucket grid over the sites for expanding-ring neighbour scans.
class SiteGrid {
 public:
  SiteGrid(const std::vector<Point>& sites) : sites_(sites) {
    double x0 = sites[0].x(), x1 = x0, y0 = sites[0].y(), y1 = y0;
    for (const auto& p : sites) {
      x0 = std::min(x0, p.x());
      x1 = std::max(x1, p.x());
      y0 = std::min(y0, p.y());
      y1 = std::max(y1, p.y());
    }
    x0_ = x0;
    y0_ = y0;
    // A degenerate extent (collinear sites) would otherwise give a very fine grid.
    const double floor = std::max({x1 - x0, y1 - y0, 1e-9}) / static_cast<double>(sites.size());
    const double w = std::max(x1 - x0, floor), h = std::max(y1 - y0, floor);
    size_ = std::sqrt(w * h / static_cast<double>(sites.size()));
    if (!(size_ > 0.0)) size_ = std::max(w, h);
    nx_ = static_cast<int>(std::floor(w / size_)) + 1;
    ny_ = static_cast<int>(std::floor(h / size_)) + 1;
    buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t i = 0; i < sites.size(); ++i) {
      auto [bx, by] = bucket_of(sites[i]);
      buckets_[static_cast<std::size_t>(by) * nx_ + bx].push_back(i);
    }
  }

  std::pair<int, int> bucket_of(const Point& p) const {
    int bx = std::clamp(static_cast<int>((p.x() - x0_) / size_), 0, nx_ - 1);
    int by = std::clamp(static_cast<int>((p.y() - y0_) / size_), 0, ny_ - 1);
    return {bx, by};
  }
  double bucket_size() const { return size_; }
  int max_ring() const { return std::max(nx_, ny_); }

  // Calls fn(index) for every site in buckets at Chebyshev distance r.
  template <typename Fn>
  void for_ring(int cx, int cy, int r, Fn&& fn) const {
    for (int by = cy - r; by <= cy + r; ++by) {
      if (by < 0 || by >= ny_) continue;
      const bool edge_row = (by == cy - r || by == cy + r);
      for (int bx = cx - r; bx <= cx + r; bx += (edge_row || r == 0) ? 1 : 2 * r) {
        if (bx < 0 || bx >= nx_) continue;
        for (auto i : buckets_[static_cast<std::size_t>(by) * nx_ + bx]) fn(i);
      }
    }
  }

 private:
  const std::vector<Point>& sites_;
  double x0_ = 0, y0_ = 0, size_ = 1;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace

double ring_area(const std::vector<Point>& ring) {
  double s = 0.0;
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = ring[i];
    const Point& q = ring[(i + 1) % n];
    s += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * s;
}

std::vector<Point> clip_to_convex(const std::vector<Point>& subject, const std::vector<Point>& clip) {
  std::vector<Point> out = subject;
  const std::size_t n = clip.size();
  for (std::size_t i = 0; i < n && !out.empty(); ++i) {
    const Point& e0 = clip[i];
    const Point& e1 = clip[(i + 1) % n];
    // Inside is the left side of e0->e1.
    const double a = e1.y() - e0.y();
    const double b = -(e1.x() - e0.x());
    out = clip_halfplane(out, a, b, a * e0.x() + b * e0.y());
  }
  return out;
}

// ---------------------------------------------------------------------------

const VoronoiCell* VoronoiPartition::find(const std::string& tower_id) const {
  auto it = index_.find(tower_id);
  return it == index_.end() ? nullptr : &cells[it->second];
}

double VoronoiPartition::total_area() const {
  double s = 0.0;
  for (const auto& c : cells) s += c.area;
  return s;
}

TowerMerge merge_near_duplicate_towers(const TowerSet& towers, double min_separation_m) {
  const auto& ts = towers.towers();
  const std::size_t n = ts.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return std::tie(ts[a].x, ts[a].y) < std::tie(ts[b].x, ts[b].y);
  });

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t a = 0; a < n; ++a) {
    const Tower& ta = ts[order[a]];
    for (std::size_t b = a + 1; b < n; ++b) {
      const Tower& tb = ts[order[b]];
      if (tb.x - ta.x >= min_separation_m) break;
      const double d = std::hypot(tb.x - ta.x, tb.y - ta.y);
      if (d == 0.0) {
        throw Error(ErrorCode::DuplicateTowerLocation,
                    "towers '" + ta.tower_id + "' and '" + tb.tower_id + "' share a location");
      }
      if (d < min_separation_m) parent[find(order[a])] = find(order[b]);
    }
  }

  std::map<std::size_t, std::string> rep_id;  // root -> smallest id
  for (std::size_t i = 0; i < n; ++i) {
    auto& id = rep_id[find(i)];
    if (id.empty() || ts[i].tower_id < id) id = ts[i].tower_id;
  }
  TowerMerge m;
  for (std::size_t i = 0; i < n; ++i) m.alias[ts[i].tower_id] = rep_id[find(i)];
  for (const auto& t : ts) {
    if (m.alias[t.tower_id] == t.tower_id) m.representatives.push_back(t);
  }
  std::sort(m.representatives.begin(), m.representatives.end(),
            [](const Tower& a, const Tower& b) { return a.tower_id < b.tower_id; });
  return m;
}

VoronoiPartition build_voronoi(const std::vector<Tower>& towers, const ZonePolygon& bound) {
  if (!(bound.area > 0.0)) throw Error(ErrorCode::EmptyBound, "bound has no area");
  std::vector<Point> sites;
  sites.reserve(towers.size());
  bool any_inside = false;
  for (const auto& t : towers) {
    sites.emplace_back(t.x, t.y);
    any_inside = any_inside || bg::covered_by(sites.back(), bound.shape);
  }
  if (!any_inside) throw Error(ErrorCode::EmptyBound, "no tower lies inside the bound");
  {
    std::vector<std::size_t> order(sites.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) {
      return std::make_pair(sites[a].x(), sites[a].y()) < std::make_pair(sites[b].x(), sites[b].y());
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (sites[order[i]].x() == sites[order[i - 1]].x() && sites[order[i]].y() == sites[order[i - 1]].y()) {
        throw Error(ErrorCode::DuplicateTowerLocation, "towers '" + towers[order[i - 1]].tower_id + "' and '" +
                                                           towers[order[i]].tower_id + "' share a location");
      }
    }
  }

  const Box& bb = bound.bbox;
  const double bx0 = bb.min_corner().x(), by0 = bb.min_corner().y();
  const double bx1 = bb.max_corner().x(), by1 = bb.max_corner().y();
  const std::vector<Point> rect = {{bx0, by0}, {bx1, by0}, {bx1, by1}, {bx0, by1}};
  const double rect_area = (bx1 - bx0) * (by1 - by0);
  const bool bound_is_rect = bound.shape.size() == 1 && bound.shape[0].inners().empty() &&
                             std::abs(bound.area - rect_area) <= 1e-12 * rect_area;

  VoronoiPartition part;
  part.bound_area = bound.area;
  part.cells.resize(towers.size());
  SiteGrid grid(sites);

  for (std::size_t i = 0; i < sites.size(); ++i) {
    const Point s = sites[i];
    std::vector<Point> cell = rect;
    auto [cx, cy] = grid.bucket_of(s);
    for (int r = 0; r <= grid.max_ring() && !cell.empty(); ++r) {
      grid.for_ring(cx, cy, r, [&](std::size_t j) {
        if (j == i || cell.empty()) return;
        const Point& q = sites[j];
        const double a = q.x() - s.x(), b = q.y() - s.y();
        const double mx = 0.5 * (q.x() + s.x()), my = 0.5 * (q.y() + s.y());
        cell = clip_halfplane(cell, a, b, a * mx + b * my);
      });
      double reach = 0.0;
      for (const auto& v : cell) reach = std::max(reach, std::hypot(v.x() - s.x(), v.y() - s.y()));
      // Sites in ring r+1 are at least r bucket widths away; a site farther
      // than twice the cell's reach cannot cut it.
      if (static_cast<double>(r) * grid.bucket_size() > 2.0 * reach) break;
    }

    VoronoiCell& out = part.cells[i];
    out.tower_id = towers[i].tower_id;
    out.site = s;
    if (cell.empty()) continue;
    Polygon poly;
    for (const auto& v : cell) poly.outer().push_back(v);
    poly.outer().push_back(cell.front());
    if (bound_is_rect) {
      out.area = std::abs(ring_area(cell));
      out.shape.push_back(std::move(poly));
    } else {
      out.area = 0.0;
      for (const auto& bp : bound.shape) out.area += overlap_with_convex(bp, cell);
      try {
        bg::intersection(poly, bound.shape, out.shape);
      } catch (const std::exception& e) {
        throw Error(ErrorCode::InvalidGeometry, std::string("voronoi clipping failed: ") + e.what());
      }
    }
  }
  for (std::size_t i = 0; i < part.cells.size(); ++i) part.index_[part.cells[i].tower_id] = i;
  return part;
}

double intersection_area(const MultiPolygon& a, const MultiPolygon& b) {
  validate(a, "first");
  validate(b, "second");
  return multipolygon_overlap(a, b);
}

double intersection_area(const ZonePolygon& a, const ZonePolygon& b) {
  if (!bg::intersects(a.bbox, b.bbox)) return 0.0;
  return multipolygon_overlap(a.shape, b.shape);
}

// ---------------------------------------------------------------------------

namespace {

struct ZoneRef {
  const std::string* id;
  const MultiPolygon* shape;
  Box bbox;
  double area;
};

ArealWeights assemble(const std::vector<ZonePolygon>& districts, const std::vector<ZoneRef>& zones) {
  ArealWeights w;
  const auto nd = static_cast<Eigen::Index>(districts.size());
  const auto nz = static_cast<Eigen::Index>(zones.size());
  w.district_area.resize(nd);
  w.covered_area.setZero(nd);
  std::vector<Eigen::Triplet<double>> triplets;
  for (Eigen::Index d = 0; d < nd; ++d) {
    const auto& dist = districts[static_cast<std::size_t>(d)];
    w.district_ids.push_back(dist.zone_id);
    w.district_area(d) = dist.area;
    for (Eigen::Index z = 0; z < nz; ++z) {
      const auto& zone = zones[static_cast<std::size_t>(z)];
      if (!(zone.area > 0.0) || !bg::intersects(dist.bbox, zone.bbox)) continue;
      const double a = multipolygon_overlap(dist.shape, *zone.shape);
      if (a <= 0.0) continue;
      w.covered_area(d) += a;
      triplets.emplace_back(d, z, std::min(a / zone.area, 1.0));
    }
  }
  for (const auto& z : zones) w.zone_ids.push_back(*z.id);
  w.weights.resize(nd, nz);
  w.weights.setFromTriplets(triplets.begin(), triplets.end());
  return w;
}

}  // namespace

ArealWeights areal_weights(const std::vector<ZonePolygon>& districts,
                           const std::vector<ZonePolygon>& zones) {
  std::vector<ZoneRef> refs;
  refs.reserve(zones.size());
  for (const auto& z : zones) refs.push_back({&z.zone_id, &z.shape, z.bbox, z.area});
  return assemble(districts, refs);
}

ArealWeights areal_weights(const std::vector<ZonePolygon>& districts,
                           const VoronoiPartition& partition) {
  std::vector<ZoneRef> refs;
  refs.reserve(partition.cells.size());
  for (const auto& c : partition.cells) {
    Box bb = c.shape.empty() ? Box(c.site, c.site) : bg::return_envelope<Box>(c.shape);
    refs.push_back({&c.tower_id, &c.shape, bb, c.area});
  }
  return assemble(districts, refs);
}

PopulationEstimate interpolate_population(const ArealWeights& w, const Eigen::VectorXd& zone_population) {
  if (zone_population.size() != w.weights.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "zone population vector does not match weights");
  }
  const Eigen::VectorXd p = w.weights * zone_population;
  PopulationEstimate est;
  for (Eigen::Index d = 0; d < p.size(); ++d) {
    const auto& id = w.district_ids[static_cast<std::size_t>(d)];
    est.population[id] = p(d);
    const double cov = w.covered_area(d) / w.district_area(d);
    est.coverage[id] = cov;
    if (cov < 1.0 - 1e-6) est.partially_covered.push_back(id);
  }
  return est;
}

PopulationEstimate interpolate_population(const std::vector<ZonePolygon>& districts,
                                          const std::vector<ZonePolygon>& tazs) {
  Eigen::VectorXd pop(static_cast<Eigen::Index>(tazs.size()));
  for (std::size_t j = 0; j < tazs.size(); ++j) {
    const auto v = tazs[j].attribute("population");
    if (!v) throw Error(ErrorCode::MissingAttribute, "TAZ '" + tazs[j].zone_id + "' lacks population");
    pop(static_cast<Eigen::Index>(j)) = *v;
  }
  return interpolate_population(areal_weights(districts, tazs), pop);
}

PenetrationResult penetration_rate(const std::vector<ZonePolygon>& districts,
                                   const VoronoiPartition& partition,
                                   const std::map<std::string, double>& homes,
                                   const std::map<std::string, double>& populations) {
  const ArealWeights w = areal_weights(districts, partition);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(partition.cells.size()));
  for (std::size_t j = 0; j < partition.cells.size(); ++j) {
    auto it = homes.find(partition.cells[j].tower_id);
    if (it != homes.end()) t(static_cast<Eigen::Index>(j)) = it->second;
  }
  const Eigen::VectorXd weighted = w.weights * t;
  PenetrationResult res;
  for (std::size_t d = 0; d < districts.size(); ++d) {
    const auto& id = districts[d].zone_id;
    res.weighted_homes[id] = weighted(static_cast<Eigen::Index>(d));
    auto it = populations.find(id);
    if (it == populations.end() || !(it->second > 0.0)) {
      res.zero_population.push_back(id);
      continue;
    }
    res.rate[id] = weighted(static_cast<Eigen::Index>(d)) / it->second;
  }
  return res;
}

double avg_spatial_resolution_km(const std::vector<ZonePolygon>& zones) {
  if (zones.empty()) throw Error(ErrorCode::EmptyZoneList, "no zones given");
  double total = 0.0;
  for (const auto& z : zones) total += z.area;
  return std::sqrt(total / static_cast<double>(zones.size())) / 1000.0;
}

std::optional<std::string> locate_district(const Point& p, const std::vector<ZonePolygon>& districts) {
  const std::string* best = nullptr;
  for (const auto& d : districts) {
    if (best && d.zone_id >= *best) continue;
    if (!bg::covered_by(p, d.bbox)) continue;
    if (bg::covered_by(p, d.shape)) best = &d.zone_id;
  }
  if (!best) return std::nullopt;
  return *best;
}

std::string voronoi_geojson(const VoronoiPartition& partition, const Projection& proj) {
  using nlohmann::json;
  json features = json::array();
  for (const auto& c : partition.cells) {
    json polys = json::array();
    for (const auto& poly : c.shape) {
      json rings = json::array();
      auto ring_json = [&](const Polygon::ring_type& ring) {
        json r = json::array();
        for (const auto& p : ring) {
          auto [lon, lat] = proj.inverse(p.x(), p.y());
          r.push_back({lon, lat});
        }
        return r;
      };
      rings.push_back(ring_json(poly.outer()));
      for (const auto& h : poly.inners()) rings.push_back(ring_json(h));
      polys.push_back(std::move(rings));
    }
    json f;
    f["type"] = "Feature";
    f["properties"] = {{"tower_id", c.tower_id}, {"area_m2", c.area}};
    f["geometry"] = {{"type", "MultiPolygon"}, {"coordinates", std::move(polys)}};
    features.push_back(std::move(f));
  }
  json doc = {{"type", "FeatureCollection"}, {"features", std::move(features)}};
  return doc.dump();
}

std::string weights_csv(const ArealWeights& w) {
  std::ostringstream out;
  out << "district_id,zone_id,weight\n";
  for (Eigen::Index d = 0; d < w.weights.outerSize(); ++d) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(w.weights, d); it; ++it) {
      out << csv::escape(w.district_ids[static_cast<std::size_t>(d)]) << ','
          << csv::escape(w.zone_ids[static_cast<std::size_t>(it.col())]) << ','
          << csv::format_double(it.value()) << '\n';
    }
  }
  return out.str();
}

}  // namespace cdrsig::geo
