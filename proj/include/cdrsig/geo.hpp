// Planar computational geometry for tower coverage and areal interpolation.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "cdrsig/core.hpp"

namespace cdrsig::geo {

struct VoronoiCell {
  std::string tower_id;
  Point site;
  MultiPolygon shape;  // empty when the site's region misses the bound
  double area = 0.0;
};

struct VoronoiPartition {
  std::vector<VoronoiCell> cells;  // same order as the input towers
  double bound_area = 0.0;

  const VoronoiCell* find(const std::string& tower_id) const;
  double total_area() const;

 private:
  friend VoronoiPartition build_voronoi(const std::vector<Tower>&, const ZonePolygon&);
  std::map<std::string, std::size_t> index_;
};

// Result of collapsing towers closer than `min_separation_m`.
struct TowerMerge {
  std::vector<Tower> representatives;          // sorted by tower_id
  std::map<std::string, std::string> alias;    // every input id -> representative id
};

// Towers with identical planar coordinates raise DuplicateTowerLocation;
// towers closer than `min_separation_m` are merged into the lexicographically
// smallest id of their cluster.
TowerMerge merge_near_duplicate_towers(const TowerSet& towers, double min_separation_m = 1.0);

// Half-plane intersection per site, clipped to `bound`. Requires at least one
// site inside the bound and pairwise distinct sites.
VoronoiPartition build_voronoi(const std::vector<Tower>& towers, const ZonePolygon& bound);

// Area of the overlap of two polygonal regions (m²). Inputs are validated.
double intersection_area(const MultiPolygon& a, const MultiPolygon& b);
double intersection_area(const ZonePolygon& a, const ZonePolygon& b);

// Sparse W[d][z] = A(d ∩ z) / A(z) over districts (rows) and zones (columns).
struct ArealWeights {
  std::vector<std::string> district_ids;
  std::vector<std::string> zone_ids;
  Eigen::SparseMatrix<double, Eigen::RowMajor> weights;
  Eigen::VectorXd district_area;  // A(d)
  Eigen::VectorXd covered_area;   // Σ_z A(d ∩ z)
};

ArealWeights areal_weights(const std::vector<ZonePolygon>& districts,
                           const std::vector<ZonePolygon>& zones);
ArealWeights areal_weights(const std::vector<ZonePolygon>& districts,
                           const VoronoiPartition& partition);

struct PopulationEstimate {
  std::map<std::string, double> population;
  std::map<std::string, double> coverage;       // covered fraction of each district
  std::vector<std::string> partially_covered;   // coverage < 1 - 1e-6
};

// P_d = Σ_j A(d ∩ τ_j) P_τj / A(τ_j), reading the "population" attribute.
PopulationEstimate interpolate_population(const std::vector<ZonePolygon>& districts,
                                          const std::vector<ZonePolygon>& tazs);
PopulationEstimate interpolate_population(const ArealWeights& w, const Eigen::VectorXd& zone_population);

struct PenetrationResult {
  std::map<std::string, double> rate;
  std::map<std::string, double> weighted_homes;   // Σ_j A(d ∩ v_j) T_j / A(v_j)
  std::vector<std::string> zero_population;       // σ undefined, excluded downstream
};

// σ_d = (1/P_d) Σ_j A(d ∩ v_j) T_cj / A(v_j). Towers absent from `homes`
// contribute zero.
PenetrationResult penetration_rate(const std::vector<ZonePolygon>& districts,
                                   const VoronoiPartition& partition,
                                   const std::map<std::string, double>& homes,
                                   const std::map<std::string, double>& populations);

// sqrt(total area / number of zones), in km.
double avg_spatial_resolution_km(const std::vector<ZonePolygon>& zones);

// District whose closed region contains `p`; on shared boundaries the
// smallest district_id wins.
std::optional<std::string> locate_district(const Point& p, const std::vector<ZonePolygon>& districts);

// Diagnostics.
std::string voronoi_geojson(const VoronoiPartition& partition, const Projection& proj);
std::string weights_csv(const ArealWeights& w);

// Low-level convex clipping (exposed for tests). `clip` must be a convex
// counter-clockwise open ring; returns the clipped open ring of `subject`.
std::vector<Point> clip_to_convex(const std::vector<Point>& subject, const std::vector<Point>& clip);
double ring_area(const std::vector<Point>& ring);  // signed shoelace, open ring

}  // namespace cdrsig::geo
