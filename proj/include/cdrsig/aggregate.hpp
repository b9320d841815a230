// District assignment, aggregation, standardization and district-level
// descriptive statistics.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdrsig/core.hpp"
#include "cdrsig/geo.hpp"
#include "cdrsig/stats.hpp"

namespace cdrsig {

// District containing the home tower's site; nullopt when the tower is
// unknown or outside every district. Shared boundaries resolve to the
// smallest district_id.
std::optional<std::string> assign_home_district(const std::string& home_tower, const TowerSet& towers,
                                                const std::vector<ZonePolygon>& districts);

// Unweighted per-indicator means over users with a defined value. Output is
// sorted by district_id; districts without users are not emitted.
std::vector<DistrictVector> aggregate_district(
    const std::vector<std::pair<std::string, UserIndicators>>& users);

struct StandardizeReport {
  std::vector<Indicator> zero_variance;  // flagged columns (z filled with 0)
};

// Fills DistrictVector::z with column z-scores (sample std) over districts
// whose mean is defined.
StandardizeReport standardize(std::vector<DistrictVector>& vectors);

struct CorrelationResult {
  Indicator indicator;
  double r = 0.0;                    // Pearson r on raw district means
  double slope = 0.0;                // fit on standardized axes
  double intercept = 0.0;
  double slope_ci_half_width = 0.0;  // 95 %
  Eigen::Index n = 0;
};

// Pearson r and standardized linear fit of each indicator against the
// unemployment rate, pairwise over districts with both values. Requires the
// target on at least three districts.
std::vector<CorrelationResult> correlate(const std::vector<DistrictVector>& vectors);

// Design matrix helpers: rows are districts, columns the requested
// indicators' z-scores. Rows with any absent value are dropped and their
// indices omitted from `rows`.
struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<std::size_t> rows;  // indices into the input vectors
  std::vector<std::string> columns;
};
DesignMatrix indicator_design(const std::vector<DistrictVector>& vectors, const std::vector<Indicator>& indicators,
                              bool require_target = true);

std::vector<Indicator> indicators_in(IndicatorCategory c);

// districts.csv round trip.
std::string districts_csv(const std::vector<DistrictVector>& vectors);
std::vector<DistrictVector> parse_districts_csv(const std::string& text);

std::string correlations_csv(const std::vector<CorrelationResult>& results);

}  // namespace cdrsig
