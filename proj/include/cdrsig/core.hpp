// Shared domain model: records, towers, zones, ego networks and indicator
// containers used by every pipeline stage.
#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/box.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

namespace cdrsig {

enum class ErrorCode {
  Io,
  FatalSchema,
  Quarantine,
  DuplicateTowerId,
  CoordinateOutOfRange,
  MissingAttribute,
  InvalidGeometry,
  DuplicateTowerLocation,
  EmptyBound,
  EmptyZoneList,
  MissingDirectionField,
  Spill,
  EmptyInput,
  InsufficientData,
  NonPositiveValue,
  SingularDesign,
  IllConditionedKernel,
  DimensionMismatch,
  Config,
  Internal,
};

std::string_view to_string(ErrorCode code);

// Input and configuration problems map to CLI exit code 2, everything else
// to 1.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// ---------------------------------------------------------------------------
// Records

enum class ActivityType { call, data, sms, other };
enum class Direction { outgoing, incoming };

std::optional<ActivityType> parse_activity_type(std::string_view s);
std::string_view to_string(ActivityType t);
std::optional<Direction> parse_direction(std::string_view s);
std::string_view to_string(Direction d);

using Timestamp = std::chrono::sys_seconds;

struct CdrRecord {
  std::string user_id;
  ActivityType activity_type = ActivityType::other;
  std::string tower_id;
  std::int64_t duration_s = 0;
  Timestamp timestamp{};
  // Optional interaction fields; empty / nullopt when the source has none.
  std::string counterpart_id;
  std::optional<Direction> direction;

  bool is_interaction() const {
    return (activity_type == ActivityType::call || activity_type == ActivityType::sms) &&
           !counterpart_id.empty() && direction.has_value();
  }

  bool operator==(const CdrRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Geometry

namespace bg = boost::geometry;
using Point = bg::model::d2::point_xy<double>;
using Polygon = bg::model::polygon<Point, false, true>;  // counter-clockwise, closed
using MultiPolygon = bg::model::multi_polygon<Polygon>;
using Box = bg::model::box<Point>;

struct Tower {
  std::string tower_id;
  double lon = 0.0;
  double lat = 0.0;
  // Planar coordinates in meters, filled by TowerSet::project.
  double x = 0.0;
  double y = 0.0;
};

// Local planar projection used for every area and distance computation.
// Equirectangular is affine in (lon, lat), so axis-aligned lon/lat grids stay
// axis-aligned rectangles in meters.
class Projection {
 public:
  enum class Kind { identity, equirectangular };

  static Projection identity() { return Projection(Kind::identity, 0.0, 0.0); }
  static Projection equirectangular(double origin_lon, double origin_lat) {
    return Projection(Kind::equirectangular, origin_lon, origin_lat);
  }

  Kind kind() const { return kind_; }
  double origin_lon() const { return lon0_; }
  double origin_lat() const { return lat0_; }

  Point forward(double lon, double lat) const;
  std::pair<double, double> inverse(double x, double y) const;  // (lon, lat)

 private:
  Projection(Kind kind, double lon0, double lat0);
  Kind kind_;
  double lon0_;
  double lat0_;
  double meters_per_deg_x_ = 1.0;
  double meters_per_deg_y_ = 1.0;
};

class TowerSet {
 public:
  TowerSet() = default;
  explicit TowerSet(std::vector<Tower> towers);

  std::size_t size() const { return towers_.size(); }
  bool empty() const { return towers_.empty(); }
  const std::vector<Tower>& towers() const { return towers_; }
  const Tower* find(std::string_view id) const;
  bool contains(std::string_view id) const { return find(id) != nullptr; }
  void project(const Projection& proj);

  auto begin() const { return towers_.begin(); }
  auto end() const { return towers_.end(); }

 private:
  std::vector<Tower> towers_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class ZoneKind { taz, district };

struct ZonePolygon {
  std::string zone_id;
  ZoneKind kind = ZoneKind::district;
  MultiPolygon shape;
  std::map<std::string, double> attributes;
  double area = 0.0;  // m²
  Box bbox;

  std::optional<double> attribute(const std::string& key) const {
    auto it = attributes.find(key);
    if (it == attributes.end()) return std::nullopt;
    return it->second;
  }
};

// Builds a zone from planar rings, computing area and bbox and validating.
ZonePolygon make_zone(std::string id, ZoneKind kind, MultiPolygon shape,
                      std::map<std::string, double> attributes = {});
ZonePolygon make_rectangle_zone(std::string id, ZoneKind kind, double x0, double y0,
                                double x1, double y1,
                                std::map<std::string, double> attributes = {});

// ---------------------------------------------------------------------------
// Ego network

struct ContactVolume {
  std::int64_t out = 0;  // ego -> contact
  std::int64_t in = 0;   // contact -> ego
  std::int64_t total() const { return out + in; }
};

struct EgoNetwork {
  std::string ego;
  std::map<std::string, ContactVolume> contacts;  // ordered for determinism

  std::size_t k() const { return contacts.size(); }
  std::size_t incoming_count() const;  // |I(i)|
  std::size_t outgoing_count() const;  // |O(i)|
  EgoNetwork reversed() const;
};

// ---------------------------------------------------------------------------
// Indicators

enum class Indicator {
  n_records,
  pct_night_calls,
  mean_call_duration_s,
  pct_initiated,
  balance_of_contacts,
  social_entropy,
  interactions_per_contact,
  pct_at_home,
  visited_locations,
};

inline constexpr std::size_t kIndicatorCount = 9;
inline constexpr std::array<Indicator, kIndicatorCount> kAllIndicators = {
    Indicator::n_records,          Indicator::pct_night_calls,
    Indicator::mean_call_duration_s, Indicator::pct_initiated,
    Indicator::balance_of_contacts, Indicator::social_entropy,
    Indicator::interactions_per_contact, Indicator::pct_at_home,
    Indicator::visited_locations};

enum class IndicatorCategory { activity, social, spatial };

std::string_view to_string(Indicator ind);
std::optional<Indicator> parse_indicator(std::string_view s);
IndicatorCategory category_of(Indicator ind);
std::string_view to_string(IndicatorCategory c);
inline std::size_t index_of(Indicator ind) { return static_cast<std::size_t>(ind); }

struct UserIndicators {
  std::int64_t n_records = 0;
  std::optional<double> pct_night_calls;
  std::optional<double> mean_call_duration_s;
  std::optional<double> pct_initiated;
  std::optional<double> balance_of_contacts;
  std::optional<double> social_entropy;
  std::optional<double> interactions_per_contact;
  std::optional<double> pct_at_home;
  std::int64_t visited_locations = 0;
  std::optional<std::string> home_tower;

  std::optional<double> value(Indicator ind) const;
  bool operator==(const UserIndicators&) const = default;
};

using IndicatorArray = std::array<std::optional<double>, kIndicatorCount>;

struct DistrictVector {
  std::string district_id;
  std::int64_t user_count = 0;
  IndicatorArray mean{};
  IndicatorArray z{};
  double population = 0.0;   // persons
  double area_m2 = 0.0;
  std::optional<double> penetration;
  std::optional<double> unemployment_rate;
};

}  // namespace cdrsig
