#include "cdrsig/core.hpp"

#include <cmath>
#include <numbers>

namespace cdrsig {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "IoError";
    case ErrorCode::FatalSchema: return "FatalSchemaError";
    case ErrorCode::Quarantine: return "QuarantineError";
    case ErrorCode::DuplicateTowerId: return "DuplicateTowerId";
    case ErrorCode::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorCode::MissingAttribute: return "MissingAttribute";
    case ErrorCode::InvalidGeometry: return "InvalidGeometry";
    case ErrorCode::DuplicateTowerLocation: return "DuplicateTowerLocation";
    case ErrorCode::EmptyBound: return "EmptyBound";
    case ErrorCode::EmptyZoneList: return "EmptyZoneList";
    case ErrorCode::MissingDirectionField: return "MissingDirectionField";
    case ErrorCode::Spill: return "SpillError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::IllConditionedKernel: return "IllConditionedKernel";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Internal: return "InternalError";
  }
  return "UnknownError";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::FatalSchema:
    case ErrorCode::Quarantine:
    case ErrorCode::DuplicateTowerId:
    case ErrorCode::CoordinateOutOfRange:
    case ErrorCode::MissingAttribute:
    case ErrorCode::InvalidGeometry:
    case ErrorCode::DuplicateTowerLocation:
    case ErrorCode::EmptyBound:
    case ErrorCode::EmptyZoneList:
    case ErrorCode::MissingDirectionField:
    case ErrorCode::InsufficientData:
    case ErrorCode::NonPositiveValue:
    case ErrorCode::Config:
      return true;
    default:
      return false;
  }
}

std::optional<ActivityType> parse_activity_type(std::string_view s) {
  if (s == "call") return ActivityType::call;
  if (s == "data") return ActivityType::data;
  if (s == "sms") return ActivityType::sms;
  if (s == "other") return ActivityType::other;
  return std::nullopt;
}

std::string_view to_string(ActivityType t) {
  switch (t) {
    case ActivityType::call: return "call";
    case ActivityType::data: return "data";
    case ActivityType::sms: return "sms";
    case ActivityType::other: return "other";
  }
  return "other";
}

std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "out") return Direction::outgoing;
  if (s == "in") return Direction::incoming;
  return std::nullopt;
}

std::string_view to_string(Direction d) {
  return d == Direction::outgoing ? "out" : "in";
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kEarthRadius = 6371008.8;
}

Projection::Projection(Kind kind, double lon0, double lat0)
    : kind_(kind), lon0_(lon0), lat0_(lat0) {
  if (kind_ == Kind::equirectangular) {
    const double rad = std::numbers::pi / 180.0;
    meters_per_deg_y_ = kEarthRadius * rad;
    meters_per_deg_x_ = kEarthRadius * rad * std::cos(lat0 * rad);
  }
}

Point Projection::forward(double lon, double lat) const {
  if (kind_ == Kind::identity) return {lon, lat};
  return {(lon - lon0_) * meters_per_deg_x_, (lat - lat0_) * meters_per_deg_y_};
}

std::pair<double, double> Projection::inverse(double x, double y) const {
  if (kind_ == Kind::identity) return {x, y};
  return {lon0_ + x / meters_per_deg_x_, lat0_ + y / meters_per_deg_y_};
}

TowerSet::TowerSet(std::vector<Tower> towers) : towers_(std::move(towers)) {
  index_.reserve(towers_.size());
  for (std::size_t i = 0; i < towers_.size(); ++i) {
    if (!index_.emplace(towers_[i].tower_id, i).second) {
      throw Error(ErrorCode::DuplicateTowerId, "duplicate tower_id '" + towers_[i].tower_id + "'");
    }
  }
}

const Tower* TowerSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &towers_[it->second];
}

void TowerSet::project(const Projection& proj) {
  for (auto& t : towers_) {
    const Point p = proj.forward(t.lon, t.lat);
    t.x = p.x();
    t.y = p.y();
  }
}

ZonePolygon make_zone(std::string id, ZoneKind kind, MultiPolygon shape,
                      std::map<std::string, double> attributes) {
  bg::correct(shape);
  std::string reason;
  if (!bg::is_valid(shape, reason)) {
    throw Error(ErrorCode::InvalidGeometry, "zone '" + id + "': " + reason);
  }
  ZonePolygon z;
  z.zone_id = std::move(id);
  z.kind = kind;
  z.area = bg::area(shape);
  if (!(z.area > 0.0)) {
    throw Error(ErrorCode::InvalidGeometry, "zone '" + z.zone_id + "' has non-positive area");
  }
  z.bbox = bg::return_envelope<Box>(shape);
  z.shape = std::move(shape);
  z.attributes = std::move(attributes);
  return z;
}

ZonePolygon make_rectangle_zone(std::string id, ZoneKind kind, double x0, double y0,
                                double x1, double y1,
                                std::map<std::string, double> attributes) {
  Polygon poly;
  poly.outer() = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
  MultiPolygon mp;
  mp.push_back(std::move(poly));
  return make_zone(std::move(id), kind, std::move(mp), std::move(attributes));
}

// ---------------------------------------------------------------------------

std::size_t EgoNetwork::incoming_count() const {
  std::size_t n = 0;
  for (const auto& [id, v] : contacts) n += v.in > 0 ? 1 : 0;
  return n;
}

std::size_t EgoNetwork::outgoing_count() const {
  std::size_t n = 0;
  for (const auto& [id, v] : contacts) n += v.out > 0 ? 1 : 0;
  return n;
}

EgoNetwork EgoNetwork::reversed() const {
  EgoNetwork r{ego, {}};
  for (const auto& [id, v] : contacts) r.contacts.emplace(id, ContactVolume{v.in, v.out});
  return r;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Indicator ind) {
  switch (ind) {
    case Indicator::n_records: return "n_records";
    case Indicator::pct_night_calls: return "pct_night_calls";
    case Indicator::mean_call_duration_s: return "mean_call_duration_s";
    case Indicator::pct_initiated: return "pct_initiated";
    case Indicator::balance_of_contacts: return "balance_of_contacts";
    case Indicator::social_entropy: return "social_entropy";
    case Indicator::interactions_per_contact: return "interactions_per_contact";
    case Indicator::pct_at_home: return "pct_at_home";
    case Indicator::visited_locations: return "visited_locations";
  }
  return "";
}

std::optional<Indicator> parse_indicator(std::string_view s) {
  for (auto ind : kAllIndicators) {
    if (to_string(ind) == s) return ind;
  }
  return std::nullopt;
}

IndicatorCategory category_of(Indicator ind) {
  switch (ind) {
    case Indicator::n_records:
    case Indicator::pct_night_calls:
    case Indicator::mean_call_duration_s:
      return IndicatorCategory::activity;
    case Indicator::pct_initiated:
    case Indicator::balance_of_contacts:
    case Indicator::social_entropy:
    case Indicator::interactions_per_contact:
      return IndicatorCategory::social;
    case Indicator::pct_at_home:
    case Indicator::visited_locations:
      return IndicatorCategory::spatial;
  }
  return IndicatorCategory::activity;
}

std::string_view to_string(IndicatorCategory c) {
  switch (c) {
    case IndicatorCategory::activity: return "activity";
    case IndicatorCategory::social: return "social";
    case IndicatorCategory::spatial: return "spatial";
  }
  return "";
}

std::optional<double> UserIndicators::value(Indicator ind) const {
  switch (ind) {
    case Indicator::n_records: return static_cast<double>(n_records);
    case Indicator::pct_night_calls: return pct_night_calls;
    case Indicator::mean_call_duration_s: return mean_call_duration_s;
    case Indicator::pct_initiated: return pct_initiated;
    case Indicator::balance_of_contacts: return balance_of_contacts;
    case Indicator::social_entropy: return social_entropy;
    case Indicator::interactions_per_contact: return interactions_per_contact;
    case Indicator::pct_at_home: return pct_at_home;
    case Indicator::visited_locations: return static_cast<double>(visited_locations);
  }
  return std::nullopt;
}

}  // namespace cdrsig
