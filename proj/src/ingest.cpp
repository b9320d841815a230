#include "cdrsig/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cdrsig {

using nlohmann::json;

std::string_view to_string(QuarantineReason r) {
  switch (r) {
    case QuarantineReason::MalformedRow: return "MalformedRow";
    case QuarantineReason::MalformedTimestamp: return "MalformedTimestamp";
    case QuarantineReason::NegativeDuration: return "NegativeDuration";
    case QuarantineReason::UnknownActivityType: return "UnknownActivityType";
    case QuarantineReason::InvalidDirection: return "InvalidDirection";
    case QuarantineReason::UnknownTower: return "UnknownTower";
    case QuarantineReason::OutsideWindow: return "OutsideWindow";
  }
  return "";
}

std::variant<CdrRecord, ValidationError> validate_record(const RawCdrFields& raw,
                                                        std::int64_t row,
                                                        const ValidationContext& ctx) {
  auto fail = [row](QuarantineReason r, std::string detail) {
    return ValidationError{r, row, std::move(detail)};
  };
  if (raw.user_id.empty() || raw.tower_id.empty()) {
    return fail(QuarantineReason::MalformedRow, "empty user_id or tower_id");
  }
  const auto type = parse_activity_type(raw.activity_type);
  if (!type) return fail(QuarantineReason::UnknownActivityType, std::string(raw.activity_type));

  std::int64_t duration = 0;
  if (!raw.duration_s.empty()) {
    const auto d = csv::parse_int(raw.duration_s);
    if (!d) return fail(QuarantineReason::MalformedRow, "duration '" + std::string(raw.duration_s) + "'");
    duration = *d;
  }
  if (duration < 0) return fail(QuarantineReason::NegativeDuration, std::string(raw.duration_s));

  static const TimeZone utc = TimeZone::fixed("UTC", 0);
  const auto ts = parse_timestamp(raw.timestamp, ctx.zone ? *ctx.zone : utc, ctx.timestamp_format);
  if (!ts) return fail(QuarantineReason::MalformedTimestamp, std::string(raw.timestamp));
  if (!ctx.window.contains(*ts)) return fail(QuarantineReason::OutsideWindow, std::string(raw.timestamp));

  std::optional<Direction> dir;
  if (!raw.direction.empty()) {
    dir = parse_direction(raw.direction);
    if (!dir) return fail(QuarantineReason::InvalidDirection, std::string(raw.direction));
  }
  if (ctx.towers && !ctx.towers->contains(raw.tower_id)) {
    return fail(QuarantineReason::UnknownTower, std::string(raw.tower_id));
  }

  CdrRecord rec;
  rec.user_id = std::string(raw.user_id);
  rec.activity_type = *type;
  rec.tower_id = std::string(raw.tower_id);
  rec.duration_s = duration;
  rec.timestamp = *ts;
  rec.counterpart_id = std::string(raw.counterpart_id);
  rec.direction = dir;
  return rec;
}

std::string serialize_record(const CdrRecord& r, const TimeZone& zone) {
  std::string out;
  out.reserve(96);
  out += csv::escape(r.user_id);
  out += ',';
  out += to_string(r.activity_type);
  out += ',';
  out += csv::escape(r.tower_id);
  out += ',';
  out += std::to_string(r.duration_s);
  out += ',';
  out += format_iso8601(r.timestamp, zone);
  out += ',';
  out += csv::escape(r.counterpart_id);
  out += ',';
  if (r.direction) out += to_string(*r.direction);
  return out;
}

// ---------------------------------------------------------------------------

std::int64_t IngestReport::quarantined_total() const {
  std::int64_t n = 0;
  for (auto q : quarantined) n += q;
  return n;
}

std::string IngestReport::to_json() const {
  static const TimeZone utc = TimeZone::fixed("UTC", 0);
  json j;
  j["rows_read"] = rows_read;
  j["rows_ok"] = rows_ok;
  json q = json::object();
  for (std::size_t i = 0; i < kQuarantineReasonCount; ++i) {
    q[std::string(to_string(static_cast<QuarantineReason>(i)))] = quarantined[i];
  }
  j["rows_quarantined"] = q;
  j["distinct_users"] = distinct_users;
  j["distinct_towers"] = distinct_towers;
  j["first_timestamp"] = first_timestamp ? json(format_iso8601(*first_timestamp, utc)) : json();
  j["last_timestamp"] = last_timestamp ? json(format_iso8601(*last_timestamp, utc)) : json();
  j["has_direction"] = has_direction;
  return j.dump(2);
}

CdrReader::CdrReader(const std::filesystem::path& path, CdrReadOptions options)
    : lines_(path), options_(std::move(options)) {
  if (!lines_.next(line_)) {
    throw Error(ErrorCode::FatalSchema, path.string() + ": missing header row");
  }
  csv::split(line_, fields_, scratch_);
  std::vector<std::string> header(fields_.begin(), fields_.end());
  column_count_ = header.size();
  const auto& s = options_.schema;
  const std::array<const std::string*, 7> names = {&s.user_id,  &s.activity_type,  &s.tower_id,
                                                   &s.duration_s, &s.timestamp, &s.counterpart_id,
                                                   &s.direction};
  std::string missing;
  for (std::size_t i = 0; i < names.size(); ++i) {
    columns_[i] = csv::column_index(header, *names[i]);
    if (i < 5 && !columns_[i]) missing += (missing.empty() ? "" : ", ") + *names[i];
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::FatalSchema, path.string() + ": header lacks required column(s): " + missing);
  }
  report_.has_direction = columns_[5].has_value() && columns_[6].has_value();
}

CdrReader::~CdrReader() = default;

bool CdrReader::next(CdrRecord& out) {
  if (done_) return false;
  ValidationContext ctx{options_.zone, options_.schema.timestamp_format, options_.window,
                        options_.towers};
  while (lines_.next(line_)) {
    if (line_.empty()) continue;
    ++report_.rows_read;
    const std::int64_t row = lines_.line_number();
    csv::split(line_, fields_, scratch_);

    std::variant<CdrRecord, ValidationError> result;
    if (fields_.size() != column_count_) {
      result = ValidationError{QuarantineReason::MalformedRow, row,
                               "expected " + std::to_string(column_count_) + " fields"};
    } else {
      auto field = [&](std::size_t i) -> std::string_view {
        return columns_[i] ? fields_[*columns_[i]] : std::string_view{};
      };
      RawCdrFields raw{field(0), field(1), field(2), field(3), field(4), field(5), field(6)};
      result = validate_record(raw, row, ctx);
    }

    if (auto* err = std::get_if<ValidationError>(&result)) {
      ++report_.quarantined[static_cast<std::size_t>(err->reason)];
      if (options_.strict) {
        throw Error(ErrorCode::Quarantine, "row " + std::to_string(row) + ": " +
                                               std::string(to_string(err->reason)) + " (" +
                                               err->detail + ")");
      }
      if (log_.size() < 1000) log_.push_back(std::move(*err));
      continue;
    }
    out = std::move(std::get<CdrRecord>(result));
    ++report_.rows_ok;
    users_.insert(out.user_id);
    towers_.insert(out.tower_id);
    if (!report_.first_timestamp || out.timestamp < *report_.first_timestamp) {
      report_.first_timestamp = out.timestamp;
    }
    if (!report_.last_timestamp || out.timestamp > *report_.last_timestamp) {
      report_.last_timestamp = out.timestamp;
    }
    finalize_report();
    return true;
  }
  done_ = true;
  finalize_report();
  return false;
}

void CdrReader::finalize_report() {
  report_.distinct_users = static_cast<std::int64_t>(users_.size());
  report_.distinct_towers = static_cast<std::int64_t>(towers_.size());
}

IngestReport read_cdr_stream(const std::filesystem::path& path, const CdrReadOptions& options,
                             const std::function<void(CdrRecord&&)>& sink) {
  CdrReader reader(path, options);
  CdrRecord rec;
  while (reader.next(rec)) sink(std::move(rec));
  return reader.report();
}

// ---------------------------------------------------------------------------

TowerSet read_towers(const std::filesystem::path& path) {
  csv::LineReader lines(path);
  std::string line, scratch;
  std::vector<std::string_view> fields;
  if (!lines.next(line)) throw Error(ErrorCode::FatalSchema, path.string() + ": missing header row");
  csv::split(line, fields, scratch);
  const std::vector<std::string> header(fields.begin(), fields.end());
  const auto ci = csv::column_index(header, "tower_id");
  const auto cx = csv::column_index(header, "lon");
  const auto cy = csv::column_index(header, "lat");
  if (!ci || !cx || !cy) {
    throw Error(ErrorCode::FatalSchema, path.string() + ": header must contain tower_id,lon,lat");
  }
  std::vector<Tower> towers;
  while (lines.next(line)) {
    if (line.empty()) continue;
    csv::split(line, fields, scratch);
    const std::string where = path.string() + " row " + std::to_string(lines.line_number());
    if (fields.size() != header.size()) throw Error(ErrorCode::FatalSchema, where + ": wrong field count");
    const auto lon = csv::parse_double(fields[*cx]);
    const auto lat = csv::parse_double(fields[*cy]);
    if (!lon || !lat) throw Error(ErrorCode::FatalSchema, where + ": non-numeric coordinate");
    if (!(*lon >= -180.0 && *lon <= 180.0) || !(*lat >= -90.0 && *lat <= 90.0)) {
      throw Error(ErrorCode::CoordinateOutOfRange, where + ": coordinate out of range");
    }
    towers.push_back(Tower{std::string(fields[*ci]), *lon, *lat, 0.0, 0.0});
  }
  return TowerSet(std::move(towers));
}

// ---------------------------------------------------------------------------

namespace {

Polygon::ring_type parse_ring(const json& coords, const Projection& proj, const std::string& where) {
  if (!coords.is_array() || coords.size() < 4) {
    throw Error(ErrorCode::InvalidGeometry, where + ": ring needs at least 4 positions");
  }
  Polygon::ring_type ring;
  ring.reserve(coords.size());
  for (const auto& pos : coords) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      throw Error(ErrorCode::InvalidGeometry, where + ": bad position");
    }
    ring.push_back(proj.forward(pos[0].get<double>(), pos[1].get<double>()));
  }
  return ring;
}

Polygon parse_polygon(const json& rings, const Projection& proj, const std::string& where) {
  if (!rings.is_array() || rings.empty()) throw Error(ErrorCode::InvalidGeometry, where + ": empty polygon");
  Polygon poly;
  poly.outer() = parse_ring(rings[0], proj, where);
  for (std::size_t i = 1; i < rings.size(); ++i) poly.inners().push_back(parse_ring(rings[i], proj, where));
  return poly;
}

}  // namespace

std::vector<ZonePolygon> parse_zones(std::string_view geojson, ZoneKind kind,
                                     const Projection& proj, const std::string& source) {
  json doc;
  try {
    doc = json::parse(geojson);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FatalSchema, source + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw Error(ErrorCode::FatalSchema, source + ": expected a GeoJSON FeatureCollection");
  }

  std::vector<ZonePolygon> zones;
  std::size_t index = 0;
  for (const auto& f : doc["features"]) {
    const std::string where = source + " feature " + std::to_string(index);
    const json props = f.contains("properties") && f["properties"].is_object() ? f["properties"] : json::object();

    std::string id;
    if (props.contains("zone_id")) {
      const auto& v = props["zone_id"];
      id = v.is_string() ? v.get<std::string>() : v.dump();
    } else if (kind == ZoneKind::district) {
      throw Error(ErrorCode::MissingAttribute, where + ": district without zone_id");
    } else if (f.contains("id")) {
      id = f["id"].is_string() ? f["id"].get<std::string>() : f["id"].dump();
    } else {
      id = "taz-" + std::to_string(index);
    }

    std::map<std::string, double> attrs;
    for (const auto& [key, value] : props.items()) {
      if (value.is_number()) attrs[key] = value.get<double>();
    }
    if (kind == ZoneKind::taz) {
      auto it = attrs.find("population");
      if (it == attrs.end()) throw Error(ErrorCode::MissingAttribute, where + " ('" + id + "'): missing population");
      if (!(it->second >= 0.0)) throw Error(ErrorCode::MissingAttribute, where + ": negative population");
    }

    if (!f.contains("geometry") || !f["geometry"].is_object()) {
      throw Error(ErrorCode::InvalidGeometry, where + ": missing geometry");
    }
    const auto& geom = f["geometry"];
    const std::string type = geom.value("type", "");
    MultiPolygon shape;
    if (type == "Polygon") {
      shape.push_back(parse_polygon(geom["coordinates"], proj, where));
    } else if (type == "MultiPolygon") {
      for (const auto& p : geom["coordinates"]) shape.push_back(parse_polygon(p, proj, where));
    } else {
      throw Error(ErrorCode::InvalidGeometry, where + ": unsupported geometry type '" + type + "'");
    }
    try {
      zones.push_back(make_zone(id, kind, std::move(shape), std::move(attrs)));
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    }
    ++index;
  }
  return zones;
}

std::vector<ZonePolygon> read_zones(const std::filesystem::path& path, ZoneKind kind,
                                    const Projection& proj) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_zones(ss.str(), kind, proj, path.string());
}

std::map<std::string, double> read_labels(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "labels file not found: '" + path.string() + "'");
  csv::LineReader lines(path);
  std::string line, scratch;
  std::vector<std::string_view> fields;
  if (!lines.next(line)) throw Error(ErrorCode::FatalSchema, path.string() + ": missing header row");
  csv::split(line, fields, scratch);
  const std::vector<std::string> header(fields.begin(), fields.end());
  const auto cid = csv::column_index(header, "district_id");
  const auto cu = csv::column_index(header, "unemployment_rate");
  if (!cid || !cu) {
    throw Error(ErrorCode::FatalSchema, path.string() + ": header must contain district_id,unemployment_rate");
  }
  std::map<std::string, double> labels;
  while (lines.next(line)) {
    if (line.empty()) continue;
    csv::split(line, fields, scratch);
    const std::string where = path.string() + " row " + std::to_string(lines.line_number());
    if (fields.size() != header.size()) throw Error(ErrorCode::FatalSchema, where + ": wrong field count");
    const auto u = csv::parse_double(fields[*cu]);
    if (!u || !(*u >= 0.0 && *u <= 1.0)) throw Error(ErrorCode::FatalSchema, where + ": rate must be in [0,1]");
    if (!labels.emplace(std::string(fields[*cid]), *u).second) {
      throw Error(ErrorCode::FatalSchema, where + ": duplicate district_id");
    }
  }
  return labels;
}

}  // namespace cdrsig
