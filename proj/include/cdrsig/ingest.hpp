// Streaming readers for CDR, tower, zone and label files.
#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "cdrsig/core.hpp"
#include "cdrsig/csv.hpp"
#include "cdrsig/time.hpp"

namespace cdrsig {

enum class QuarantineReason {
  MalformedRow,
  MalformedTimestamp,
  NegativeDuration,
  UnknownActivityType,
  InvalidDirection,
  UnknownTower,
  OutsideWindow,
};
inline constexpr std::size_t kQuarantineReasonCount = 7;
std::string_view to_string(QuarantineReason r);

struct ValidationError {
  QuarantineReason reason;
  std::int64_t row = 0;
  std::string detail;
};

// Raw field views of one CDR row before typing. Interaction fields are empty
// when the file has no such columns.
struct RawCdrFields {
  std::string_view user_id;
  std::string_view activity_type;
  std::string_view tower_id;
  std::string_view duration_s;
  std::string_view timestamp;
  std::string_view counterpart_id;
  std::string_view direction;
};

struct CdrSchema {
  std::string user_id = "user_id";
  std::string activity_type = "activity_type";
  std::string tower_id = "tower_id";
  std::string duration_s = "duration_s";
  std::string timestamp = "timestamp";
  std::string counterpart_id = "counterpart_id";
  std::string direction = "direction";
  TimestampFormat timestamp_format = TimestampFormat::automatic;
};

struct ObservationWindow {
  std::optional<Timestamp> start;  // inclusive
  std::optional<Timestamp> end;    // exclusive
  bool contains(Timestamp t) const {
    return (!start || t >= *start) && (!end || t < *end);
  }
};

struct ValidationContext {
  const TimeZone* zone = nullptr;
  TimestampFormat timestamp_format = TimestampFormat::automatic;
  ObservationWindow window;
  const TowerSet* towers = nullptr;  // unknown towers quarantined when set
};

std::variant<CdrRecord, ValidationError> validate_record(const RawCdrFields& raw,
                                                        std::int64_t row,
                                                        const ValidationContext& ctx);

// One CSV row in the canonical cdr.csv column order (with interaction columns).
std::string serialize_record(const CdrRecord& r, const TimeZone& zone);
inline constexpr std::string_view kCdrHeader =
    "user_id,activity_type,tower_id,duration_s,timestamp,counterpart_id,direction";

struct IngestReport {
  std::int64_t rows_read = 0;
  std::int64_t rows_ok = 0;
  std::array<std::int64_t, kQuarantineReasonCount> quarantined{};
  std::int64_t distinct_users = 0;
  std::int64_t distinct_towers = 0;
  std::optional<Timestamp> first_timestamp;
  std::optional<Timestamp> last_timestamp;
  bool has_direction = false;

  std::int64_t quarantined_total() const;
  std::int64_t quarantined_count(QuarantineReason r) const {
    return quarantined[static_cast<std::size_t>(r)];
  }
  std::string to_json() const;
};

struct CdrReadOptions {
  CdrSchema schema;
  ObservationWindow window;
  const TimeZone* zone = nullptr;
  const TowerSet* towers = nullptr;
  bool strict = false;  // any quarantine becomes a fatal Error{Quarantine}
};

// Pull-style streaming reader. Memory is bounded by the distinct user/tower
// sets kept for the report.
class CdrReader {
 public:
  CdrReader(const std::filesystem::path& path, CdrReadOptions options);
  ~CdrReader();
  CdrReader(const CdrReader&) = delete;
  CdrReader& operator=(const CdrReader&) = delete;

  // Fills `out` with the next valid record; false at end of file.
  bool next(CdrRecord& out);
  const IngestReport& report() const { return report_; }
  // Quarantined rows seen so far (row number + reason), capped at 1000.
  const std::vector<ValidationError>& quarantine_log() const { return log_; }

 private:
  void finalize_report();

  csv::LineReader lines_;
  CdrReadOptions options_;
  std::array<std::optional<std::size_t>, 7> columns_{};
  std::size_t column_count_ = 0;
  IngestReport report_;
  std::vector<ValidationError> log_;
  std::unordered_set<std::string> users_;
  std::unordered_set<std::string> towers_;
  std::string line_;
  std::string scratch_;
  std::vector<std::string_view> fields_;
  bool done_ = false;
};

// Convenience wrapper that invokes `sink` per record.
IngestReport read_cdr_stream(const std::filesystem::path& path, const CdrReadOptions& options,
                             const std::function<void(CdrRecord&&)>& sink);

TowerSet read_towers(const std::filesystem::path& path);

// GeoJSON FeatureCollection of Polygon / MultiPolygon features. Coordinates
// are projected with `proj`. TAZs require a numeric "population" property;
// districts require "zone_id". Every other numeric property is kept.
std::vector<ZonePolygon> read_zones(const std::filesystem::path& path, ZoneKind kind,
                                    const Projection& proj);
std::vector<ZonePolygon> parse_zones(std::string_view geojson, ZoneKind kind,
                                     const Projection& proj, const std::string& source = "<memory>");

// labels.csv: district_id,unemployment_rate with rates in [0,1].
std::map<std::string, double> read_labels(const std::filesystem::path& path);

}  // namespace cdrsig
