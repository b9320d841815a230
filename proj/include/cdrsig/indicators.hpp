// Per-user activity, social and spatial indicators.
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdrsig/core.hpp"
#include "cdrsig/time.hpp"

namespace cdrsig {

// Local wall-clock night, [start_hour:00, end_hour:00), wrapping midnight when
// start > end.
struct NightWindow {
  int start_hour = 19;
  int end_hour = 7;

  void validate() const;
  bool contains_seconds_of_day(std::int32_t sod) const {
    const std::int32_t s = start_hour * 3600, e = end_hour * 3600;
    return start_hour > end_hour ? (sod >= s || sod < e) : (sod >= s && sod < e);
  }
  bool contains(Timestamp t, const TimeZone& zone) const {
    return contains_seconds_of_day(zone.seconds_of_day(t));
  }
};

enum class InitiatedVariant { paper_literal, name_consistent };
enum class EntropyVariant { standard_shannon, paper_literal };
enum class EntropyWeight { total, outgoing };

std::optional<InitiatedVariant> parse_initiated_variant(std::string_view s);
std::optional<EntropyVariant> parse_entropy_variant(std::string_view s);
std::optional<EntropyWeight> parse_entropy_weight(std::string_view s);

struct IndicatorOptions {
  NightWindow night;
  const TimeZone* zone = nullptr;
  InitiatedVariant initiated = InitiatedVariant::paper_literal;
  EntropyVariant entropy = EntropyVariant::standard_shannon;
  EntropyWeight entropy_weight = EntropyWeight::total;
  // When false the source has no direction column and social indicators are
  // left absent.
  bool direction_available = true;
};

struct ActivityIndicators {
  std::int64_t n_records = 0;
  std::optional<double> pct_night_calls;       // absent without call records
  std::optional<double> mean_call_duration_s;  // absent without call records
};

ActivityIndicators activity_indicators(std::span<const CdrRecord> records, const NightWindow& night,
                                       const TimeZone& zone);

// Counts per-contact interaction volumes from call/sms records carrying a
// counterpart and direction. Throws MissingDirectionField when the source
// has no direction information.
EgoNetwork build_ego_network(const std::string& ego, std::span<const CdrRecord> records,
                             bool direction_available = true);

std::optional<double> pct_initiated(const EgoNetwork& e, InitiatedVariant variant = InitiatedVariant::paper_literal);
std::optional<double> balance_of_contacts(const EgoNetwork& e);
// k <= 1 yields 0.
double social_entropy(const EgoNetwork& e, EntropyVariant variant = EntropyVariant::standard_shannon,
                      EntropyWeight weight = EntropyWeight::total);
std::optional<double> interactions_per_contact(const EgoNetwork& e);

// Tower with the most night-time records; ties go to the smallest tower_id.
std::optional<std::string> home_tower(std::span<const CdrRecord> records, const NightWindow& night,
                                      const TimeZone& zone);

struct SpatialMarkers {
  std::int64_t visited_locations = 0;
  std::optional<double> pct_at_home;
};
SpatialMarkers spatial_markers(std::span<const CdrRecord> records, const std::optional<std::string>& home);

// Mergeable per-user state. Partial accumulators built from any partition of
// a user's records merge to the same state, so finalize() is independent of
// how the records were split or ordered.
class UserAccumulator {
 public:
  void add(const CdrRecord& r, const NightWindow& night, const TimeZone& zone);
  void merge(const UserAccumulator& other);
  UserIndicators finalize(const IndicatorOptions& options) const;

  std::int64_t n_records() const { return n_records_; }

 private:
  struct TowerCount {
    std::int64_t total = 0;
    std::int64_t night = 0;
  };
  std::int64_t n_records_ = 0;
  std::int64_t n_calls_ = 0;
  std::int64_t n_night_calls_ = 0;
  std::int64_t call_duration_sum_ = 0;
  std::map<std::string, ContactVolume> contacts_;
  std::map<std::string, TowerCount> towers_;
};

UserIndicators compute_user_indicators(std::span<const CdrRecord> records, const IndicatorOptions& options);

// indicators.csv layout.
std::string indicators_csv_header();
std::string indicators_csv_row(const std::string& user_id, const UserIndicators& u);
// Parses one row written by indicators_csv_row. Returns (user_id, indicators).
std::pair<std::string, UserIndicators> parse_indicators_csv_row(std::string_view line);

}  // namespace cdrsig
