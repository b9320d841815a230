// Timestamp parsing/formatting and IANA time zones.
//
// libstdc++ 11 ships no chrono time-zone database, so zones are loaded from
// the system TZif files ($TZDIR or /usr/share/zoneinfo).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdrsig/core.hpp"

namespace cdrsig {

class TimeZone {
 public:
  // Accepts an IANA name ("Asia/Riyadh"), "UTC", or a fixed offset
  // ("+03:00"). Throws Error{Config} when the zone cannot be loaded.
  static TimeZone locate(std::string_view name);
  static TimeZone fixed(std::string name, std::int32_t offset_seconds);

  const std::string& name() const { return name_; }

  std::int32_t offset_at(Timestamp t) const;
  // Local wall-clock seconds since the epoch.
  std::int64_t to_local_seconds(Timestamp t) const {
    return t.time_since_epoch().count() + offset_at(t);
  }
  // Seconds since local midnight, in [0, 86400).
  std::int32_t seconds_of_day(Timestamp t) const;
  // Resolves a naive local wall-clock time. For ambiguous or skipped times the
  // offset in force just before the transition wins.
  Timestamp from_local_seconds(std::int64_t local) const;

 private:
  std::string name_;
  std::vector<std::int64_t> transitions_;  // UTC seconds
  std::vector<std::int32_t> offsets_;      // offset in force from transitions_[i]
  std::int32_t initial_offset_ = 0;
};

enum class TimestampFormat { automatic, iso8601, epoch };

// ISO-8601 "YYYY-MM-DDTHH:MM:SS" with optional 'Z' / ±HH:MM / ±HHMM suffix
// (naive values are read as local time in `zone`), or integer epoch seconds.
std::optional<Timestamp> parse_timestamp(std::string_view s, const TimeZone& zone,
                                         TimestampFormat format = TimestampFormat::automatic);

// Local wall-clock time in `zone` with explicit offset, e.g.
// "2012-03-01T20:15:00+03:00".
std::string format_iso8601(Timestamp t, const TimeZone& zone);

}  // namespace cdrsig
