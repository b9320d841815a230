#include "cdrsig/time.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace cdrsig {

namespace {

std::int64_t read_be(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | p[i];
  if (bytes == 4) return static_cast<std::int32_t>(static_cast<std::uint32_t>(v));
  return static_cast<std::int64_t>(v);
}

struct TzifCounts {
  std::int64_t isutcnt, isstdcnt, leapcnt, timecnt, typecnt, charcnt;
};

TzifCounts read_counts(const unsigned char* h) {
  return {read_be(h + 20, 4), read_be(h + 24, 4), read_be(h + 28, 4),
          read_be(h + 32, 4), read_be(h + 36, 4), read_be(h + 40, 4)};
}

std::size_t block_size(const TzifCounts& c, int time_bytes) {
  return c.timecnt * time_bytes + c.timecnt + c.typecnt * 6 + c.charcnt +
         c.leapcnt * (time_bytes + 4) + c.isstdcnt + c.isutcnt;
}

std::optional<std::int32_t> parse_fixed_offset(std::string_view s) {
  if (s.size() != 6 || (s[0] != '+' && s[0] != '-') || s[3] != ':') return std::nullopt;
  int hh = 0, mm = 0;
  if (std::from_chars(s.data() + 1, s.data() + 3, hh).ec != std::errc{}) return std::nullopt;
  if (std::from_chars(s.data() + 4, s.data() + 6, mm).ec != std::errc{}) return std::nullopt;
  if (hh > 18 || mm > 59) return std::nullopt;
  const std::int32_t off = hh * 3600 + mm * 60;
  return s[0] == '-' ? -off : off;
}

}  // namespace

TimeZone TimeZone::fixed(std::string name, std::int32_t offset_seconds) {
  TimeZone z;
  z.name_ = std::move(name);
  z.initial_offset_ = offset_seconds;
  return z;
}

TimeZone TimeZone::locate(std::string_view name) {
  if (name == "UTC" || name == "Etc/UTC" || name == "Z") return fixed(std::string(name), 0);
  if (auto off = parse_fixed_offset(name)) return fixed(std::string(name), *off);
  if (name.empty() || name.find("..") != std::string_view::npos || name.front() == '/') {
    throw Error(ErrorCode::Config, "invalid time zone name '" + std::string(name) + "'");
  }

  const char* env = std::getenv("TZDIR");
  const std::filesystem::path dir = env ? env : "/usr/share/zoneinfo";
  const auto path = dir / std::string(name);
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::Config, "unknown time zone '" + std::string(name) + "' (no " +
                                       path.string() + ")");
  }
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::string_view(reinterpret_cast<const char*>(buf.data()), 4) != "TZif") {
    throw Error(ErrorCode::Config, "not a TZif file: " + path.string());
  }

  // Version 2+ files repeat the data with 64-bit transition times after the
  // legacy 32-bit block; prefer that block when present.
  const char version = static_cast<char>(buf[4]);
  std::size_t offset = 0;
  int time_bytes = 4;
  TzifCounts counts = read_counts(buf.data());
  if (version >= '2') {
    offset = 44 + block_size(counts, 4);
    if (buf.size() < offset + 44) throw Error(ErrorCode::Config, "truncated TZif file: " + path.string());
    counts = read_counts(buf.data() + offset);
    time_bytes = 8;
  }
  const unsigned char* p = buf.data() + offset + 44;
  if (buf.size() < offset + 44 + block_size(counts, time_bytes)) {
    throw Error(ErrorCode::Config, "truncated TZif file: " + path.string());
  }

  std::vector<std::int64_t> times(counts.timecnt);
  for (auto& t : times) {
    t = read_be(p, time_bytes);
    p += time_bytes;
  }
  std::vector<std::uint8_t> idx(p, p + counts.timecnt);
  p += counts.timecnt;
  std::vector<std::int32_t> type_offsets(counts.typecnt);
  std::vector<bool> type_dst(counts.typecnt);
  for (std::int64_t i = 0; i < counts.typecnt; ++i) {
    type_offsets[i] = static_cast<std::int32_t>(read_be(p, 4));
    type_dst[i] = p[4] != 0;
    p += 6;
  }
  if (counts.typecnt == 0) throw Error(ErrorCode::Config, "TZif without types: " + path.string());

  TimeZone z;
  z.name_ = std::string(name);
  // RFC 8536: the first non-DST type applies before the first transition.
  z.initial_offset_ = type_offsets[0];
  for (std::int64_t i = 0; i < counts.typecnt; ++i) {
    if (!type_dst[i]) {
      z.initial_offset_ = type_offsets[i];
      break;
    }
  }
  z.transitions_ = std::move(times);
  z.offsets_.reserve(idx.size());
  for (auto i : idx) {
    if (i >= type_offsets.size()) throw Error(ErrorCode::Config, "corrupt TZif: " + path.string());
    z.offsets_.push_back(type_offsets[i]);
  }
  // TODO: honour the POSIX TZ footer for instants past the last explicit
  // transition (matters only for zones with ongoing DST rules beyond 2037).
  return z;
}

std::int32_t TimeZone::offset_at(Timestamp t) const {
  const std::int64_t s = t.time_since_epoch().count();
  auto it = std::upper_bound(transitions_.begin(), transitions_.end(), s);
  if (it == transitions_.begin()) return initial_offset_;
  return offsets_[static_cast<std::size_t>(it - transitions_.begin() - 1)];
}

std::int32_t TimeZone::seconds_of_day(Timestamp t) const {
  const std::int64_t local = to_local_seconds(t);
  std::int64_t r = local % 86400;
  if (r < 0) r += 86400;
  return static_cast<std::int32_t>(r);
}

Timestamp TimeZone::from_local_seconds(std::int64_t local) const {
  std::int32_t off = offset_at(Timestamp{std::chrono::seconds{local}});
  off = offset_at(Timestamp{std::chrono::seconds{local - off}});
  return Timestamp{std::chrono::seconds{local - off}};
}

// ---------------------------------------------------------------------------

namespace {

template <typename Int>
bool parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len, Int& out) {
  if (pos + len > s.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  return std::from_chars(s.data() + pos, s.data() + pos + len, out).ec == std::errc{};
}

std::optional<Timestamp> parse_epoch(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return Timestamp{std::chrono::seconds{v}};
}

std::optional<Timestamp> parse_iso(std::string_view s, const TimeZone& zone) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0, hh = 0, mi = 0, ss = 0;
  if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  if (!parse_fixed_int(s, 0, 4, y) || !parse_fixed_int(s, 5, 2, mo) ||
      !parse_fixed_int(s, 8, 2, d) || !parse_fixed_int(s, 11, 2, hh) ||
      !parse_fixed_int(s, 14, 2, mi) || !parse_fixed_int(s, 17, 2, ss)) {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || hh > 23 || mi > 59 || ss > 59) return std::nullopt;
  const std::int64_t wall = sys_days{ymd}.time_since_epoch().count() * 86400LL +
                            hh * 3600LL + mi * 60LL + ss;

  std::string_view rest = s.substr(19);
  if (rest.empty()) return zone.from_local_seconds(wall);
  if (rest == "Z") return Timestamp{seconds{wall}};
  if ((rest[0] != '+' && rest[0] != '-')) return std::nullopt;
  unsigned oh = 0, om = 0;
  if (rest.size() == 6 && rest[3] == ':') {
    if (!parse_fixed_int(rest, 1, 2, oh) || !parse_fixed_int(rest, 4, 2, om)) return std::nullopt;
  } else if (rest.size() == 5) {
    if (!parse_fixed_int(rest, 1, 2, oh) || !parse_fixed_int(rest, 3, 2, om)) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (oh > 18 || om > 59) return std::nullopt;
  const std::int64_t off = (rest[0] == '-' ? -1 : 1) * static_cast<std::int64_t>(oh * 3600 + om * 60);
  return Timestamp{seconds{wall - off}};
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view s, const TimeZone& zone,
                                         TimestampFormat format) {
  switch (format) {
    case TimestampFormat::epoch: return parse_epoch(s);
    case TimestampFormat::iso8601: return parse_iso(s, zone);
    case TimestampFormat::automatic: break;
  }
  const bool numeric = !s.empty() && std::all_of(s.begin() + (s[0] == '-' ? 1 : 0), s.end(),
                                                 [](char c) { return c >= '0' && c <= '9'; });
  return numeric ? parse_epoch(s) : parse_iso(s, zone);
}

std::string format_iso8601(Timestamp t, const TimeZone& zone) {
  using namespace std::chrono;
  const std::int32_t off = zone.offset_at(t);
  const std::int64_t local = t.time_since_epoch().count() + off;
  std::int64_t days_since = local / 86400;
  std::int64_t sod = local % 86400;
  if (sod < 0) {
    sod += 86400;
    days_since -= 1;
  }
  const year_month_day ymd{sys_days{days{days_since}}};
  const std::int32_t aoff = off < 0 ? -off : off;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d%c%02d:%02d",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(sod / 3600),
                static_cast<int>((sod / 60) % 60), static_cast<int>(sod % 60),
                off < 0 ? '-' : '+', aoff / 3600, (aoff / 60) % 60);
  return buf;
}

}  // namespace cdrsig
