#include "cdrsig/indicators.hpp"

#include <cmath>

#include "cdrsig/csv.hpp"

namespace cdrsig {

void NightWindow::validate() const {
  if (start_hour < 0 || start_hour > 23 || end_hour < 0 || end_hour > 23 || start_hour == end_hour) {
    throw Error(ErrorCode::Config, "night window hours must be distinct values in [0,23]");
  }
}

std::optional<InitiatedVariant> parse_initiated_variant(std::string_view s) {
  if (s == "paper_literal") return InitiatedVariant::paper_literal;
  if (s == "name_consistent") return InitiatedVariant::name_consistent;
  return std::nullopt;
}

std::optional<EntropyVariant> parse_entropy_variant(std::string_view s) {
  if (s == "standard_shannon") return EntropyVariant::standard_shannon;
  if (s == "paper_literal") return EntropyVariant::paper_literal;
  return std::nullopt;
}

std::optional<EntropyWeight> parse_entropy_weight(std::string_view s) {
  if (s == "total") return EntropyWeight::total;
  if (s == "out" || s == "outgoing") return EntropyWeight::outgoing;
  return std::nullopt;
}

ActivityIndicators activity_indicators(std::span<const CdrRecord> records, const NightWindow& night,
                                       const TimeZone& zone) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "activity_indicators needs at least one record");
  ActivityIndicators a;
  a.n_records = static_cast<std::int64_t>(records.size());
  std::int64_t calls = 0, night_calls = 0, duration = 0;
  for (const auto& r : records) {
    if (r.activity_type != ActivityType::call) continue;
    ++calls;
    duration += r.duration_s;
    if (night.contains(r.timestamp, zone)) ++night_calls;
  }
  if (calls > 0) {
    a.pct_night_calls = static_cast<double>(night_calls) / static_cast<double>(calls);
    a.mean_call_duration_s = static_cast<double>(duration) / static_cast<double>(calls);
  }
  return a;
}

EgoNetwork build_ego_network(const std::string& ego, std::span<const CdrRecord> records,
                             bool direction_available) {
  if (!direction_available) {
    throw Error(ErrorCode::MissingDirectionField, "CDR source has no direction/counterpart columns");
  }
  EgoNetwork e{ego, {}};
  for (const auto& r : records) {
    if (!r.is_interaction()) continue;
    auto& v = e.contacts[r.counterpart_id];
    (*r.direction == Direction::outgoing ? v.out : v.in) += 1;
  }
  return e;
}

std::optional<double> pct_initiated(const EgoNetwork& e, InitiatedVariant variant) {
  const auto in = static_cast<double>(e.incoming_count());
  const auto out = static_cast<double>(e.outgoing_count());
  if (in + out < 1.0) return std::nullopt;
  return (variant == InitiatedVariant::paper_literal ? in : out) / (in + out);
}

std::optional<double> balance_of_contacts(const EgoNetwork& e) {
  if (e.k() == 0) return std::nullopt;
  double s = 0.0;
  for (const auto& [id, v] : e.contacts) {
    s += static_cast<double>(v.out) / static_cast<double>(v.total());
  }
  return s / static_cast<double>(e.k());
}

double social_entropy(const EgoNetwork& e, EntropyVariant variant, EntropyWeight weight) {
  const std::size_t k = e.k();
  if (k <= 1) return 0.0;
  auto w = [weight](const ContactVolume& v) {
    return static_cast<double>(weight == EntropyWeight::total ? v.total() : v.out);
  };
  double total = 0.0;
  for (const auto& [id, v] : e.contacts) total += w(v);
  if (!(total > 0.0)) return 0.0;
  double s = 0.0;
  for (const auto& [id, v] : e.contacts) {
    const double p = w(v) / total;
    if (p <= 0.0) continue;
    s -= variant == EntropyVariant::standard_shannon ? p * std::log(p) : std::log(p);
  }
  return s / std::log(static_cast<double>(k));
}

std::optional<double> interactions_per_contact(const EgoNetwork& e) {
  if (e.k() == 0) return std::nullopt;
  std::int64_t total = 0;
  for (const auto& [id, v] : e.contacts) total += v.total();
  return static_cast<double>(total) / static_cast<double>(e.k());
}

std::optional<std::string> home_tower(std::span<const CdrRecord> records, const NightWindow& night,
                                      const TimeZone& zone) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& r : records) {
    if (night.contains(r.timestamp, zone)) ++counts[r.tower_id];
  }
  std::optional<std::string> best;
  std::int64_t best_n = 0;
  for (const auto& [id, n] : counts) {  // ascending id, so strict > keeps the smallest on ties
    if (n > best_n) {
      best = id;
      best_n = n;
    }
  }
  return best;
}

SpatialMarkers spatial_markers(std::span<const CdrRecord> records, const std::optional<std::string>& home) {
  SpatialMarkers m;
  std::map<std::string, std::int64_t> counts;
  for (const auto& r : records) ++counts[r.tower_id];
  m.visited_locations = static_cast<std::int64_t>(counts.size());
  if (home && !records.empty()) {
    auto it = counts.find(*home);
    const double at_home = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    m.pct_at_home = at_home / static_cast<double>(records.size());
  }
  return m;
}

// ---------------------------------------------------------------------------

void UserAccumulator::add(const CdrRecord& r, const NightWindow& night, const TimeZone& zone) {
  ++n_records_;
  const bool is_night = night.contains(r.timestamp, zone);
  if (r.activity_type == ActivityType::call) {
    ++n_calls_;
    call_duration_sum_ += r.duration_s;
    if (is_night) ++n_night_calls_;
  }
  if (r.is_interaction()) {
    auto& v = contacts_[r.counterpart_id];
    (*r.direction == Direction::outgoing ? v.out : v.in) += 1;
  }
  auto& t = towers_[r.tower_id];
  ++t.total;
  if (is_night) ++t.night;
}

void UserAccumulator::merge(const UserAccumulator& other) {
  n_records_ += other.n_records_;
  n_calls_ += other.n_calls_;
  n_night_calls_ += other.n_night_calls_;
  call_duration_sum_ += other.call_duration_sum_;
  for (const auto& [id, v] : other.contacts_) {
    auto& mine = contacts_[id];
    mine.out += v.out;
    mine.in += v.in;
  }
  for (const auto& [id, t] : other.towers_) {
    auto& mine = towers_[id];
    mine.total += t.total;
    mine.night += t.night;
  }
}

UserIndicators UserAccumulator::finalize(const IndicatorOptions& options) const {
  UserIndicators u;
  u.n_records = n_records_;
  if (n_calls_ > 0) {
    u.pct_night_calls = static_cast<double>(n_night_calls_) / static_cast<double>(n_calls_);
    u.mean_call_duration_s = static_cast<double>(call_duration_sum_) / static_cast<double>(n_calls_);
  }
  if (options.direction_available) {
    const EgoNetwork e{"", contacts_};
    u.pct_initiated = pct_initiated(e, options.initiated);
    u.balance_of_contacts = balance_of_contacts(e);
    if (e.k() > 0) u.social_entropy = social_entropy(e, options.entropy, options.entropy_weight);
    u.interactions_per_contact = interactions_per_contact(e);
  }
  std::int64_t best_n = 0;
  for (const auto& [id, t] : towers_) {
    if (t.night > best_n) {
      u.home_tower = id;
      best_n = t.night;
    }
  }
  u.visited_locations = static_cast<std::int64_t>(towers_.size());
  if (u.home_tower && n_records_ > 0) {
    u.pct_at_home = static_cast<double>(towers_.at(*u.home_tower).total) / static_cast<double>(n_records_);
  }
  return u;
}

UserIndicators compute_user_indicators(std::span<const CdrRecord> records, const IndicatorOptions& options) {
  static const TimeZone utc = TimeZone::fixed("UTC", 0);
  const TimeZone& zone = options.zone ? *options.zone : utc;
  UserAccumulator acc;
  for (const auto& r : records) acc.add(r, options.night, zone);
  return acc.finalize(options);
}

// ---------------------------------------------------------------------------

std::string indicators_csv_header() {
  std::string h = "user_id";
  for (auto ind : kAllIndicators) {
    h += ',';
    h += to_string(ind);
  }
  h += ",home_tower";
  return h;
}

std::string indicators_csv_row(const std::string& user_id, const UserIndicators& u) {
  std::string row = csv::escape(user_id);
  for (auto ind : kAllIndicators) {
    row += ',';
    if (ind == Indicator::n_records) {
      row += std::to_string(u.n_records);
    } else if (ind == Indicator::visited_locations) {
      row += std::to_string(u.visited_locations);
    } else {
      row += csv::format_optional(u.value(ind));
    }
  }
  row += ',';
  if (u.home_tower) row += csv::escape(*u.home_tower);
  return row;
}

std::pair<std::string, UserIndicators> parse_indicators_csv_row(std::string_view line) {
  std::vector<std::string_view> f;
  std::string scratch;
  csv::split(line, f, scratch);
  if (f.size() != kIndicatorCount + 2) {
    throw Error(ErrorCode::FatalSchema, "indicators row has " + std::to_string(f.size()) + " fields");
  }
  auto num = [&](std::size_t i) -> std::optional<double> {
    if (f[i].empty()) return std::nullopt;
    auto v = csv::parse_double(f[i]);
    if (!v) throw Error(ErrorCode::FatalSchema, "indicators row: bad number '" + std::string(f[i]) + "'");
    return v;
  };
  UserIndicators u;
  std::string user(f[0]);
  const auto n = csv::parse_int(f[1]);
  const auto visited = csv::parse_int(f[9]);
  if (!n || !visited) throw Error(ErrorCode::FatalSchema, "indicators row: bad count");
  u.n_records = *n;
  u.pct_night_calls = num(2);
  u.mean_call_duration_s = num(3);
  u.pct_initiated = num(4);
  u.balance_of_contacts = num(5);
  u.social_entropy = num(6);
  u.interactions_per_contact = num(7);
  u.pct_at_home = num(8);
  u.visited_locations = *visited;
  if (!f[10].empty()) u.home_tower = std::string(f[10]);
  return {std::move(user), std::move(u)};
}

}  // namespace cdrsig
