#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "cdrsig/group_by.hpp"
#include "cdrsig/indicators.hpp"
#include "support.hpp"

using namespace cdrsig;

namespace {

const TimeZone& zone() {
  static const TimeZone z = TimeZone::locate("+03:00");
  return z;
}

Timestamp local(int day, int hour, int minute = 0) {
  // 2012-03-01 00:00 local is 2012-02-29 21:00 UTC.
  return Timestamp{std::chrono::seconds{1330549200LL + day * 86400LL + hour * 3600LL + minute * 60LL}};
}

CdrRecord rec(const std::string& user, ActivityType t, const std::string& tower, std::int64_t dur, Timestamp ts,
              const std::string& cp = "", std::optional<Direction> dir = std::nullopt) {
  CdrRecord r;
  r.user_id = user;
  r.activity_type = t;
  r.tower_id = tower;
  r.duration_s = dur;
  r.timestamp = ts;
  r.counterpart_id = cp;
  r.direction = dir;
  return r;
}

EgoNetwork ego(std::initializer_list<std::pair<const char*, ContactVolume>> contacts) {
  EgoNetwork e;
  for (const auto& [id, v] : contacts) e.contacts[id] = v;
  return e;
}

EgoNetwork random_ego(test::Gen& g) {
  EgoNetwork e;
  const int k = g.integer(0, 30);
  for (int i = 0; i < k; ++i) {
    ContactVolume v;
    do {
      v.out = g.coin(0.3) ? 0 : g.integer(0, 12);
      v.in = g.coin(0.3) ? 0 : g.integer(0, 12);
    } while (v.total() == 0);
    e.contacts["c" + std::to_string(i)] = v;
  }
  return e;
}

std::vector<CdrRecord> random_user(test::Gen& g, const std::string& user, int n) {
  const char* towers[] = {"a", "b", "c", "d", "e"};
  std::vector<CdrRecord> out;
  for (int i = 0; i < n; ++i) {
    const int kind = g.integer(0, 3);
    const auto type = kind == 0 ? ActivityType::call : kind == 1 ? ActivityType::sms : kind == 2 ? ActivityType::data : ActivityType::other;
    std::string cp;
    std::optional<Direction> dir;
    if ((type == ActivityType::call || type == ActivityType::sms) && g.coin(0.9)) {
      cp = "p" + std::to_string(g.integer(0, 8));
      dir = g.coin() ? Direction::outgoing : Direction::incoming;
    }
    out.push_back(rec(user, type, towers[g.integer(0, 4)], type == ActivityType::call ? g.integer(0, 900) : 0,
                      local(g.integer(0, 27), g.integer(0, 23), g.integer(0, 59)), cp, dir));
  }
  return out;
}

}  // namespace

TEST_CASE("normalized entropy of a two-contact split") {
  const auto e = ego({{"a", {3, 0}}, {"b", {0, 1}}});
  CHECK(social_entropy(e) == doctest::Approx(0.8112781244591328).epsilon(1e-14));
  // Outgoing weights leave only one contact with mass.
  CHECK(social_entropy(e, EntropyVariant::standard_shannon, EntropyWeight::outgoing) == 0.0);
  CHECK(social_entropy(ego({{"a", {1, 1}}})) == 0.0);
  CHECK(social_entropy(EgoNetwork{}) == 0.0);
}

TEST_CASE("uniform volumes give entropy one") {
  for (int k = 2; k < 40; ++k) {
    EgoNetwork e;
    for (int i = 0; i < k; ++i) e.contacts["c" + std::to_string(i)] = {2, 1};
    CHECK(social_entropy(e) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("social indicators match direct formulas on random ego networks") {
  test::Gen g(61);
  for (int trial = 0; trial < 500; ++trial) {
    const auto e = random_ego(g);
    double with_in = 0, with_out = 0, bal = 0, vol = 0, vol_out = 0;
    for (const auto& [id, v] : e.contacts) {
      with_in += v.in > 0;
      with_out += v.out > 0;
      bal += double(v.out) / double(v.out + v.in);
      vol += double(v.out + v.in);
      vol_out += double(v.out);
    }
    const double k = double(e.contacts.size());
    if (k == 0) {
      CHECK_FALSE(pct_initiated(e).has_value());
      CHECK_FALSE(balance_of_contacts(e).has_value());
      CHECK_FALSE(interactions_per_contact(e).has_value());
      continue;
    }
    CHECK(std::abs(*pct_initiated(e) - with_in / (with_in + with_out)) <= 1e-12);
    CHECK(std::abs(*pct_initiated(e, InitiatedVariant::name_consistent) - with_out / (with_in + with_out)) <= 1e-12);
    CHECK(std::abs(*balance_of_contacts(e) - bal / k) <= 1e-12);
    CHECK(std::abs(*interactions_per_contact(e) - vol / k) <= 1e-12);

    double h = 0, h_lit = 0, h_out = 0;
    for (const auto& [id, v] : e.contacts) {
      const double p = double(v.out + v.in) / vol;
      h -= p * std::log(p);
      h_lit -= std::log(p);
      if (v.out > 0) {
        const double q = double(v.out) / vol_out;
        h_out -= q * std::log(q);
      }
    }
    const double norm = k > 1 ? std::log(k) : 1.0;
    const double expect = k > 1 ? h / norm : 0.0;
    CHECK(std::abs(social_entropy(e) - expect) <= 1e-12);
    CHECK(std::abs(social_entropy(e, EntropyVariant::paper_literal) - (k > 1 ? h_lit / norm : 0.0)) <= 1e-9);
    CHECK(std::abs(social_entropy(e, EntropyVariant::standard_shannon, EntropyWeight::outgoing) -
                   (k > 1 && vol_out > 0 ? h_out / norm : 0.0)) <= 1e-12);
    CHECK(social_entropy(e) >= 0.0);
    CHECK(social_entropy(e) <= 1.0 + 1e-12);
    CHECK(std::abs(*balance_of_contacts(e.reversed()) - (1.0 - *balance_of_contacts(e))) <= 1e-12);
    CHECK(std::abs(social_entropy(e.reversed()) - social_entropy(e)) <= 1e-12);
  }
}

TEST_CASE("night window wraps midnight") {
  NightWindow n;
  CHECK(n.contains_seconds_of_day(19 * 3600));
  CHECK(n.contains_seconds_of_day(0));
  CHECK(n.contains_seconds_of_day(7 * 3600 - 1));
  CHECK_FALSE(n.contains_seconds_of_day(7 * 3600));
  CHECK_FALSE(n.contains_seconds_of_day(19 * 3600 - 1));
  NightWindow day{9, 17};
  CHECK(day.contains_seconds_of_day(12 * 3600));
  CHECK_FALSE(day.contains_seconds_of_day(18 * 3600));
  CHECK_THROWS_AS((NightWindow{25, 3}.validate()), Error);
}

TEST_CASE("activity indicators") {
  std::vector<CdrRecord> r = {
      rec("u", ActivityType::call, "a", 100, local(0, 20)),  // night
      rec("u", ActivityType::call, "a", 50, local(0, 12)),
      rec("u", ActivityType::call, "b", 30, local(1, 3)),  // night
      rec("u", ActivityType::sms, "b", 0, local(1, 23)),
  };
  const auto a = activity_indicators(r, NightWindow{}, zone());
  CHECK(a.n_records == 4);
  CHECK(*a.pct_night_calls == doctest::Approx(2.0 / 3.0));
  CHECK(*a.mean_call_duration_s == doctest::Approx(60.0));
  const std::vector<CdrRecord> no_calls = {rec("u", ActivityType::data, "a", 0, local(0, 1))};
  const auto b = activity_indicators(no_calls, NightWindow{}, zone());
  CHECK_FALSE(b.pct_night_calls.has_value());
  CHECK_FALSE(b.mean_call_duration_s.has_value());
  CHECK_THROWS_AS(activity_indicators({}, NightWindow{}, zone()), Error);
}

TEST_CASE("home tower and spatial markers") {
  std::vector<CdrRecord> r = {
      rec("u", ActivityType::data, "b", 0, local(0, 22)), rec("u", ActivityType::data, "a", 0, local(1, 22)),
      rec("u", ActivityType::data, "c", 0, local(1, 12)), rec("u", ActivityType::data, "c", 0, local(2, 12)),
      rec("u", ActivityType::data, "a", 0, local(3, 12)),
  };
  const auto home = home_tower(r, NightWindow{}, zone());
  CHECK(home == "a");  // tie with b at one night record each
  const auto m = spatial_markers(r, home);
  CHECK(m.visited_locations == 3);
  CHECK(*m.pct_at_home == doctest::Approx(0.4));
  std::vector<CdrRecord> daytime = {rec("u", ActivityType::data, "a", 0, local(0, 12))};
  CHECK_FALSE(home_tower(daytime, NightWindow{}, zone()).has_value());
  CHECK_FALSE(spatial_markers(daytime, std::nullopt).pct_at_home.has_value());
}

TEST_CASE("ego network ignores records without counterpart or direction") {
  std::vector<CdrRecord> r = {
      rec("u", ActivityType::call, "a", 1, local(0, 1), "x", Direction::outgoing),
      rec("u", ActivityType::sms, "a", 0, local(0, 2), "x", Direction::incoming),
      rec("u", ActivityType::sms, "a", 0, local(0, 3), "y", Direction::incoming),
      rec("u", ActivityType::data, "a", 0, local(0, 4), "z", Direction::outgoing),
      rec("u", ActivityType::call, "a", 1, local(0, 5)),
  };
  const auto e = build_ego_network("u", r);
  CHECK(e.k() == 2);
  CHECK(e.contacts.at("x").out == 1);
  CHECK(e.contacts.at("x").in == 1);
  CHECK_THROWS_AS(build_ego_network("u", r, false), Error);
}

TEST_CASE("accumulator merge is invariant to record partition and order") {
  test::Gen g(67);
  IndicatorOptions opt;
  opt.zone = &zone();
  for (int trial = 0; trial < 100; ++trial) {
    auto records = random_user(g, "u", g.integer(1, 80));
    const auto whole = compute_user_indicators(records, opt);

    std::shuffle(records.begin(), records.end(), g.engine());
    const int parts = g.integer(1, 5);
    std::vector<UserAccumulator> acc(static_cast<std::size_t>(parts));
    for (const auto& r : records) acc[static_cast<std::size_t>(g.integer(0, parts - 1))].add(r, opt.night, zone());
    UserAccumulator merged;
    for (auto it = acc.rbegin(); it != acc.rend(); ++it) merged.merge(*it);
    CHECK(merged.n_records() == static_cast<std::int64_t>(records.size()));
    CHECK(merged.finalize(opt) == whole);
  }
}

TEST_CASE("compute_user_indicators agrees with the component functions") {
  test::Gen g(71);
  IndicatorOptions opt;
  opt.zone = &zone();
  for (int trial = 0; trial < 100; ++trial) {
    const auto records = random_user(g, "u", g.integer(1, 60));
    const auto u = compute_user_indicators(records, opt);
    const auto a = activity_indicators(records, opt.night, zone());
    const auto e = build_ego_network("u", records);
    const auto home = home_tower(records, opt.night, zone());
    const auto s = spatial_markers(records, home);
    CHECK(u.n_records == a.n_records);
    CHECK(u.pct_night_calls == a.pct_night_calls);
    CHECK(u.mean_call_duration_s == a.mean_call_duration_s);
    CHECK(u.pct_initiated == pct_initiated(e));
    CHECK(u.balance_of_contacts == balance_of_contacts(e));
    if (e.k() > 0) {
      CHECK(u.social_entropy == social_entropy(e));
    } else {
      CHECK_FALSE(u.social_entropy.has_value());
    }
    CHECK(u.interactions_per_contact == interactions_per_contact(e));
    CHECK(u.home_tower == home);
    CHECK(u.pct_at_home == s.pct_at_home);
    CHECK(u.visited_locations == s.visited_locations);
  }
}

TEST_CASE("indicators without a direction column leave social values absent") {
  test::Gen g(73);
  IndicatorOptions opt;
  opt.zone = &zone();
  opt.direction_available = false;
  auto records = random_user(g, "u", 30);
  for (auto& r : records) r.direction.reset();
  const auto u = compute_user_indicators(records, opt);
  CHECK_FALSE(u.pct_initiated.has_value());
  CHECK_FALSE(u.social_entropy.has_value());
  CHECK(u.n_records == 30);
}

TEST_CASE("indicators csv round trip") {
  test::Gen g(79);
  IndicatorOptions opt;
  opt.zone = &zone();
  for (int trial = 0; trial < 100; ++trial) {
    const auto u = compute_user_indicators(random_user(g, "user," + std::to_string(trial), g.integer(1, 40)), opt);
    const auto line = indicators_csv_row("user," + std::to_string(trial), u);
    const auto [id, back] = parse_indicators_csv_row(line);
    CHECK(id == "user," + std::to_string(trial));
    CHECK(back == u);
  }
  CHECK(indicators_csv_header().rfind("user_id", 0) == 0);
}

TEST_CASE("grouping with spills equals in-memory grouping") {
  test::Gen g(83);
  test::TempDir dir("spill");
  std::vector<CdrRecord> all;
  for (int u = 0; u < 60; ++u) {
    const auto r = random_user(g, "u" + std::to_string(u), g.integer(1, 30));
    all.insert(all.end(), r.begin(), r.end());
  }
  std::shuffle(all.begin(), all.end(), g.engine());
  const auto expected = group_by_user(all);

  UserGrouper grouper(GroupOptions{37, dir.path()});
  for (const auto& r : all) grouper.add(r);
  CHECK(grouper.spilled_runs() > 5);
  std::vector<std::pair<std::string, std::vector<CdrRecord>>> got;
  grouper.finish([&](const std::string& id, std::vector<CdrRecord>& rs) { got.emplace_back(id, rs); });
  REQUIRE(got.size() == expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].first == expected[i].first);
    CHECK(got[i].second == expected[i].second);
    CHECK(std::is_sorted(got[i].second.begin(), got[i].second.end(),
                         [](const CdrRecord& a, const CdrRecord& b) { return a.timestamp < b.timestamp; }));
  }
  for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].first < got[i].first);
  // Spill files are cleaned up.
  CHECK(std::filesystem::is_empty(dir.path()));
}

TEST_CASE("grouping keeps input order among equal timestamps") {
  std::vector<CdrRecord> r;
  for (int i = 0; i < 10; ++i) r.push_back(rec("u", ActivityType::call, "t" + std::to_string(i), i, local(0, 1)));
  const auto grouped = group_by_user(r);
  REQUIRE(grouped.size() == 1);
  for (int i = 0; i < 10; ++i) CHECK(grouped[0].second[static_cast<std::size_t>(i)].duration_s == i);
}
