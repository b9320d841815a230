#include <doctest.h>

#include "cdrsig/ingest.hpp"
#include "support.hpp"

using namespace cdrsig;

namespace {

const TimeZone& zone() {
  static const TimeZone z = TimeZone::locate("+03:00");
  return z;
}

TowerSet sample_towers() { return TowerSet({Tower{"t1", 46.6, 24.6}, Tower{"t2", 46.7, 24.7}}); }

RawCdrFields raw(std::string_view user, std::string_view type, std::string_view tower, std::string_view dur,
                 std::string_view ts, std::string_view cp = {}, std::string_view dir = {}) {
  return RawCdrFields{user, type, tower, dur, ts, cp, dir};
}

std::optional<QuarantineReason> reason_of(const std::variant<CdrRecord, ValidationError>& v) {
  if (const auto* e = std::get_if<ValidationError>(&v)) return e->reason;
  return std::nullopt;
}

}  // namespace

TEST_CASE("validate_record accepts a well-formed row") {
  const auto towers = sample_towers();
  ValidationContext ctx{&zone(), TimestampFormat::automatic, {}, &towers};
  const auto v = validate_record(raw("u1", "call", "t1", "60", "2012-03-01T10:00:00", "u2", "out"), 3, ctx);
  REQUIRE(std::holds_alternative<CdrRecord>(v));
  const auto& r = std::get<CdrRecord>(v);
  CHECK(r.user_id == "u1");
  CHECK(r.activity_type == ActivityType::call);
  CHECK(r.duration_s == 60);
  CHECK(r.direction == Direction::outgoing);
  CHECK(r.is_interaction());
}

TEST_CASE("validate_record maps each defect to its quarantine reason") {
  const auto towers = sample_towers();
  ObservationWindow window{parse_timestamp("2012-03-01T00:00:00", zone()), parse_timestamp("2012-04-01T00:00:00", zone())};
  ValidationContext ctx{&zone(), TimestampFormat::automatic, window, &towers};
  const std::string ts = "2012-03-01T10:00:00";
  CHECK(reason_of(validate_record(raw("", "call", "t1", "1", ts), 1, ctx)) == QuarantineReason::MalformedRow);
  CHECK(reason_of(validate_record(raw("u", "call", "", "1", ts), 1, ctx)) == QuarantineReason::MalformedRow);
  CHECK(reason_of(validate_record(raw("u", "fax", "t1", "1", ts), 1, ctx)) == QuarantineReason::UnknownActivityType);
  CHECK(reason_of(validate_record(raw("u", "call", "t1", "1.5", ts), 1, ctx)) == QuarantineReason::MalformedRow);
  CHECK(reason_of(validate_record(raw("u", "call", "t1", "-4", ts), 1, ctx)) == QuarantineReason::NegativeDuration);
  CHECK(reason_of(validate_record(raw("u", "call", "t1", "1", "2012/03/01"), 1, ctx)) ==
        QuarantineReason::MalformedTimestamp);
  CHECK(reason_of(validate_record(raw("u", "call", "t1", "1", "2012-05-01T10:00:00"), 1, ctx)) ==
        QuarantineReason::OutsideWindow);
  CHECK(reason_of(validate_record(raw("u", "call", "t1", "1", ts, "v", "sideways"), 1, ctx)) ==
        QuarantineReason::InvalidDirection);
  CHECK(reason_of(validate_record(raw("u", "call", "t9", "1", ts), 1, ctx)) == QuarantineReason::UnknownTower);
}

TEST_CASE("window end is exclusive and start inclusive") {
  ObservationWindow w{parse_timestamp("2012-03-01T00:00:00", zone()), parse_timestamp("2012-03-02T00:00:00", zone())};
  CHECK(w.contains(*w.start));
  CHECK_FALSE(w.contains(*w.end));
  CHECK(ObservationWindow{}.contains(Timestamp{}));
}

TEST_CASE("serialize_record round trips through validate_record") {
  test::Gen g(21);
  const auto towers = sample_towers();
  ValidationContext ctx{&zone(), TimestampFormat::automatic, {}, &towers};
  const char* types[] = {"call", "sms", "data", "other"};
  for (int i = 0; i < 200; ++i) {
    CdrRecord r;
    r.user_id = "u" + std::to_string(g.integer(0, 50));
    r.activity_type = *parse_activity_type(types[g.integer(0, 3)]);
    r.tower_id = g.coin() ? "t1" : "t2";
    r.duration_s = g.integer(0, 5000);
    r.timestamp = Timestamp{std::chrono::seconds{static_cast<std::int64_t>(g.uniform(1.3e9, 1.4e9))}};
    if (g.coin()) {
      r.counterpart_id = "c" + std::to_string(g.integer(0, 9));
      r.direction = g.coin() ? Direction::outgoing : Direction::incoming;
    }
    const auto line = serialize_record(r, zone());
    std::vector<std::string_view> f;
    std::string scratch;
    csv::split(line, f, scratch);
    REQUIRE(f.size() == 7);
    const auto v = validate_record(RawCdrFields{f[0], f[1], f[2], f[3], f[4], f[5], f[6]}, i, ctx);
    REQUIRE(std::holds_alternative<CdrRecord>(v));
    CHECK(std::get<CdrRecord>(v) == r);
  }
}

TEST_CASE("CdrReader counts quarantined rows per reason and keeps going") {
  test::TempDir dir("ingest");
  test::write_file(dir / "cdr.csv",
                   std::string(kCdrHeader) + "\n"
                   "u1,call,t1,30,2012-03-01T10:00:00,u2,out\n"
                   "u1,call,t1,30,bad,u2,out\n"
                   "u2,sms,t9,0,2012-03-01T11:00:00,u1,in\n"
                   "u2,sms,t2,0,2012-03-01T11:00:00\n"
                   "\n"
                   "u3,data,t2,-1,2012-03-01T12:00:00,,\n"
                   "u3,data,t2,5,1330596000,,\n");
  const auto towers = sample_towers();
  CdrReadOptions opt;
  opt.zone = &zone();
  opt.towers = &towers;
  std::vector<CdrRecord> got;
  const auto rep = read_cdr_stream(dir / "cdr.csv", opt, [&](CdrRecord&& r) { got.push_back(r); });
  CHECK(rep.rows_read == 6);
  CHECK(rep.rows_ok == 2);
  CHECK(rep.quarantined_count(QuarantineReason::MalformedTimestamp) == 1);
  CHECK(rep.quarantined_count(QuarantineReason::UnknownTower) == 1);
  CHECK(rep.quarantined_count(QuarantineReason::MalformedRow) == 1);
  CHECK(rep.quarantined_count(QuarantineReason::NegativeDuration) == 1);
  CHECK(rep.quarantined_total() == 4);
  CHECK(rep.distinct_users == 2);
  CHECK(rep.has_direction);
  REQUIRE(got.size() == 2);
  CHECK(got[1].timestamp == Timestamp{std::chrono::seconds{1330596000}});

  CdrReader reader(dir / "cdr.csv", opt);
  CdrRecord r;
  while (reader.next(r)) {
  }
  REQUIRE(reader.quarantine_log().size() == 4);
  CHECK(reader.quarantine_log()[0].row == 3);
  CHECK(reader.quarantine_log()[0].reason == QuarantineReason::MalformedTimestamp);
}

TEST_CASE("strict mode makes the first quarantined row fatal") {
  test::TempDir dir("strict");
  test::write_file(dir / "cdr.csv", "user_id,activity_type,tower_id,duration_s,timestamp\n"
                                    "u1,call,t1,30,2012-03-01T10:00:00\n"
                                    "u1,call,t1,-3,2012-03-01T10:00:00\n");
  CdrReadOptions opt;
  opt.zone = &zone();
  opt.strict = true;
  try {
    read_cdr_stream(dir / "cdr.csv", opt, [](CdrRecord&&) {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Quarantine);
    CHECK(std::string(e.what()).find("NegativeDuration") != std::string::npos);
  }
}

TEST_CASE("CDR header problems are fatal schema errors") {
  test::TempDir dir("schema");
  test::write_file(dir / "a.csv", "user_id,tower_id,timestamp\nu,t,1\n");
  test::write_file(dir / "b.csv", "");
  CdrReadOptions opt;
  opt.zone = &zone();
  CHECK_THROWS_AS(CdrReader(dir / "a.csv", opt), Error);
  CHECK_THROWS_AS(CdrReader(dir / "b.csv", opt), Error);
  try {
    CdrReader(dir / "a.csv", opt);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FatalSchema);
    CHECK(std::string(e.what()).find("activity_type") != std::string::npos);
  }
}

TEST_CASE("custom schema column names") {
  test::TempDir dir("custom");
  test::write_file(dir / "c.csv", "ts,who,kind,cell,secs\n1330596000,u1,call,t1,12\n");
  CdrReadOptions opt;
  opt.zone = &zone();
  opt.schema.user_id = "who";
  opt.schema.activity_type = "kind";
  opt.schema.tower_id = "cell";
  opt.schema.duration_s = "secs";
  opt.schema.timestamp = "ts";
  std::vector<CdrRecord> got;
  const auto rep = read_cdr_stream(dir / "c.csv", opt, [&](CdrRecord&& r) { got.push_back(r); });
  CHECK_FALSE(rep.has_direction);
  REQUIRE(got.size() == 1);
  CHECK(got[0].duration_s == 12);
  CHECK_FALSE(got[0].is_interaction());
}

TEST_CASE("tower files") {
  test::TempDir dir("towers");
  test::write_file(dir / "ok.csv", "tower_id,lon,lat\nt1,46.6,24.6\n\"t,2\",46.7,24.7\n");
  const auto towers = read_towers(dir / "ok.csv");
  CHECK(towers.size() == 2);
  CHECK(towers.contains("t,2"));

  auto code_of = [&](const std::string& text) {
    test::write_file(dir / "bad.csv", text);
    try {
      read_towers(dir / "bad.csv");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Internal;
  };
  CHECK(code_of("tower_id,lon,lat\nt1,46.6,24.6\nt1,46.7,24.7\n") == ErrorCode::DuplicateTowerId);
  CHECK(code_of("tower_id,lon,lat\nt1,200,24.6\n") == ErrorCode::CoordinateOutOfRange);
  CHECK(code_of("tower_id,lon,lat\nt1,abc,24.6\n") == ErrorCode::FatalSchema);
  CHECK(code_of("id,x,y\nt1,1,2\n") == ErrorCode::FatalSchema);
  CHECK_THROWS_AS(read_towers(dir / "missing.csv"), Error);
}

TEST_CASE("GeoJSON zones") {
  const std::string good = R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"zone_id":"d1","extra":2.5},
     "geometry":{"type":"Polygon","coordinates":[[[0,0],[2,0],[2,1],[0,1],[0,0]]]}},
    {"type":"Feature","properties":{"zone_id":"d2"},
     "geometry":{"type":"MultiPolygon","coordinates":[[[[0,3],[1,3],[1,4],[0,4],[0,3]]],[[[2,3],[3,3],[3,4],[2,4],[2,3]]]]}}]})";
  const auto zones = parse_zones(good, ZoneKind::district, Projection::identity());
  REQUIRE(zones.size() == 2);
  CHECK(zones[0].zone_id == "d1");
  CHECK(zones[0].area == doctest::Approx(2.0));
  CHECK(zones[0].attribute("extra") == 2.5);
  CHECK(zones[1].area == doctest::Approx(2.0));

  auto code_of = [](const std::string& text, ZoneKind kind) {
    try {
      parse_zones(text, kind, Projection::identity());
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Internal;
  };
  CHECK(code_of(good, ZoneKind::taz) == ErrorCode::MissingAttribute);
  CHECK(code_of("{not json", ZoneKind::district) == ErrorCode::FatalSchema);
  CHECK(code_of(R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"zone_id":"x"},
    "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[0,0]]]}}]})",
                ZoneKind::district) == ErrorCode::InvalidGeometry);
  CHECK(code_of(R"({"type":"FeatureCollection","features":[{"type":"Feature","properties":{"zone_id":"x"},
    "geometry":{"type":"Point","coordinates":[0,0]}}]})",
                ZoneKind::district) == ErrorCode::InvalidGeometry);
}

TEST_CASE("labels") {
  test::TempDir dir("labels");
  test::write_file(dir / "l.csv", "district_id,unemployment_rate\nd1,0.1\nd2,0.25\n");
  const auto labels = read_labels(dir / "l.csv");
  CHECK(labels.at("d2") == 0.25);
  test::write_file(dir / "bad.csv", "district_id,unemployment_rate\nd1,1.5\n");
  CHECK_THROWS_AS(read_labels(dir / "bad.csv"), Error);
  test::write_file(dir / "dup.csv", "district_id,unemployment_rate\nd1,0.1\nd1,0.2\n");
  CHECK_THROWS_AS(read_labels(dir / "dup.csv"), Error);
  try {
    read_labels(dir / "nope.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
    CHECK(std::string(e.what()).find("nope.csv") != std::string::npos);
  }
}

TEST_CASE("ingest report JSON names every reason") {
  IngestReport r;
  r.rows_read = 3;
  r.quarantined[static_cast<std::size_t>(QuarantineReason::UnknownTower)] = 2;
  const auto j = r.to_json();
  for (std::size_t i = 0; i < kQuarantineReasonCount; ++i) {
    CHECK(j.find(std::string(to_string(static_cast<QuarantineReason>(i)))) != std::string::npos);
  }
  CHECK(r.quarantined_total() == 2);
}
