#include "cdrsig/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include <json.hpp>

#include "cdrsig/aggregate.hpp"
#include "cdrsig/csv.hpp"
#include "cdrsig/geo.hpp"
#include "cdrsig/group_by.hpp"
#include "cdrsig/indicators.hpp"
#include "cdrsig/ml/cv.hpp"
#include "cdrsig/ml/ols.hpp"
#include "cdrsig/ml/som.hpp"
#include "cdrsig/parallel.hpp"
#include "cdrsig/stats.hpp"
#include "cdrsig/time.hpp"

namespace cdrsig::pipeline {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < n; ++i) {
    s += digits[d[i] >> 4];
    s += digits[d[i] & 15];
  }
  return s;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error(ErrorCode::Internal, "sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_table(const fs::path& path, const std::vector<std::string>& required) {
  csv::LineReader lines(path);
  std::string line, scratch;
  std::vector<std::string_view> f;
  if (!lines.next(line)) throw Error(ErrorCode::FatalSchema, path.string() + ": missing header row");
  csv::split(line, f, scratch);
  const std::vector<std::string> header(f.begin(), f.end());
  std::vector<std::size_t> idx;
  for (const auto& name : required) {
    const auto i = csv::column_index(header, name);
    if (!i) throw Error(ErrorCode::FatalSchema, path.string() + ": missing column '" + name + "'");
    idx.push_back(*i);
  }
  std::vector<std::vector<std::string>> rows;
  while (lines.next(line)) {
    if (line.empty()) continue;
    csv::split(line, f, scratch);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::FatalSchema, path.string() + " row " + std::to_string(lines.line_number()) + ": wrong field count");
    }
    std::vector<std::string> row;
    for (auto i : idx) row.emplace_back(f[i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

double number(const std::string& s, const fs::path& where) {
  auto v = csv::parse_double(s);
  if (!v) throw Error(ErrorCode::FatalSchema, where.string() + ": bad number '" + s + "'");
  return *v;
}

// Tracks a stage's inputs and outputs and writes its manifest.
class StageRun {
 public:
  StageRun(const PipelineConfig& cfg, std::string name) : cfg_(cfg), name_(std::move(name)) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
  }

  const fs::path& out_dir() const { return cfg_.out_dir; }

  fs::path input(const fs::path& p, std::string_view what) {
    if (p.empty()) throw Error(ErrorCode::Config, "no " + std::string(what) + " path configured");
    if (!fs::exists(p)) throw Error(ErrorCode::Io, std::string(what) + " file not found: '" + p.string() + "'");
    inputs_[p.filename().string()] = sha256_file(p);
    return p;
  }

  fs::path artifact_input(const std::string& name) { return input(cfg_.out_dir / name, name); }

  void write(const std::string& name, const std::string& text) {
    const fs::path p = cfg_.out_dir / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + p.string() + "'");
    out << text;
    out.close();
    if (!out) throw Error(ErrorCode::Io, "write failed for '" + p.string() + "'");
    outputs_[name] = sha256_text(text);
  }

  void record_output(const std::string& name) { outputs_[name] = sha256_file(cfg_.out_dir / name); }

  void finish() {
    json m;
    m["stage"] = name_;
    m["version"] = kVersion;
    m["seed"] = cfg_.seed;
    m["config_hash"] = sha256_text(cfg_.canonical());
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    const fs::path p = cfg_.out_dir / ("manifest_" + name_ + ".json");
    std::ofstream out(p, std::ios::binary);
    out << m.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::Io, "cannot write '" + p.string() + "'");
  }

 private:
  const PipelineConfig& cfg_;
  std::string name_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

TimestampFormat parse_timestamp_format(const std::string& s) {
  if (s == "auto") return TimestampFormat::automatic;
  if (s == "iso8601") return TimestampFormat::iso8601;
  if (s == "epoch") return TimestampFormat::epoch;
  throw Error(ErrorCode::Config, "timestamp-format must be auto, iso8601 or epoch");
}

Projection make_projection(const PipelineConfig& cfg, const TowerSet& towers) {
  if (cfg.projection == "identity") return Projection::identity();
  double lon0 = cfg.origin_lon, lat0 = cfg.origin_lat;
  if (!std::isfinite(lon0) || !std::isfinite(lat0)) {
    if (towers.empty()) throw Error(ErrorCode::EmptyInput, "no towers to derive a projection origin from");
    lon0 = lat0 = std::numeric_limits<double>::infinity();
    for (const auto& t : towers) {
      lon0 = std::min(lon0, t.lon);
      lat0 = std::min(lat0, t.lat);
    }
  }
  return Projection::equirectangular(lon0, lat0);
}

IndicatorOptions indicator_options(const PipelineConfig& cfg, const TimeZone& zone, bool direction_available) {
  IndicatorOptions o;
  o.night = NightWindow{cfg.night_start, cfg.night_end};
  o.night.validate();
  o.zone = &zone;
  o.direction_available = direction_available;
  const auto iv = parse_initiated_variant(cfg.initiated_variant);
  const auto ev = parse_entropy_variant(cfg.entropy_variant);
  const auto ew = parse_entropy_weight(cfg.entropy_weight);
  if (!iv) throw Error(ErrorCode::Config, "unknown initiated-variant '" + cfg.initiated_variant + "'");
  if (!ev) throw Error(ErrorCode::Config, "unknown entropy-variant '" + cfg.entropy_variant + "'");
  if (!ew) throw Error(ErrorCode::Config, "unknown entropy-weight '" + cfg.entropy_weight + "'");
  o.initiated = *iv;
  o.entropy = *ev;
  o.entropy_weight = *ew;
  return o;
}

ObservationWindow observation_window(const PipelineConfig& cfg, const TimeZone& zone) {
  ObservationWindow w;
  auto parse = [&](const std::string& s, const char* what) -> std::optional<Timestamp> {
    if (s.empty()) return std::nullopt;
    auto t = parse_timestamp(s, zone, TimestampFormat::iso8601);
    if (!t) throw Error(ErrorCode::Config, std::string(what) + " is not an ISO-8601 timestamp: '" + s + "'");
    return t;
  };
  w.start = parse(cfg.window_start, "window-start");
  w.end = parse(cfg.window_end, "window-end");
  return w;
}

CdrReadOptions read_options(const PipelineConfig& cfg, const TimeZone& zone, const TowerSet* towers) {
  CdrReadOptions o;
  o.schema.timestamp_format = parse_timestamp_format(cfg.timestamp_format);
  o.window = observation_window(cfg, zone);
  o.zone = &zone;
  o.towers = towers;
  o.strict = cfg.strict;
  return o;
}

std::string quarantine_csv(const std::vector<ValidationError>& log) {
  std::string s = "row,reason,detail\n";
  for (const auto& e : log) s += std::to_string(e.row) + ',' + std::string(to_string(e.reason)) + ',' + csv::escape(e.detail) + '\n';
  return s;
}

std::map<std::string, double> read_geo_districts(const fs::path& p, std::map<std::string, double>& area) {
  std::map<std::string, double> population;
  for (const auto& r : read_table(p, {"district_id", "area_m2", "population"})) {
    area[r[0]] = number(r[1], p);
    population[r[0]] = number(r[2], p);
  }
  return population;
}

std::vector<DistrictVector> attach_labels(std::vector<DistrictVector> vectors, const fs::path& labels) {
  const auto rates = read_labels(labels);
  for (auto& v : vectors) {
    auto it = rates.find(v.district_id);
    if (it != rates.end()) {
      v.unemployment_rate = it->second;
    } else {
      v.unemployment_rate.reset();
    }
  }
  return vectors;
}

json number_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Rows where every listed column and the label are present.
std::vector<std::size_t> complete_rows(const std::vector<DistrictVector>& v, const std::vector<Indicator>& inds, bool need_label) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < v.size(); ++i) {
    bool ok = !need_label || v[i].unemployment_rate.has_value();
    for (auto ind : inds) ok = ok && v[i].z[index_of(ind)].has_value();
    if (ok) rows.push_back(i);
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
  if (min_records < 1) fail("min-records must be >= 1");
  if (min_users < 1) fail("min-users must be >= 1");
  if (cv_folds < 2) fail("cv-folds must be >= 2");
  if (cv_repeats < 1) fail("cv-repeats must be >= 1");
  if (som_rows < 1 || som_cols < 1 || som_epochs < 1) fail("SOM grid and epochs must be positive");
  if (gp_restarts < 1 || gp_max_iterations < 1) fail("GP restarts and iterations must be positive");
  if (threads < 0) fail("threads must be >= 0");
  if (projection != "equirectangular" && projection != "identity") fail("projection must be equirectangular or identity");
  parse_timestamp_format(timestamp_format);
  NightWindow{night_start, night_end}.validate();
  if (group_memory_records < 1) fail("group-memory-records must be >= 1");
}

std::string PipelineConfig::canonical() const {
  std::map<std::string, std::string> kv;
  auto d = [](double v) { return csv::format_double(v); };
  kv["timezone"] = timezone;
  kv["timestamp_format"] = timestamp_format;
  kv["window_start"] = window_start;
  kv["window_end"] = window_end;
  kv["projection"] = projection;
  kv["origin_lon"] = std::isfinite(origin_lon) ? d(origin_lon) : "auto";
  kv["origin_lat"] = std::isfinite(origin_lat) ? d(origin_lat) : "auto";
  kv["night_start"] = std::to_string(night_start);
  kv["night_end"] = std::to_string(night_end);
  kv["initiated_variant"] = initiated_variant;
  kv["entropy_variant"] = entropy_variant;
  kv["entropy_weight"] = entropy_weight;
  kv["min_records"] = std::to_string(min_records);
  kv["min_users"] = std::to_string(min_users);
  kv["som_rows"] = std::to_string(som_rows);
  kv["som_cols"] = std::to_string(som_cols);
  kv["som_epochs"] = std::to_string(som_epochs);
  kv["gp_restarts"] = std::to_string(gp_restarts);
  kv["gp_max_iterations"] = std::to_string(gp_max_iterations);
  kv["cv_folds"] = std::to_string(cv_folds);
  kv["cv_repeats"] = std::to_string(cv_repeats);
  kv["seed"] = std::to_string(seed);
  kv["synth_districts"] = std::to_string(synth_districts);
  kv["synth_towers"] = std::to_string(synth_towers);
  kv["synth_users"] = std::to_string(synth_users);
  kv["synth_days"] = std::to_string(synth_days);
  kv["synth_share"] = d(synth_share);
  kv["synth_records_per_user"] = d(synth_records_per_user);
  kv["synth_district_noise"] = d(synth_district_noise);
  kv["synth_user_noise"] = d(synth_user_noise);
  for (auto ind : kAllIndicators) kv["effect_" + std::string(to_string(ind))] = d(synth_effects[index_of(ind)]);
  std::string s;
  for (const auto& [k, v] : kv) s += k + '=' + v + '\n';
  return s;
}

synth::SynthConfig PipelineConfig::synth_config() const {
  synth::SynthConfig c;
  c.seed = derive_seed(seed, "synth");
  c.n_districts = synth_districts;
  c.n_towers = synth_towers;
  c.n_users = synth_users;
  c.days = synth_days;
  c.market_share = synth_share;
  c.records_per_user = synth_records_per_user;
  c.district_noise = synth_district_noise;
  c.user_noise = synth_user_noise;
  c.effects = synth_effects;
  return c;
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view stage) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char c : stage) h = (h ^ c) * 1099511628211ull;
  std::uint64_t z = root ^ h;
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path.string() + "'");
  Sha256 h;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.finish();
}

std::string sha256_text(std::string_view text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.finish();
}

// ---------------------------------------------------------------------------

void cmd_synth(const PipelineConfig& cfg) {
  StageRun run(cfg, "synth");
  const auto sc = cfg.synth_config();
  const auto truth = synth::generate_city(sc, cfg.out_dir);
  for (const char* f : {"towers.csv", "taz.geojson", "districts.geojson", "labels.csv", "cdr.csv", "ground_truth.json"}) {
    run.record_output(f);
  }
  const fs::path dir = fs::absolute(cfg.out_dir).lexically_normal();
  std::ostringstream ini;
  ini << "# synthetic city, " << truth.users.size() << " users in " << truth.districts.size() << " districts\n";
  ini << "cdr = \"" << (dir / "cdr.csv").string() << "\"\n";
  ini << "towers = \"" << (dir / "towers.csv").string() << "\"\n";
  ini << "taz = \"" << (dir / "taz.geojson").string() << "\"\n";
  ini << "districts = \"" << (dir / "districts.geojson").string() << "\"\n";
  ini << "labels = \"" << (dir / "labels.csv").string() << "\"\n";
  ini << "timezone = \"+03:00\"\n";
  ini << "projection = \"equirectangular\"\n";
  ini << "origin-lon = " << csv::format_double(sc.origin_lon) << "\n";
  ini << "origin-lat = " << csv::format_double(sc.origin_lat) << "\n";
  ini << "seed = " << cfg.seed << "\n";
  run.write("pipeline.ini", ini.str());
  run.finish();
}

IngestReport cmd_validate(const PipelineConfig& cfg) {
  StageRun run(cfg, "validate");
  json report;
  TowerSet towers;
  const bool have_towers = !cfg.towers.empty();
  if (have_towers) {
    towers = read_towers(run.input(cfg.towers, "towers"));
  }
  const Projection proj = have_towers ? make_projection(cfg, towers) : Projection::identity();
  if (have_towers) {
    towers.project(proj);
    const auto merge = geo::merge_near_duplicate_towers(towers);
    report["towers"] = {{"count", towers.size()}, {"after_merge", merge.representatives.size()}};
  }
  if (!cfg.districts.empty()) {
    report["districts"] = read_zones(run.input(cfg.districts, "districts"), ZoneKind::district, proj).size();
  }
  if (!cfg.taz.empty()) report["taz"] = read_zones(run.input(cfg.taz, "taz"), ZoneKind::taz, proj).size();
  if (!cfg.labels.empty()) report["labels"] = read_labels(run.input(cfg.labels, "labels")).size();
  IngestReport ingest;
  if (!cfg.cdr.empty()) {
    const TimeZone zone = TimeZone::locate(cfg.timezone);
    CdrReader reader(run.input(cfg.cdr, "cdr"), read_options(cfg, zone, have_towers ? &towers : nullptr));
    CdrRecord r;
    while (reader.next(r)) {
    }
    ingest = reader.report();
    report["cdr"] = json::parse(ingest.to_json());
    run.write("quarantine.csv", quarantine_csv(reader.quarantine_log()));
  }
  run.write("validate_report.json", report.dump(2) + "\n");
  run.finish();
  return ingest;
}

void cmd_indicators(const PipelineConfig& cfg) {
  StageRun run(cfg, "indicators");
  const auto towers_path = run.input(cfg.towers, "towers");
  const auto cdr_path = run.input(cfg.cdr, "cdr");
  const TowerSet towers = read_towers(towers_path);
  const TimeZone zone = TimeZone::locate(cfg.timezone);
  CdrReader reader(cdr_path, read_options(cfg, zone, &towers));
  GroupOptions go;
  go.max_records_in_memory = cfg.group_memory_records;
  if (!cfg.spill_dir.empty()) go.spill_dir = cfg.spill_dir;
  UserGrouper grouper(go);
  CdrRecord rec;
  while (reader.next(rec)) grouper.add(std::move(rec));
  const IndicatorOptions opts = indicator_options(cfg, zone, reader.report().has_direction);
  const unsigned threads = resolve_threads(cfg.threads);

  std::string out = indicators_csv_header() + "\n";
  std::vector<std::pair<std::string, std::vector<CdrRecord>>> batch;
  auto flush = [&] {
    std::vector<std::string> rows(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
      rows[i] = indicators_csv_row(batch[i].first, compute_user_indicators(batch[i].second, opts));
    });
    for (const auto& r : rows) out += r + '\n';
    batch.clear();
  };
  grouper.finish([&](const std::string& user, std::vector<CdrRecord>& records) {
    batch.emplace_back(user, std::move(records));
    if (batch.size() >= 4096) flush();
  });
  flush();
  run.write("indicators.csv", out);
  run.write("ingest_report.json", reader.report().to_json());
  run.write("quarantine.csv", quarantine_csv(reader.quarantine_log()));
  run.finish();
}

void cmd_geo(const PipelineConfig& cfg) {
  StageRun run(cfg, "geo");
  TowerSet towers = read_towers(run.input(cfg.towers, "towers"));
  const Projection proj = make_projection(cfg, towers);
  towers.project(proj);
  const auto districts = read_zones(run.input(cfg.districts, "districts"), ZoneKind::district, proj);
  const auto tazs = read_zones(run.input(cfg.taz, "taz"), ZoneKind::taz, proj);
  if (districts.empty()) throw Error(ErrorCode::EmptyZoneList, "no districts in '" + cfg.districts.string() + "'");

  const auto w_taz = geo::areal_weights(districts, tazs);
  std::map<std::string, double> taz_pop;
  for (const auto& t : tazs) taz_pop[t.zone_id] = t.attribute("population").value_or(0.0);
  Eigen::VectorXd pops(static_cast<Eigen::Index>(w_taz.zone_ids.size()));
  for (std::size_t i = 0; i < w_taz.zone_ids.size(); ++i) pops(static_cast<Eigen::Index>(i)) = taz_pop.at(w_taz.zone_ids[i]);
  const auto est = geo::interpolate_population(w_taz, pops);

  Box env = districts.front().bbox;
  for (const auto& z : districts) bg::expand(env, z.bbox);
  for (const auto& z : tazs) bg::expand(env, z.bbox);
  const auto bound = make_rectangle_zone("bound", ZoneKind::district, env.min_corner().x(), env.min_corner().y(),
                                         env.max_corner().x(), env.max_corner().y());
  const auto merge = geo::merge_near_duplicate_towers(towers);
  const auto partition = geo::build_voronoi(merge.representatives, bound);
  const auto w_vor = geo::areal_weights(districts, partition);

  std::string gd = "district_id,area_m2,population,coverage\n";
  for (std::size_t d = 0; d < w_taz.district_ids.size(); ++d) {
    const auto& id = w_taz.district_ids[d];
    gd += csv::escape(id) + ',' + csv::format_double(w_taz.district_area(static_cast<Eigen::Index>(d))) + ',' +
          csv::format_double(est.population.at(id)) + ',' + csv::format_double(est.coverage.at(id)) + '\n';
  }
  run.write("geo_districts.csv", gd);
  run.write("voronoi.geojson", geo::voronoi_geojson(partition, proj));
  run.write("weights.csv", geo::weights_csv(w_taz));
  run.write("voronoi_weights.csv", geo::weights_csv(w_vor));
  run.finish();
}

void cmd_aggregate(const PipelineConfig& cfg) {
  StageRun run(cfg, "aggregate");
  const auto ind_path = run.artifact_input("indicators.csv");
  const auto geo_path = run.artifact_input("geo_districts.csv");
  const auto vw_path = run.artifact_input("voronoi_weights.csv");
  TowerSet towers = read_towers(run.input(cfg.towers, "towers"));
  const Projection proj = make_projection(cfg, towers);
  towers.project(proj);
  const auto districts = read_zones(run.input(cfg.districts, "districts"), ZoneKind::district, proj);
  const auto merge = geo::merge_near_duplicate_towers(towers);

  // Users: homes per tower count every user with a home; district means use
  // users meeting the record minimum.
  std::map<std::string, double> homes;
  std::vector<std::pair<std::string, UserIndicators>> resident;
  {
    csv::LineReader lines(ind_path);
    std::string line;
    if (!lines.next(line)) throw Error(ErrorCode::FatalSchema, ind_path.string() + ": missing header row");
    while (lines.next(line)) {
      if (line.empty()) continue;
      auto [user, u] = parse_indicators_csv_row(line);
      if (!u.home_tower) continue;
      auto alias = merge.alias.find(*u.home_tower);
      if (alias != merge.alias.end()) homes[alias->second] += 1.0;
      if (u.n_records < cfg.min_records) continue;
      auto district = assign_home_district(*u.home_tower, towers, districts);
      if (district) resident.emplace_back(std::move(*district), std::move(u));
    }
  }
  auto all = aggregate_district(resident);

  std::map<std::string, double> area;
  const auto population = read_geo_districts(geo_path, area);
  std::map<std::string, double> weighted_homes;
  for (const auto& r : read_table(vw_path, {"district_id", "zone_id", "weight"})) {
    auto h = homes.find(r[1]);
    if (h != homes.end()) weighted_homes[r[0]] += number(r[2], vw_path) * h->second;
  }

  std::map<std::string, std::int64_t> counts;
  std::vector<DistrictVector> modeled;
  for (auto& v : all) {
    counts[v.district_id] = v.user_count;
    if (auto a = area.find(v.district_id); a != area.end()) v.area_m2 = a->second;
    if (auto p = population.find(v.district_id); p != population.end()) v.population = p->second;
    if (v.population > 0) v.penetration = weighted_homes[v.district_id] / v.population;
    if (v.user_count >= cfg.min_users) modeled.push_back(std::move(v));
  }
  std::string excluded = "district_id,user_count,reason\n";
  std::set<std::string> kept;
  for (const auto& v : modeled) kept.insert(v.district_id);
  for (const auto& z : districts) {
    if (kept.count(z.zone_id)) continue;
    excluded += csv::escape(z.zone_id) + ',' + std::to_string(counts[z.zone_id]) + ",min_users\n";
  }

  if (!cfg.labels.empty()) modeled = attach_labels(std::move(modeled), run.input(cfg.labels, "labels"));
  standardize(modeled);

  std::size_t labeled = 0;
  for (const auto& v : modeled) labeled += v.unemployment_rate ? 1 : 0;
  const auto correlations = labeled >= 3 ? correlate(modeled) : std::vector<CorrelationResult>{};

  std::string ecdf = "series,value,ecdf\n";
  auto add_series = [&](const std::string& name, std::vector<double> values) {
    if (values.empty()) return;
    for (const auto& [x, f] : stats::Ecdf<double>(std::move(values)).steps()) {
      ecdf += name + ',' + csv::format_double(x) + ',' + csv::format_double(f) + '\n';
    }
  };
  for (auto ind : kAllIndicators) {
    std::vector<double> vals;
    for (const auto& v : modeled) {
      if (v.mean[index_of(ind)]) vals.push_back(*v.mean[index_of(ind)]);
    }
    add_series(std::string(to_string(ind)), std::move(vals));
  }
  {
    std::vector<double> vals;
    for (const auto& v : modeled) {
      if (v.unemployment_rate) vals.push_back(*v.unemployment_rate);
    }
    add_series("unemployment_rate", std::move(vals));
  }

  std::string scaling = "relation,exponent,prefactor,exponent_ci_low,exponent_ci_high,r2,n\n";
  auto add_scaling = [&](const std::string& name, auto value) {
    std::vector<double> xs, ys;
    for (const auto& v : modeled) {
      const double y = value(v);
      if (v.population > 0 && y > 0) {
        xs.push_back(v.population);
        ys.push_back(y);
      }
    }
    if (xs.size() < 3) return;
    const Eigen::Map<const Eigen::VectorXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Eigen::Map<const Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
    const auto f = stats::fit_scaling(x, y);
    scaling += name + ',' + csv::format_double(f.exponent) + ',' + csv::format_double(f.prefactor) + ',' +
               csv::format_double(f.exponent_ci_low) + ',' + csv::format_double(f.exponent_ci_high) + ',' +
               csv::format_double(f.r2) + ',' + std::to_string(f.n) + '\n';
  };
  add_scaling("homes_vs_population", [&](const DistrictVector& v) { return weighted_homes[v.district_id]; });
  add_scaling("users_vs_population", [](const DistrictVector& v) { return static_cast<double>(v.user_count); });

  run.write("districts.csv", districts_csv(modeled));
  run.write("excluded_districts.csv", excluded);
  run.write("correlations.csv", correlations_csv(correlations));
  run.write("ecdf.csv", ecdf);
  run.write("scaling.csv", scaling);
  run.finish();
}

void cmd_som(const PipelineConfig& cfg) {
  StageRun run(cfg, "som");
  auto vectors = parse_districts_csv(read_text(run.artifact_input("districts.csv")));
  const std::vector<Indicator> inds(kAllIndicators.begin(), kAllIndicators.end());
  const auto rows = complete_rows(vectors, inds, false);
  if (rows.empty()) throw Error(ErrorCode::InsufficientData, "som: no district has every indicator");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(inds.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < inds.size(); ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *vectors[rows[r]].z[c];
  }
  ml::SomParams params;
  params.rows = cfg.som_rows;
  params.cols = cfg.som_cols;
  params.epochs = cfg.som_epochs;
  const std::uint64_t seed = derive_seed(cfg.seed, "som");
  const auto model = ml::som_train(x, params, seed);

  json j;
  j["grid"] = {{"rows", params.rows}, {"cols", params.cols}};
  j["params"] = {{"epochs", params.epochs},
                 {"learning_rate_start", params.learning_rate_start},
                 {"learning_rate_end", params.learning_rate_end},
                 {"radius_start", params.initial_radius()},
                 {"radius_end", params.radius_end},
                 {"seed", seed}};
  std::vector<std::string> columns;
  for (auto ind : inds) columns.emplace_back(to_string(ind));
  j["columns"] = columns;
  json cb = json::array();
  for (Eigen::Index k = 0; k < model.codebook.rows(); ++k) {
    json r = json::array();
    for (Eigen::Index c = 0; c < model.codebook.cols(); ++c) r.push_back(model.codebook(k, c));
    cb.push_back(r);
  }
  j["codebooks"] = cb;
  j["quantization_error"] = model.quantization_error;
  json assign = json::array();
  std::vector<Eigen::Index> labeled_nodes;
  std::vector<double> target;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& v = vectors[rows[r]];
    assign.push_back({{"district_id", v.district_id}, {"node", model.assignment[r]}});
    if (v.unemployment_rate) {
      labeled_nodes.push_back(model.assignment[r]);
      target.push_back(*v.unemployment_rate);
    }
  }
  j["assignments"] = assign;
  if (!target.empty()) {
    const auto c = ml::cluster_contrast<double>(labeled_nodes, target, params.nodes());
    json nodes = json::array();
    for (const auto& n : c.nodes) nodes.push_back({{"node", n.node}, {"count", n.count}, {"mean_target", number_or_null(n.mean_target)}});
    j["nodes"] = nodes;
    j["contrast"] = {{"low_nodes", c.low_group}, {"high_nodes", c.high_group}, {"low_ecdf", c.low_ecdf}, {"high_ecdf", c.high_ecdf}};
  }
  run.write("som.json", j.dump(2) + "\n");
  run.finish();
}

void cmd_regress(const PipelineConfig& cfg) {
  StageRun run(cfg, "regress");
  const auto labels_path = run.input(cfg.labels, "labels");
  auto vectors = attach_labels(parse_districts_csv(read_text(run.artifact_input("districts.csv"))), labels_path);

  std::vector<std::string> zero_rate;
  for (const auto& v : vectors) {
    if (v.unemployment_rate && !(*v.unemployment_rate > 0)) zero_rate.push_back(v.district_id);
  }
  struct Spec {
    std::string name;
    std::vector<Indicator> indicators;
  };
  std::vector<Spec> specs;
  for (auto ind : kAllIndicators) specs.push_back({std::string(to_string(ind)), {ind}});
  specs.push_back({"all", std::vector<Indicator>(kAllIndicators.begin(), kAllIndicators.end())});
  const std::vector<std::string> controls = {"area", "population", "penetration"};

  json models = json::array();
  std::vector<std::pair<std::string, std::optional<ml::OlsFit<double>>>> fits;
  std::vector<std::vector<std::string>> fit_columns;
  for (const auto& spec : specs) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const auto& v = vectors[i];
      bool ok = v.unemployment_rate && *v.unemployment_rate > 0 && v.penetration.has_value();
      for (auto ind : spec.indicators) ok = ok && v.mean[index_of(ind)].has_value();
      if (ok) rows.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto p = static_cast<Eigen::Index>(spec.indicators.size() + controls.size());
    Eigen::MatrixXd raw(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      const auto& v = vectors[rows[static_cast<std::size_t>(r)]];
      Eigen::Index c = 0;
      for (auto ind : spec.indicators) raw(r, c++) = *v.mean[index_of(ind)];
      raw(r, c++) = v.area_m2;
      raw(r, c++) = v.population;
      raw(r, c++) = *v.penetration;
      y(r) = std::log(*v.unemployment_rate);
    }
    std::vector<std::string> columns;
    for (auto ind : spec.indicators) columns.emplace_back(to_string(ind));
    columns.insert(columns.end(), controls.begin(), controls.end());
    json m{{"name", spec.name}, {"columns", columns}, {"n", n}};
    std::optional<ml::OlsFit<double>> fit;
    try {
      const auto xs = stats::standardize_columns(raw);
      const auto ys = stats::standardize_columns(y);
      fit = ml::ols_fit(xs.z, ys.z.col(0));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularDesign && e.code() != ErrorCode::InsufficientData) throw;
      m["error"] = std::string(to_string(e.code())) + ": " + e.what();
    }
    if (fit) {
      json coef = json::object();
      for (Eigen::Index k = 0; k <= p; ++k) {
        const std::string name = k == 0 ? "intercept" : columns[static_cast<std::size_t>(k - 1)];
        coef[name] = {{"beta", fit->coefficients(k)},
                      {"se", fit->std_errors(k)},
                      {"t", fit->t_values(k)},
                      {"p", fit->p_values(k)}};
      }
      m["coefficients"] = coef;
      m["r2"] = fit->r2;
      m["adj_r2"] = fit->adj_r2;
      m["bic"] = fit->bic;
      m["bic_loglik"] = fit->bic_loglik;
    }
    models.push_back(m);
    fits.emplace_back(spec.name, fit);
    fit_columns.push_back(columns);
  }

  json j{{"dependent", "standardized log(unemployment_rate)"}, {"excluded_zero_rate", zero_rate}, {"models", models}};
  run.write("ols.json", j.dump(2) + "\n");

  // Text table: one column per model, coefficient with stars above its
  // standard error.
  std::vector<std::string> rows_order(kIndicatorCount);
  for (std::size_t i = 0; i < kIndicatorCount; ++i) rows_order[i] = std::string(to_string(kAllIndicators[i]));
  rows_order.insert(rows_order.end(), controls.begin(), controls.end());
  rows_order.push_back("intercept");
  const int label_w = 26, col_w = 12;
  std::ostringstream t;
  auto cell = [&](const std::string& s) {
    std::string c = s;
    if (static_cast<int>(c.size()) < col_w) c = std::string(static_cast<std::size_t>(col_w) - c.size(), ' ') + c;
    t << c;
  };
  auto fmt = [](double v, int prec) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(prec);
    s << v;
    return s.str();
  };
  t << "Dependent variable: standardized log(unemployment rate)\n";
  t << std::string(static_cast<std::size_t>(label_w), ' ');
  for (std::size_t m = 0; m < fits.size(); ++m) cell("(" + std::to_string(m + 1) + ")");
  t << '\n';
  for (const auto& var : rows_order) {
    std::string coef_line, se_line;
    t << var << std::string(static_cast<std::size_t>(std::max<int>(1, label_w - static_cast<int>(var.size()))), ' ');
    std::vector<std::string> ses;
    for (std::size_t m = 0; m < fits.size(); ++m) {
      const auto& fit = fits[m].second;
      const auto& cols = fit_columns[m];
      Eigen::Index k = -1;
      if (var == "intercept") {
        k = 0;
      } else if (auto it = std::find(cols.begin(), cols.end(), var); it != cols.end()) {
        k = 1 + (it - cols.begin());
      }
      if (!fit || k < 0) {
        cell("");
        ses.emplace_back("");
        continue;
      }
      cell(fmt(fit->coefficients(k), 3) + ml::significance_stars(fit->p_values(k)));
      ses.push_back("(" + fmt(fit->std_errors(k), 3) + ")");
    }
    t << '\n' << std::string(static_cast<std::size_t>(label_w), ' ');
    for (const auto& s : ses) cell(s);
    t << '\n';
  }
  auto stat_row = [&](const std::string& name, auto get) {
    t << name << std::string(static_cast<std::size_t>(label_w - static_cast<int>(name.size())), ' ');
    for (const auto& entry : fits) cell(entry.second ? get(*entry.second) : std::string());
    t << '\n';
  };
  stat_row("Observations", [](const ml::OlsFit<double>& f) { return std::to_string(f.n); });
  stat_row("R2", [&](const ml::OlsFit<double>& f) { return fmt(f.r2, 3); });
  stat_row("Adjusted R2", [&](const ml::OlsFit<double>& f) { return fmt(f.adj_r2, 3); });
  stat_row("BIC", [&](const ml::OlsFit<double>& f) { return fmt(f.bic, 2); });
  stat_row("BIC (log-likelihood)", [&](const ml::OlsFit<double>& f) { return fmt(f.bic_loglik, 2); });
  t << "Note: *p<0.1; **p<0.05; ***p<0.01. Standard errors in parentheses.\n";
  run.write("ols.txt", t.str());
  run.finish();
}

void cmd_predict(const PipelineConfig& cfg) {
  StageRun run(cfg, "predict");
  const auto labels_path = run.input(cfg.labels, "labels");
  auto vectors = attach_labels(parse_districts_csv(read_text(run.artifact_input("districts.csv"))), labels_path);
  const std::vector<Indicator> full(kAllIndicators.begin(), kAllIndicators.end());
  const auto rows = complete_rows(vectors, full, true);
  if (static_cast<int>(rows.size()) < cfg.cv_folds) {
    throw Error(ErrorCode::InsufficientData, "predict: " + std::to_string(rows.size()) + " labelled districts for " +
                                                 std::to_string(cfg.cv_folds) + " folds");
  }
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) y(static_cast<Eigen::Index>(r)) = *vectors[rows[r]].unemployment_rate;

  ml::CvConfig cv;
  cv.folds = cfg.cv_folds;
  cv.repeats = cfg.cv_repeats;
  cv.seed = derive_seed(cfg.seed, "cv");
  cv.threads = cfg.threads;
  cv.gp.restarts = cfg.gp_restarts;
  cv.gp.max_iterations = cfg.gp_max_iterations;

  struct Category {
    std::string name;
    std::vector<Indicator> indicators;
  };
  const std::vector<Category> categories = {{"activity", indicators_in(IndicatorCategory::activity)},
                                            {"social", indicators_in(IndicatorCategory::social)},
                                            {"spatial", indicators_in(IndicatorCategory::spatial)},
                                            {"full", full}};
  json cats = json::array();
  std::string predictions = "district_id,observed,predicted,variance\n";
  for (const auto& cat : categories) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cat.indicators.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cat.indicators.size(); ++c) {
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *vectors[rows[r]].z[index_of(cat.indicators[c])];
      }
    }
    const auto rep = ml::cross_validate(x, y, cv, cat.name);
    std::vector<std::string> names;
    for (auto ind : cat.indicators) names.emplace_back(to_string(ind));
    cats.push_back({{"category", cat.name},
                    {"indicators", names},
                    {"mean_r2", rep.mean_r2},
                    {"mean_r2_floored", rep.mean_r2_floored},
                    {"ci95", {rep.ci_low, rep.ci_high}},
                    {"repeat_r2", rep.repeat_r2},
                    {"fold_r2", rep.fold_r2},
                    {"oof_r", rep.oof_r}});
    if (cat.name == "full") {
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(r);
        predictions += csv::escape(vectors[rows[r]].district_id) + ',' + csv::format_double(y(i)) + ',' +
                       csv::format_double(rep.oof_mean(i)) + ',' + csv::format_double(rep.oof_variance(i)) + '\n';
      }
    }
  }
  json j{{"target", "unemployment_rate"},
         {"folds", cv.folds},
         {"repeats", cv.repeats},
         {"seed", cv.seed},
         {"n", rows.size()},
         {"categories", cats}};
  run.write("cv_report.json", j.dump(2) + "\n");
  run.write("predictions.csv", predictions);
  run.finish();
}

void cmd_run_all(const PipelineConfig& cfg) {
  cmd_indicators(cfg);
  cmd_geo(cfg);
  cmd_aggregate(cfg);
  cmd_som(cfg);
  cmd_regress(cfg);
  cmd_predict(cfg);
}

}  // namespace cdrsig::pipeline
