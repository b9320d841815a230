#include "cdrsig/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "cdrsig/csv.hpp"
#include "cdrsig/ingest.hpp"
#include "cdrsig/time.hpp"

namespace cdrsig::synth {
namespace {

using json = nlohmann::json;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::string padded(char prefix, std::size_t i, std::size_t count, std::size_t min_width) {
  const std::size_t width = std::max(min_width, std::to_string(count).size());
  std::string digits = std::to_string(i);
  return prefix + std::string(width - digits.size(), '0') + digits;
}

// Splits `total` into integers proportional to `weights` by largest remainder.
std::vector<std::int64_t> apportion(const std::vector<double>& weights, std::int64_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::int64_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::int64_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::int64_t>(std::floor(exact));
    used += out[i];
    rem.emplace_back(exact - static_cast<double>(out[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[rem[k % rem.size()].second];
  return out;
}

double overlap_1d(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

json rectangle_feature(const Projection& proj, double x0, double y0, double x1, double y1, json props) {
  auto ll = [&](double x, double y) {
    const auto [lon, lat] = proj.inverse(x, y);
    return json::array({lon, lat});
  };
  json ring = json::array({ll(x0, y0), ll(x1, y0), ll(x1, y1), ll(x0, y1), ll(x0, y0)});
  return json{{"type", "Feature"},
              {"properties", std::move(props)},
              {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

json behaviour_json(const Behaviour& b) {
  return json{{"record_rate", b.record_rate},         {"p_night", b.p_night},
              {"duration_mu", b.duration_mu},         {"p_home", b.p_home},
              {"visit_rate", b.visit_rate},           {"ipc_target", b.ipc_target},
              {"entropy_target", b.entropy_target}, {"out_only_share", b.out_only_share},
              {"balance_target", b.balance_target}};
}

Behaviour behaviour_from_json(const json& j) {
  Behaviour b;
  b.record_rate = j.at("record_rate");
  b.p_night = j.at("p_night");
  b.duration_mu = j.at("duration_mu");
  b.p_home = j.at("p_home");
  b.visit_rate = j.at("visit_rate");
  b.ipc_target = j.at("ipc_target");
  b.entropy_target = j.at("entropy_target");
  b.out_only_share = j.at("out_only_share");
  b.balance_target = j.at("balance_target");
  return b;
}

json config_json(const SynthConfig& c) {
  json effects = json::object();
  for (auto ind : kAllIndicators) effects[std::string(to_string(ind))] = c.effects[index_of(ind)];
  return json{{"seed", c.seed},
              {"n_districts", c.n_districts},
              {"n_towers", c.n_towers},
              {"n_users", c.n_users},
              {"days", c.days},
              {"width_m", c.width_m},
              {"height_m", c.height_m},
              {"taz_per_district", c.taz_per_district},
              {"market_share", c.market_share},
              {"share_spread", c.share_spread},
              {"base_unemployment", c.base_unemployment},
              {"unemployment_scale", c.unemployment_scale},
              {"effects", effects},
              {"district_noise", c.district_noise},
              {"user_noise", c.user_noise},
              {"records_per_user", c.records_per_user},
              {"origin_lon", c.origin_lon},
              {"origin_lat", c.origin_lat},
              {"start_date", {c.start_year, c.start_month, c.start_day}},
              {"utc_offset_s", c.utc_offset_s}};
}

SynthConfig config_from_json(const json& j) {
  SynthConfig c;
  c.seed = j.at("seed");
  c.n_districts = j.at("n_districts");
  c.n_towers = j.at("n_towers");
  c.n_users = j.at("n_users");
  c.days = j.at("days");
  c.width_m = j.at("width_m");
  c.height_m = j.at("height_m");
  c.taz_per_district = j.at("taz_per_district");
  c.market_share = j.at("market_share");
  c.share_spread = j.at("share_spread");
  c.base_unemployment = j.at("base_unemployment");
  c.unemployment_scale = j.at("unemployment_scale");
  for (auto ind : kAllIndicators) c.effects[index_of(ind)] = j.at("effects").at(std::string(to_string(ind)));
  c.district_noise = j.at("district_noise");
  c.user_noise = j.at("user_noise");
  c.records_per_user = j.at("records_per_user");
  c.origin_lon = j.at("origin_lon");
  c.origin_lat = j.at("origin_lat");
  c.start_year = j.at("start_date").at(0);
  c.start_month = j.at("start_date").at(1);
  c.start_day = j.at("start_date").at(2);
  c.utc_offset_s = j.at("utc_offset_s");
  return c;
}

struct PlannedRecord {
  ActivityType type = ActivityType::other;
  bool night = false;
  std::size_t tower = 0;
  std::int64_t local_s = 0;
  std::int64_t duration = 0;
  int contact = -1;
  Direction direction = Direction::outgoing;
};

// Splits `total` interactions over `contacts` (each at least one) with
// weights proportional to (rank+1)^-gamma, gamma chosen by bisection so the
// normalized Shannon entropy of the volumes is as close to `target` as the
// integer split allows.
std::vector<std::int64_t> entropy_matched_volumes(std::int64_t total, std::int64_t contacts, double target) {
  const auto k = static_cast<std::size_t>(contacts);
  auto split = [&](double gamma) {
    std::vector<double> w(k);
    for (std::size_t c = 0; c < k; ++c) w[c] = std::pow(double(c + 1), -gamma);
    const double sum = std::accumulate(w.begin(), w.end(), 0.0);
    const double extra = double(total - contacts);
    std::vector<std::int64_t> v(k, 1);
    std::vector<std::pair<double, std::size_t>> remainder(k);
    std::int64_t used = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double share = extra * w[c] / sum;
      const auto whole = static_cast<std::int64_t>(std::floor(share));
      v[c] += whole;
      used += whole;
      remainder[c] = {share - double(whole), c};
    }
    std::stable_sort(remainder.begin(), remainder.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::int64_t i = 0; i < total - contacts - used; ++i) ++v[remainder[static_cast<std::size_t>(i)].second];
    return v;
  };
  auto entropy = [&](const std::vector<std::int64_t>& v) {
    double h = 0.0;
    for (auto x : v) {
      const double p = double(x) / double(total);
      h -= p * std::log(p);
    }
    return h / std::log(double(k));
  };
  if (k < 2) return split(0.0);
  double lo = 0.0, hi = 30.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (entropy(split(mid)) > target ? lo : hi) = mid;
  }
  return split(0.5 * (lo + hi));
}

}  // namespace

EffectVector default_effects() {
  EffectVector e{};
  e[index_of(Indicator::n_records)] = 0.5;
  e[index_of(Indicator::pct_night_calls)] = 0.8;
  e[index_of(Indicator::mean_call_duration_s)] = 0.3;
  e[index_of(Indicator::pct_initiated)] = -0.5;
  e[index_of(Indicator::balance_of_contacts)] = 0.0;
  e[index_of(Indicator::social_entropy)] = -0.5;
  e[index_of(Indicator::interactions_per_contact)] = 0.4;
  e[index_of(Indicator::pct_at_home)] = 0.5;
  e[index_of(Indicator::visited_locations)] = 0.3;
  return e;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, "synth config: " + m); };
  if (n_districts < 1) fail("n_districts must be >= 1");
  if (n_towers < n_districts) fail("n_towers must be >= n_districts (one tower per district)");
  if (n_users < 1) fail("n_users must be >= 1");
  if (days < 1) fail("days must be >= 1");
  if (taz_per_district < 1) fail("taz_per_district must be >= 1");
  if (!(width_m > 0) || !(height_m > 0)) fail("city extent must be positive");
  if (!(market_share > 0) || market_share > 1) fail("market_share must be in (0, 1]");
  if (!(base_unemployment > 0) || !(base_unemployment < 1)) fail("base_unemployment must be in (0, 1)");
  if (!(share_spread >= 0) || !(district_noise >= 0) || !(user_noise >= 0)) fail("noise scales must be >= 0");
  if (!(records_per_user > 0)) fail("records_per_user must be positive");
  if (!std::isfinite(unemployment_scale)) fail("unemployment_scale must be finite");
  for (double e : effects) {
    if (!std::isfinite(e)) fail("effects must be finite");
  }
  if (!std::chrono::year_month_day{std::chrono::year{start_year}, std::chrono::month{start_month},
                                   std::chrono::day{start_day}}
           .ok()) {
    fail("invalid start date");
  }
}

Behaviour behaviour_from_scores(const EffectVector& v, double records_per_user) {
  auto s = [&](Indicator ind) { return v[index_of(ind)]; };
  Behaviour b;
  b.record_rate = records_per_user * std::exp(0.35 * s(Indicator::n_records));
  b.p_night = logistic(logit(0.3) + 0.6 * s(Indicator::pct_night_calls));
  b.duration_mu = std::log(90.0) + 0.35 * s(Indicator::mean_call_duration_s);
  b.p_home = 0.3 + 0.55 * logistic(0.8 * s(Indicator::pct_at_home));
  b.visit_rate = 3.0 * std::exp(0.4 * s(Indicator::visited_locations));
  b.ipc_target = 6.0 * std::exp(0.35 * s(Indicator::interactions_per_contact));
  b.entropy_target = 0.6 + 0.4 * logistic(logit(0.7) + 0.8 * s(Indicator::social_entropy));
  b.out_only_share = 0.15 - 0.06 * std::tanh(0.7 * s(Indicator::pct_initiated));
  b.balance_target = 0.5 + 0.15 * std::tanh(0.7 * s(Indicator::balance_of_contacts));
  return b;
}

std::string GroundTruth::to_json() const {
  json j;
  j["config"] = config_json(config);
  j["total_population"] = total_population;
  json ds = json::array();
  for (const auto& d : districts) {
    json shift = json::object();
    for (auto ind : kAllIndicators) shift[std::string(to_string(ind))] = d.shift[index_of(ind)];
    ds.push_back({{"id", d.id},
                  {"rect", {d.x0, d.y0, d.x1, d.y1}},
                  {"population", d.population},
                  {"share", d.share},
                  {"latent", d.latent},
                  {"unemployment_rate", d.unemployment_rate},
                  {"shift", shift},
                  {"users", d.users}});
  }
  j["districts"] = std::move(ds);
  json ts = json::array();
  for (const auto& t : tazs) ts.push_back({{"id", t.id}, {"rect", {t.x0, t.y0, t.x1, t.y1}}, {"population", t.population}});
  j["tazs"] = std::move(ts);
  json tw = json::array();
  for (const auto& t : towers) tw.push_back({{"id", t.id}, {"lon", t.lon}, {"lat", t.lat}, {"x", t.x}, {"y", t.y}});
  j["towers"] = std::move(tw);
  json us = json::array();
  for (const auto& u : users) {
    us.push_back({{"id", u.id},
                  {"home_district", u.home_district},
                  {"home_tower", u.home_tower},
                  {"n_records", u.n_records},
                  {"behaviour", behaviour_json(u.behaviour)}});
  }
  j["users"] = std::move(us);
  return j.dump(1) + "\n";
}

GroundTruth GroundTruth::from_json(const std::string& text) {
  const json j = json::parse(text);
  GroundTruth g;
  g.config = config_from_json(j.at("config"));
  g.total_population = j.at("total_population");
  for (const auto& d : j.at("districts")) {
    DistrictTruth t;
    t.id = d.at("id");
    t.x0 = d.at("rect").at(0);
    t.y0 = d.at("rect").at(1);
    t.x1 = d.at("rect").at(2);
    t.y1 = d.at("rect").at(3);
    t.population = d.at("population");
    t.share = d.at("share");
    t.latent = d.at("latent");
    t.unemployment_rate = d.at("unemployment_rate");
    for (auto ind : kAllIndicators) t.shift[index_of(ind)] = d.at("shift").at(std::string(to_string(ind)));
    t.users = d.at("users");
    g.districts.push_back(std::move(t));
  }
  for (const auto& z : j.at("tazs")) {
    g.tazs.push_back({z.at("id"), z.at("rect").at(0), z.at("rect").at(1), z.at("rect").at(2), z.at("rect").at(3),
                      z.at("population")});
  }
  for (const auto& t : j.at("towers")) g.towers.push_back({t.at("id"), t.at("lon"), t.at("lat"), t.at("x"), t.at("y")});
  for (const auto& u : j.at("users")) {
    g.users.push_back({u.at("id"), u.at("home_district"), u.at("home_tower"), u.at("n_records"),
                       behaviour_from_json(u.at("behaviour"))});
  }
  return g;
}

GroundTruth GroundTruth::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "ground truth not found: '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return from_json(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FatalSchema, path.string() + ": " + e.what());
  }
}

GroundTruth generate_city(const SynthConfig& cfg, const std::filesystem::path& out_dir, const CityFiles& names) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  GroundTruth g;
  g.config = cfg;
  const Projection proj = Projection::equirectangular(cfg.origin_lon, cfg.origin_lat);
  // Planar value a coordinate takes after being written as lon/lat and read back.
  auto rt_x = [&](double x) { return proj.forward(proj.inverse(x, 0.0).first, cfg.origin_lat).x(); };
  auto rt_y = [&](double y) { return proj.forward(cfg.origin_lon, proj.inverse(0.0, y).second).y(); };

  std::mt19937_64 rng(splitmix(cfg.seed));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Districts: rows of irregular height, each cut into irregular columns.
  const int n = cfg.n_districts;
  const int rows = std::clamp(static_cast<int>(std::lround(std::sqrt(double(n)))), 1, n);
  std::vector<double> row_w(static_cast<std::size_t>(rows));
  for (auto& w : row_w) w = 0.6 + 0.8 * u01(rng);
  const double row_sum = std::accumulate(row_w.begin(), row_w.end(), 0.0);
  double y = 0.0;
  int made = 0;
  for (int r = 0; r < rows; ++r) {
    const double y0 = y, y1 = r + 1 == rows ? cfg.height_m : y + cfg.height_m * row_w[static_cast<std::size_t>(r)] / row_sum;
    y = y1;
    const int cols = n / rows + (r < n % rows ? 1 : 0);
    std::vector<double> col_w(static_cast<std::size_t>(cols));
    for (auto& w : col_w) w = 0.6 + 0.8 * u01(rng);
    const double col_sum = std::accumulate(col_w.begin(), col_w.end(), 0.0);
    double x = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double x0 = x, x1 = c + 1 == cols ? cfg.width_m : x + cfg.width_m * col_w[static_cast<std::size_t>(c)] / col_sum;
      x = x1;
      DistrictTruth d;
      d.id = padded('d', static_cast<std::size_t>(++made), static_cast<std::size_t>(n), 3);
      d.x0 = rt_x(x0);
      d.x1 = rt_x(x1);
      d.y0 = rt_y(y0);
      d.y1 = rt_y(y1);
      g.districts.push_back(std::move(d));
    }
  }

  // TAZs: a regular finer grid with lognormal populations.
  const int side = static_cast<int>(std::ceil(std::sqrt(double(n) * cfg.taz_per_district)));
  std::lognormal_distribution<double> taz_pop(0.0, 0.5);
  std::vector<double> taz_w;
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      TazTruth t;
      t.id = padded('z', static_cast<std::size_t>(r * side + c + 1), static_cast<std::size_t>(side * side), 4);
      t.x0 = rt_x(cfg.width_m * c / side);
      t.x1 = rt_x(c + 1 == side ? cfg.width_m : cfg.width_m * (c + 1) / side);
      t.y0 = rt_y(cfg.height_m * r / side);
      t.y1 = rt_y(r + 1 == side ? cfg.height_m : cfg.height_m * (r + 1) / side);
      g.tazs.push_back(std::move(t));
      taz_w.push_back(taz_pop(rng));
    }
  }
  const auto persons = static_cast<std::int64_t>(std::llround(cfg.n_users / cfg.market_share));
  const auto taz_people = apportion(taz_w, persons);
  for (std::size_t i = 0; i < g.tazs.size(); ++i) g.tazs[i].population = static_cast<double>(taz_people[i]);
  g.total_population = static_cast<double>(persons);

  // District truth: exact population, subscriber share, latent factor.
  std::vector<double> user_w;
  const double base_logit = logit(cfg.base_unemployment);
  for (auto& d : g.districts) {
    for (const auto& t : g.tazs) {
      const double a = overlap_1d(d.x0, d.x1, t.x0, t.x1) * overlap_1d(d.y0, d.y1, t.y0, t.y1);
      if (a > 0) d.population += t.population * a / ((t.x1 - t.x0) * (t.y1 - t.y0));
    }
    d.share = cfg.market_share * std::exp(cfg.share_spread * normal(rng));
    d.latent = normal(rng);
    d.unemployment_rate = logistic(base_logit + cfg.unemployment_scale * d.latent);
    for (std::size_t k = 0; k < kIndicatorCount; ++k) d.shift[k] = cfg.effects[k] * d.latent + cfg.district_noise * normal(rng);
    user_w.push_back(d.population * d.share);
  }
  const auto users_per_district = apportion(user_w, cfg.n_users);

  // Towers: one strictly inside each district, the rest uniform.
  std::vector<Point> sites;
  auto far_enough = [&](const Point& p) {
    for (const auto& q : sites) {
      if (bg::distance(p, q) < 1.0) return false;
    }
    return true;
  };
  for (int i = 0; i < cfg.n_towers; ++i) {
    Point p;
    do {
      if (i < n) {
        const auto& d = g.districts[static_cast<std::size_t>(i)];
        p = Point(d.x0 + (0.05 + 0.9 * u01(rng)) * (d.x1 - d.x0), d.y0 + (0.05 + 0.9 * u01(rng)) * (d.y1 - d.y0));
      } else {
        p = Point(u01(rng) * cfg.width_m, u01(rng) * cfg.height_m);
      }
    } while (!far_enough(p));
    sites.push_back(p);
  }
  std::vector<std::vector<std::size_t>> towers_in(g.districts.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    TowerTruth t;
    t.id = padded('t', i + 1, sites.size(), 4);
    std::tie(t.lon, t.lat) = proj.inverse(sites[i].x(), sites[i].y());
    const Point back = proj.forward(t.lon, t.lat);
    t.x = back.x();
    t.y = back.y();
    for (std::size_t d = 0; d < g.districts.size(); ++d) {
      const auto& dd = g.districts[d];
      if (t.x >= dd.x0 && t.x <= dd.x1 && t.y >= dd.y0 && t.y <= dd.y1) {
        towers_in[d].push_back(i);
        break;
      }
    }
    g.towers.push_back(std::move(t));
  }
  std::map<std::size_t, std::vector<std::size_t>> nearest_cache;
  auto nearest = [&](std::size_t home) -> const std::vector<std::size_t>& {
    auto it = nearest_cache.find(home);
    if (it != nearest_cache.end()) return it->second;
    std::vector<std::size_t> order(g.towers.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto dist2 = [&](std::size_t j) {
      const double dx = g.towers[j].x - g.towers[home].x, dy = g.towers[j].y - g.towers[home].y;
      return dx * dx + dy * dy;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist2(a) < dist2(b); });
    order.erase(std::remove(order.begin(), order.end(), home), order.end());
    return nearest_cache.emplace(home, std::move(order)).first->second;
  };

  // Users and their records.
  const TimeZone zone = TimeZone::fixed("fixed", cfg.utc_offset_s);
  const std::int64_t start_local =
      std::chrono::sys_days{std::chrono::year{cfg.start_year} / std::chrono::month{cfg.start_month} /
                            std::chrono::day{cfg.start_day}}
          .time_since_epoch()
          .count() *
      86400;
  std::ofstream cdr(out_dir / names.cdr, std::ios::binary);
  if (!cdr) throw Error(ErrorCode::Io, "cannot write '" + (out_dir / names.cdr).string() + "'");
  cdr << kCdrHeader << '\n';

  std::size_t user_index = 0;
  for (std::size_t d = 0; d < g.districts.size(); ++d) {
    auto& district = g.districts[d];
    district.users = static_cast<int>(users_per_district[d]);
    for (int k = 0; k < district.users; ++k) {
      ++user_index;
      std::mt19937_64 ur(splitmix(cfg.seed ^ splitmix(user_index)));
      UserTruth u;
      u.id = padded('u', user_index, static_cast<std::size_t>(cfg.n_users), 6);
      u.home_district = district.id;
      EffectVector scores{};
      for (std::size_t i = 0; i < kIndicatorCount; ++i) scores[i] = district.shift[i] + cfg.user_noise * normal(ur);
      const Behaviour b = behaviour_from_scores(scores, cfg.records_per_user);
      u.behaviour = b;
      const auto& local_towers = towers_in[d];
      const std::size_t home = local_towers[std::uniform_int_distribution<std::size_t>(0, local_towers.size() - 1)(ur)];
      u.home_tower = g.towers[home].id;

      const auto n_rec = std::max<std::int64_t>(1, std::poisson_distribution<std::int64_t>(b.record_rate)(ur));
      u.n_records = n_rec;
      const auto extra = std::min<std::int64_t>(1 + std::poisson_distribution<std::int64_t>(b.visit_rate)(ur),
                                                static_cast<std::int64_t>(g.towers.size()) - 1);
      std::vector<std::size_t> away(nearest(home).begin(), nearest(home).begin() + extra);
      std::shuffle(away.begin(), away.end(), ur);

      const double p_day = b.p_night < 1.0 ? std::clamp((b.p_home - b.p_night * kNightHomeShare) / (1.0 - b.p_night), 0.0, 1.0) : 0.0;
      std::vector<PlannedRecord> recs(static_cast<std::size_t>(n_rec));
      std::size_t away_used = 0;
      std::uniform_int_distribution<std::int64_t> day_pick(0, cfg.days - 1);
      std::uniform_int_distribution<std::int64_t> half_day(0, 12 * 3600 - 1);
      std::lognormal_distribution<double> duration(b.duration_mu, 0.9);
      for (auto& r : recs) {
        const double t = u01(ur);
        r.type = t < 0.6 ? ActivityType::call : t < 0.8 ? ActivityType::sms : ActivityType::data;
        r.night = u01(ur) < b.p_night;
        const bool at_home = away.empty() || u01(ur) < (r.night ? kNightHomeShare : p_day);
        if (at_home) {
          r.tower = home;
        } else if (away_used < away.size()) {
          r.tower = away[away_used++];
        } else {
          r.tower = away[std::uniform_int_distribution<std::size_t>(0, away.size() - 1)(ur)];
        }
        const std::int64_t sod = r.night ? (19 * 3600 + half_day(ur)) % 86400 : 7 * 3600 + half_day(ur);
        r.local_s = start_local + day_pick(ur) * 86400 + sod;
        if (r.type == ActivityType::call) {
          r.duration = std::max<std::int64_t>(1, std::llround(duration(ur)));
        } else if (r.type == ActivityType::data) {
          r.duration = std::uniform_int_distribution<std::int64_t>(1, 1800)(ur);
        }
      }

      // Ego network: contact volumes follow a Zipf profile tuned to the
      // entropy target.
      std::vector<std::size_t> inter;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].type != ActivityType::data) inter.push_back(i);
      }
      if (!inter.empty()) {
        const auto m_total = static_cast<std::int64_t>(inter.size());
        const auto contacts = std::clamp<std::int64_t>(std::llround(double(m_total) / b.ipc_target), std::min<std::int64_t>(m_total, 3), m_total);
        const std::vector<std::int64_t> volume = entropy_matched_volumes(m_total, contacts, b.entropy_target);

        // The heaviest contacts are bidirectional with one
        // interaction each way; the rest are out-only or in-only. Directions
        // of the remaining bidirectional interactions are tuned so the
        // expected mean outgoing fraction over all contacts equals
        // balance_target whatever the mode mix.
        const double a = b.out_only_share;
        enum class Mode { out, in, both };
        std::vector<std::size_t> by_volume(volume.size());
        std::iota(by_volume.begin(), by_volume.end(), std::size_t{0});
        std::stable_sort(by_volume.begin(), by_volume.end(),
                         [&](std::size_t x, std::size_t y2) { return volume[x] > volume[y2]; });
        // Stochastic rounding keeps the mode counts close to their expected
        // values, which leaves room for the balance compensation below.
        auto round_random = [&](double v) { return static_cast<std::int64_t>(std::floor(v + u01(ur))); };
        const auto k = static_cast<std::int64_t>(volume.size());
        const std::int64_t n_both = std::min(k, round_random(kBidirectionalShare * double(k)));
        const std::int64_t n_single = k - n_both;
        const std::int64_t n_out = std::min(n_single, round_random(a / (1.0 - kBidirectionalShare) * double(n_single)));
        std::vector<bool> single_out(static_cast<std::size_t>(n_single), false);
        std::fill(single_out.begin(), single_out.begin() + n_out, true);
        std::shuffle(single_out.begin(), single_out.end(), ur);
        std::vector<Mode> modes(volume.size());
        double fixed = double(n_out), adjustable_base = 0.0, adjustable_span = 0.0;
        for (std::size_t rank = 0; rank < by_volume.size(); ++rank) {
          const auto m = volume[by_volume[rank]];
          if (static_cast<std::int64_t>(rank) >= n_both) {
            modes[by_volume[rank]] = single_out[rank - static_cast<std::size_t>(n_both)] ? Mode::out : Mode::in;
            continue;
          }
          modes[by_volume[rank]] = Mode::both;
          if (m <= 2) {
            fixed += 0.5;
          } else {
            adjustable_base += 1.0 / double(m);
            adjustable_span += double(m - 2) / double(m);
          }
        }
        const double need = b.balance_target * double(k) - fixed - adjustable_base;
        const double r = adjustable_span > 0 ? std::clamp(need / adjustable_span, 0.0, 1.0) : 0.5;
        std::vector<std::pair<int, Direction>> slots;
        for (std::size_t c = 0; c < volume.size(); ++c) {
          const auto m = volume[c];
          const int id = static_cast<int>(c);
          if (modes[c] == Mode::out) {
            for (std::int64_t i = 0; i < m; ++i) slots.emplace_back(id, Direction::outgoing);
          } else if (modes[c] == Mode::in) {
            for (std::int64_t i = 0; i < m; ++i) slots.emplace_back(id, Direction::incoming);
          } else if (m == 1) {
            slots.emplace_back(id, u01(ur) < 0.5 ? Direction::outgoing : Direction::incoming);
          } else {
            slots.emplace_back(id, Direction::outgoing);
            slots.emplace_back(id, Direction::incoming);
            for (std::int64_t i = 2; i < m; ++i) slots.emplace_back(id, u01(ur) < r ? Direction::outgoing : Direction::incoming);
          }
        }
        std::shuffle(slots.begin(), slots.end(), ur);
        for (std::size_t i = 0; i < inter.size(); ++i) {
          recs[inter[i]].contact = slots[i].first;
          recs[inter[i]].direction = slots[i].second;
        }
      }

      std::stable_sort(recs.begin(), recs.end(), [](const auto& x, const auto& y2) { return x.local_s < y2.local_s; });
      CdrRecord out;
      out.user_id = u.id;
      for (const auto& r : recs) {
        out.activity_type = r.type;
        out.tower_id = g.towers[r.tower].id;
        out.duration_s = r.duration;
        out.timestamp = Timestamp{std::chrono::seconds{r.local_s - cfg.utc_offset_s}};
        if (r.contact >= 0) {
          out.counterpart_id = u.id + "c" + std::to_string(r.contact);
          out.direction = r.direction;
        } else {
          out.counterpart_id.clear();
          out.direction.reset();
        }
        cdr << serialize_record(out, zone) << '\n';
      }
      g.users.push_back(std::move(u));
    }
  }
  cdr.close();
  if (!cdr) throw Error(ErrorCode::Io, "write failed for '" + (out_dir / names.cdr).string() + "'");

  // Static files.
  std::string towers_csv = "tower_id,lon,lat\n";
  for (const auto& t : g.towers) towers_csv += t.id + ',' + csv::format_double(t.lon) + ',' + csv::format_double(t.lat) + '\n';
  write_text(out_dir / names.towers, towers_csv);

  json dfc{{"type", "FeatureCollection"}, {"features", json::array()}};
  for (const auto& d : g.districts) {
    dfc["features"].push_back(rectangle_feature(proj, d.x0, d.y0, d.x1, d.y1, {{"zone_id", d.id}}));
  }
  write_text(out_dir / names.districts, dfc.dump() + "\n");

  json tfc{{"type", "FeatureCollection"}, {"features", json::array()}};
  for (const auto& t : g.tazs) {
    auto f = rectangle_feature(proj, t.x0, t.y0, t.x1, t.y1, {{"population", t.population}});
    f["id"] = t.id;
    tfc["features"].push_back(std::move(f));
  }
  write_text(out_dir / names.taz, tfc.dump() + "\n");

  std::string labels = "district_id,unemployment_rate\n";
  for (const auto& d : g.districts) labels += d.id + ',' + csv::format_double(d.unemployment_rate) + '\n';
  write_text(out_dir / names.labels, labels);

  write_text(out_dir / names.ground_truth, g.to_json());
  return g;
}

}  // namespace cdrsig::synth
