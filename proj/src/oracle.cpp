#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cdrsig/synth.hpp"

namespace cdrsig::synth {
namespace {

struct Row {
  std::string type;
  std::string tower;
  long long duration = 0;
  int hour = 0;
  std::string counterpart;
  std::string direction;
};

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<OracleDistrict> recompute_indicator_oracle(const GroundTruth& truth, const std::filesystem::path& cdr,
                                                       const OracleOptions& options) {
  std::ifstream in(cdr);
  if (!in) throw Error(ErrorCode::Io, "oracle: cannot open '" + cdr.string() + "'");
  std::map<std::string, std::vector<Row>> by_user;
  std::string line;
  std::getline(in, line);  // header, fixed column order
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() < 7) continue;
    Row r;
    r.type = f[1];
    r.tower = f[2];
    r.duration = std::stoll(f[3]);
    // "YYYY-MM-DDTHH:MM:SS+03:00": the hour as written is local time.
    r.hour = std::stoi(f[4].substr(11, 2));
    r.counterpart = f[5];
    r.direction = f[6];
    by_user[f[0]].push_back(r);
  }

  std::map<std::string, std::pair<double, double>> tower_xy;
  for (const auto& t : truth.towers) tower_xy[t.id] = {t.x, t.y};

  struct Sum {
    std::int64_t users = 0;
    double total[kIndicatorCount] = {};
    std::int64_t count[kIndicatorCount] = {};
  };
  std::map<std::string, Sum> sums;

  for (const auto& [user, rows] : by_user) {
    const auto n = static_cast<std::int64_t>(rows.size());
    if (n < options.min_records) continue;
    auto is_night = [&](int h) {
      return options.night_start_hour > options.night_end_hour
                 ? (h >= options.night_start_hour || h < options.night_end_hour)
                 : (h >= options.night_start_hour && h < options.night_end_hour);
    };
    long long calls = 0, night_calls = 0, duration = 0;
    std::map<std::string, std::pair<long long, long long>> contacts;  // out, in
    std::map<std::string, std::pair<long long, long long>> towers;    // all, night
    for (const auto& r : rows) {
      const bool night = is_night(r.hour);
      if (r.type == "call") {
        ++calls;
        duration += r.duration;
        if (night) ++night_calls;
      }
      if ((r.type == "call" || r.type == "sms") && !r.counterpart.empty() && !r.direction.empty()) {
        if (r.direction == "out") ++contacts[r.counterpart].first;
        if (r.direction == "in") ++contacts[r.counterpart].second;
      }
      ++towers[r.tower].first;
      if (night) ++towers[r.tower].second;
    }

    std::string home;
    long long best = 0;
    for (const auto& [id, c] : towers) {
      if (c.second > best) {
        best = c.second;
        home = id;
      }
    }
    if (home.empty()) continue;
    const auto [hx, hy] = tower_xy.at(home);
    std::string district;
    for (const auto& d : truth.districts) {
      if (hx >= d.x0 && hx <= d.x1 && hy >= d.y0 && hy <= d.y1 && (district.empty() || d.id < district)) district = d.id;
    }
    if (district.empty()) continue;

    double value[kIndicatorCount] = {};
    bool has[kIndicatorCount] = {};
    auto set = [&](Indicator ind, double v) {
      value[index_of(ind)] = v;
      has[index_of(ind)] = true;
    };
    set(Indicator::n_records, double(n));
    if (calls > 0) {
      set(Indicator::pct_night_calls, double(night_calls) / double(calls));
      set(Indicator::mean_call_duration_s, double(duration) / double(calls));
    }
    if (!contacts.empty()) {
      double with_in = 0, with_out = 0, balance = 0, volume = 0;
      for (const auto& [id, c] : contacts) {
        if (c.first > 0) with_out += 1;
        if (c.second > 0) with_in += 1;
        balance += double(c.first) / double(c.first + c.second);
        volume += double(c.first + c.second);
      }
      const double k = double(contacts.size());
      set(Indicator::pct_initiated, with_in / (with_in + with_out));
      set(Indicator::balance_of_contacts, balance / k);
      double h = 0;
      if (contacts.size() > 1) {
        for (const auto& [id, c] : contacts) {
          const double p = double(c.first + c.second) / volume;
          h -= p * std::log(p);
        }
        h /= std::log(k);
      }
      set(Indicator::social_entropy, h);
      set(Indicator::interactions_per_contact, volume / k);
    }
    set(Indicator::pct_at_home, double(towers[home].first) / double(n));
    set(Indicator::visited_locations, double(towers.size()));

    auto& s = sums[district];
    ++s.users;
    for (std::size_t i = 0; i < kIndicatorCount; ++i) {
      if (has[i]) {
        s.total[i] += value[i];
        ++s.count[i];
      }
    }
  }

  std::vector<OracleDistrict> out;
  for (const auto& [id, s] : sums) {
    OracleDistrict d;
    d.district_id = id;
    d.user_count = s.users;
    for (std::size_t i = 0; i < kIndicatorCount; ++i) {
      if (s.count[i] > 0) d.mean[i] = s.total[i] / double(s.count[i]);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace cdrsig::synth
