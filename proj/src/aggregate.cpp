#include "cdrsig/aggregate.hpp"

#include <sstream>

#include "cdrsig/csv.hpp"

namespace cdrsig {

std::optional<std::string> assign_home_district(const std::string& home_tower, const TowerSet& towers,
                                                const std::vector<ZonePolygon>& districts) {
  const Tower* t = towers.find(home_tower);
  if (!t) return std::nullopt;
  return geo::locate_district(Point(t->x, t->y), districts);
}

std::vector<DistrictVector> aggregate_district(
    const std::vector<std::pair<std::string, UserIndicators>>& users) {
  struct Sums {
    std::int64_t users = 0;
    std::array<double, kIndicatorCount> sum{};
    std::array<std::int64_t, kIndicatorCount> count{};
  };
  std::map<std::string, Sums> acc;
  for (const auto& [district, u] : users) {
    auto& s = acc[district];
    ++s.users;
    for (auto ind : kAllIndicators) {
      if (auto v = u.value(ind)) {
        s.sum[index_of(ind)] += *v;
        ++s.count[index_of(ind)];
      }
    }
  }
  std::vector<DistrictVector> out;
  out.reserve(acc.size());
  for (const auto& [district, s] : acc) {
    DistrictVector d;
    d.district_id = district;
    d.user_count = s.users;
    for (std::size_t i = 0; i < kIndicatorCount; ++i) {
      if (s.count[i] > 0) d.mean[i] = s.sum[i] / static_cast<double>(s.count[i]);
    }
    out.push_back(std::move(d));
  }
  return out;
}

StandardizeReport standardize(std::vector<DistrictVector>& vectors) {
  StandardizeReport report;
  for (auto ind : kAllIndicators) {
    const std::size_t c = index_of(ind);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      if (vectors[i].mean[c]) rows.push_back(i);
    }
    Eigen::VectorXd col(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) col(static_cast<Eigen::Index>(k)) = *vectors[rows[k]].mean[c];
    const auto s = stats::standardize_columns(col);
    if (s.zero_variance[0]) report.zero_variance.push_back(ind);
    for (auto& v : vectors) v.z[c].reset();
    for (std::size_t k = 0; k < rows.size(); ++k) vectors[rows[k]].z[c] = s.z(static_cast<Eigen::Index>(k), 0);
  }
  return report;
}

std::vector<CorrelationResult> correlate(const std::vector<DistrictVector>& vectors) {
  std::size_t labeled = 0;
  for (const auto& v : vectors) labeled += v.unemployment_rate ? 1 : 0;
  if (labeled < 3) throw Error(ErrorCode::InsufficientData, "correlate needs the target on at least 3 districts");

  std::vector<CorrelationResult> out;
  for (auto ind : kAllIndicators) {
    const std::size_t c = index_of(ind);
    std::vector<double> xs, ys;
    for (const auto& v : vectors) {
      if (v.mean[c] && v.unemployment_rate) {
        xs.push_back(*v.mean[c]);
        ys.push_back(*v.unemployment_rate);
      }
    }
    if (xs.size() < 3) continue;
    const Eigen::Map<const Eigen::VectorXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Eigen::Map<const Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
    Eigen::MatrixXd xy(x.size(), 2);
    xy << x, y;
    const auto z = stats::standardize_columns(xy);
    CorrelationResult r;
    r.indicator = ind;
    r.n = x.size();
    r.r = stats::pearson(x, y);
    if (!z.zero_variance[0] && !z.zero_variance[1]) {
      const auto fit = stats::linear_fit(z.z.col(0), z.z.col(1));
      r.slope = fit.slope;
      r.intercept = fit.intercept;
      r.slope_ci_half_width = fit.slope_ci_half_width;
    }
    out.push_back(r);
  }
  return out;
}

std::vector<Indicator> indicators_in(IndicatorCategory c) {
  std::vector<Indicator> out;
  for (auto ind : kAllIndicators) {
    if (category_of(ind) == c) out.push_back(ind);
  }
  return out;
}

DesignMatrix indicator_design(const std::vector<DistrictVector>& vectors, const std::vector<Indicator>& indicators,
                              bool require_target) {
  DesignMatrix d;
  for (auto ind : indicators) d.columns.emplace_back(to_string(ind));
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    if (require_target && !v.unemployment_rate) continue;
    bool ok = true;
    for (auto ind : indicators) ok = ok && v.z[index_of(ind)].has_value();
    if (ok) d.rows.push_back(i);
  }
  d.x.resize(static_cast<Eigen::Index>(d.rows.size()), static_cast<Eigen::Index>(indicators.size()));
  for (std::size_t r = 0; r < d.rows.size(); ++r) {
    for (std::size_t c = 0; c < indicators.size(); ++c) {
      d.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *vectors[d.rows[r]].z[index_of(indicators[c])];
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

std::string districts_csv(const std::vector<DistrictVector>& vectors) {
  std::ostringstream out;
  out << "district_id,user_count";
  for (auto ind : kAllIndicators) out << ',' << to_string(ind);
  for (auto ind : kAllIndicators) out << ",z_" << to_string(ind);
  out << ",population,area_m2,penetration,unemployment_rate\n";
  for (const auto& v : vectors) {
    out << csv::escape(v.district_id) << ',' << v.user_count;
    for (const auto& m : v.mean) out << ',' << csv::format_optional(m);
    for (const auto& z : v.z) out << ',' << csv::format_optional(z);
    out << ',' << csv::format_double(v.population) << ',' << csv::format_double(v.area_m2) << ','
        << csv::format_optional(v.penetration) << ',' << csv::format_optional(v.unemployment_rate) << '\n';
  }
  return out.str();
}

std::vector<DistrictVector> parse_districts_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line, scratch;
  std::vector<std::string_view> f;
  if (!std::getline(in, line)) throw Error(ErrorCode::FatalSchema, "districts.csv: missing header");
  const std::size_t expected = 2 + 2 * kIndicatorCount + 4;
  std::vector<DistrictVector> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    csv::split(line, f, scratch);
    if (f.size() != expected) {
      throw Error(ErrorCode::FatalSchema, "districts.csv row " + std::to_string(row) + ": wrong field count");
    }
    auto opt = [&](std::size_t i) -> std::optional<double> {
      if (f[i].empty()) return std::nullopt;
      auto v = csv::parse_double(f[i]);
      if (!v) throw Error(ErrorCode::FatalSchema, "districts.csv row " + std::to_string(row) + ": bad number");
      return v;
    };
    DistrictVector v;
    v.district_id = std::string(f[0]);
    const auto uc = csv::parse_int(f[1]);
    if (!uc) throw Error(ErrorCode::FatalSchema, "districts.csv row " + std::to_string(row) + ": bad user_count");
    v.user_count = *uc;
    for (std::size_t i = 0; i < kIndicatorCount; ++i) {
      v.mean[i] = opt(2 + i);
      v.z[i] = opt(2 + kIndicatorCount + i);
    }
    const std::size_t base = 2 + 2 * kIndicatorCount;
    v.population = opt(base).value_or(0.0);
    v.area_m2 = opt(base + 1).value_or(0.0);
    v.penetration = opt(base + 2);
    v.unemployment_rate = opt(base + 3);
    out.push_back(std::move(v));
  }
  return out;
}

std::string correlations_csv(const std::vector<CorrelationResult>& results) {
  std::ostringstream out;
  out << "indicator,r,slope,intercept,slope_ci_half_width,n\n";
  for (const auto& r : results) {
    out << to_string(r.indicator) << ',' << csv::format_double(r.r) << ',' << csv::format_double(r.slope) << ','
        << csv::format_double(r.intercept) << ',' << csv::format_double(r.slope_ci_half_width) << ',' << r.n << '\n';
  }
  return out.str();
}

}  // namespace cdrsig
