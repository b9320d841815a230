#include <doctest.h>

#include <cmath>
#include <map>

#include "cdrsig/aggregate.hpp"
#include "support.hpp"

using namespace cdrsig;

namespace {

Eigen::VectorXd random_vector(test::Gen& g, int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g.normal() * 3.0 + 1.0;
  return v;
}

double naive_pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const double n = double(x.size());
  double sx = 0, sy = 0;
  for (int i = 0; i < x.size(); ++i) {
    sx += x(i);
    sy += y(i);
  }
  const double mx = sx / n, my = sy / n;
  double cxy = 0, cxx = 0, cyy = 0;
  for (int i = 0; i < x.size(); ++i) {
    cxy += (x(i) - mx) * (y(i) - my);
    cxx += (x(i) - mx) * (x(i) - mx);
    cyy += (y(i) - my) * (y(i) - my);
  }
  return cxy / std::sqrt(cxx * cyy);
}

UserIndicators random_user(test::Gen& g) {
  UserIndicators u;
  u.n_records = g.integer(1, 200);
  if (g.coin(0.9)) u.pct_night_calls = g.uniform(0, 1);
  if (g.coin(0.9)) u.mean_call_duration_s = g.uniform(0, 600);
  if (g.coin(0.8)) u.pct_initiated = g.uniform(0, 1);
  if (g.coin(0.8)) u.balance_of_contacts = g.uniform(0, 1);
  if (g.coin(0.8)) u.social_entropy = g.uniform(0, 1);
  if (g.coin(0.8)) u.interactions_per_contact = g.uniform(1, 20);
  if (g.coin(0.9)) u.pct_at_home = g.uniform(0, 1);
  u.visited_locations = g.integer(1, 20);
  return u;
}

}  // namespace

TEST_CASE("Student-t critical values") {
  CHECK(stats::t_critical(0.95, 10.0) == doctest::Approx(2.228138851986).epsilon(1e-10));
  CHECK(stats::t_critical(0.95, 1e9) == doctest::Approx(1.959963985).epsilon(1e-6));
  CHECK(stats::t_two_sided_p(2.228138851986, 10.0) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("Pearson correlation matches the textbook sum") {
  test::Gen g(89);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = g.integer(3, 60);
    const Eigen::VectorXd x = random_vector(g, n);
    const Eigen::VectorXd y = 0.5 * x + random_vector(g, n);
    CHECK(std::abs(stats::pearson(x, y) - naive_pearson(x, y)) <= 1e-12);
    CHECK(std::abs(stats::pearson(x, (2.0 * y).eval()) - stats::pearson(x, y)) <= 1e-12);
    CHECK(std::abs(stats::pearson(x, (-y).eval()) + stats::pearson(x, y)) <= 1e-12);
  }
  CHECK(stats::pearson(Eigen::VectorXd::Constant(5, 1.0), Eigen::VectorXd::LinSpaced(5, 0, 1)) == 0.0);
  CHECK_THROWS_AS(stats::pearson(Eigen::VectorXd(3), Eigen::VectorXd(4)), Error);
}

TEST_CASE("linear fit satisfies the normal equations") {
  test::Gen g(97);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = g.integer(3, 50);
    const Eigen::VectorXd x = random_vector(g, n);
    const Eigen::VectorXd y = (g.normal() * x.array() + g.normal()).matrix() + random_vector(g, n);
    const auto f = stats::linear_fit(x, y);
    const Eigen::VectorXd resid = (y.array() - f.intercept - f.slope * x.array()).matrix();
    CHECK(std::abs(resid.sum()) <= 1e-9 * n);
    CHECK(std::abs(resid.dot(x)) <= 1e-9 * x.cwiseAbs().sum() * resid.cwiseAbs().maxCoeff() + 1e-9);
    CHECK(f.r2 == doctest::Approx(f.r * f.r).epsilon(1e-9));
    const double sxx = (x.array() - x.mean()).square().sum();
    CHECK(f.slope_se == doctest::Approx(std::sqrt(resid.squaredNorm() / (n - 2) / sxx)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(stats::linear_fit(Eigen::VectorXd::Ones(4), Eigen::VectorXd::LinSpaced(4, 0, 1)), Error);
  CHECK_THROWS_AS(stats::linear_fit(Eigen::VectorXd::LinSpaced(2, 0, 1), Eigen::VectorXd::LinSpaced(2, 0, 1)), Error);
}

TEST_CASE("column standardization") {
  test::Gen g(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.integer(2, 40);
    Eigen::MatrixXd x(n, 3);
    x.col(0) = random_vector(g, n);
    x.col(1).setConstant(4.2);
    x.col(2) = random_vector(g, n) * 1e6;
    const auto s = stats::standardize_columns(x);
    CHECK(s.zero_variance == std::vector<bool>{false, true, false});
    CHECK(s.z.col(1).isZero());
    for (int j : {0, 2}) {
      CHECK(std::abs(s.z.col(j).mean()) <= 1e-12);
      CHECK(stats::sample_variance(s.z.col(j)) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("empirical CDF") {
  stats::Ecdf<double> f(std::vector<double>{3, 1, 2, 2});
  CHECK(f(0.5) == 0.0);
  CHECK(f(1.0) == 0.25);
  CHECK(f(2.0) == 0.75);
  CHECK(f(2.5) == 0.75);
  CHECK(f(3.0) == 1.0);
  const auto steps = f.steps();
  REQUIRE(steps.size() == 3);
  CHECK(steps[1] == std::pair<double, double>{2.0, 0.75});
  CHECK_THROWS_AS(stats::Ecdf<double>(std::vector<double>{}), Error);

  test::Gen g(103);
  const Eigen::VectorXd v = random_vector(g, 100);
  stats::Ecdf<double> e(v);
  double prev = 0;
  for (double t = -15; t < 15; t += 0.1) {
    const double cur = e(t);
    CHECK(cur >= prev);
    int count = 0;
    for (int i = 0; i < v.size(); ++i) count += v(i) <= t;
    CHECK(cur == doctest::Approx(count / 100.0));
    prev = cur;
  }
}

TEST_CASE("scaling fit recovers exact power laws") {
  test::Gen g(107);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = g.uniform(0.1, 10), b = g.uniform(-2, 2);
    Eigen::VectorXd x(20), y(20);
    for (int i = 0; i < 20; ++i) {
      x(i) = g.uniform(1, 1000);
      y(i) = a * std::pow(x(i), b);
    }
    const auto s = stats::fit_scaling(x, y);
    CHECK(s.exponent == doctest::Approx(b).epsilon(1e-9));
    CHECK(s.prefactor == doctest::Approx(a).epsilon(1e-9));
    CHECK(s.r2 == doctest::Approx(1.0));
    CHECK(s.exponent_ci_low <= s.exponent);
    CHECK(s.exponent_ci_high >= s.exponent);
  }
  Eigen::VectorXd bad(3);
  bad << 1, 0, 2;
  CHECK_THROWS_AS(stats::fit_scaling(bad, Eigen::VectorXd::Ones(3).eval()), Error);
}

TEST_CASE("district aggregation averages defined values only") {
  test::Gen g(109);
  std::vector<std::pair<std::string, UserIndicators>> users;
  for (int i = 0; i < 400; ++i) users.emplace_back("d" + std::to_string(g.integer(0, 9)), random_user(g));
  const auto vectors = aggregate_district(users);
  for (std::size_t i = 1; i < vectors.size(); ++i) CHECK(vectors[i - 1].district_id < vectors[i].district_id);
  for (const auto& v : vectors) {
    std::int64_t count = 0;
    for (const auto& [d, u] : users) count += d == v.district_id;
    CHECK(v.user_count == count);
    for (auto ind : kAllIndicators) {
      double s = 0;
      int n = 0;
      for (const auto& [d, u] : users) {
        if (d == v.district_id && u.value(ind)) {
          s += *u.value(ind);
          ++n;
        }
      }
      if (n == 0) {
        CHECK_FALSE(v.mean[index_of(ind)].has_value());
      } else {
        CHECK(std::abs(*v.mean[index_of(ind)] - s / n) <= 1e-12 * std::max(1.0, std::abs(s / n)));
      }
    }
  }
}

TEST_CASE("standardize, correlate and design matrix") {
  test::Gen g(113);
  std::vector<DistrictVector> vectors(30);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto& v = vectors[i];
    v.district_id = "d" + std::to_string(i);
    for (auto ind : kAllIndicators) v.mean[index_of(ind)] = g.normal();
    v.mean[index_of(Indicator::visited_locations)] = 3.0;
    if (i == 4) v.mean[index_of(Indicator::social_entropy)].reset();
    if (i != 7) v.unemployment_rate = 0.1 + 0.02 * *v.mean[index_of(Indicator::pct_night_calls)] + 0.001 * g.normal();
  }
  const auto rep = standardize(vectors);
  REQUIRE(rep.zero_variance.size() == 1);
  CHECK(rep.zero_variance[0] == Indicator::visited_locations);
  CHECK_FALSE(vectors[4].z[index_of(Indicator::social_entropy)].has_value());

  const auto corr = correlate(vectors);
  for (const auto& c : corr) {
    std::vector<double> xs, ys;
    for (const auto& v : vectors) {
      if (v.mean[index_of(c.indicator)] && v.unemployment_rate) {
        xs.push_back(*v.mean[index_of(c.indicator)]);
        ys.push_back(*v.unemployment_rate);
      }
    }
    CHECK(c.n == static_cast<Eigen::Index>(xs.size()));
    const Eigen::Map<Eigen::VectorXd> x(xs.data(), Eigen::Index(xs.size())), y(ys.data(), Eigen::Index(ys.size()));
    if (c.indicator == Indicator::visited_locations) {
      CHECK(c.r == 0.0);
      continue;
    }
    CHECK(std::abs(c.r - naive_pearson(x, y)) <= 1e-12);
    CHECK(std::abs(c.slope - c.r) <= 1e-9);
    if (c.indicator == Indicator::pct_night_calls) CHECK(c.r > 0.95);
  }

  const auto d = indicator_design(vectors, indicators_in(IndicatorCategory::social));
  CHECK(d.columns.size() == 4);
  CHECK(d.x.rows() == 28);  // district 4 lacks entropy, 7 lacks a label
  for (auto r : d.rows) CHECK((r != 4 && r != 7));
  CHECK(indicator_design(vectors, indicators_in(IndicatorCategory::social), false).x.rows() == 29);

  std::vector<DistrictVector> two(vectors.begin(), vectors.begin() + 2);
  CHECK_THROWS_AS(correlate(two), Error);
}

TEST_CASE("districts csv round trip") {
  test::Gen g(127);
  std::vector<DistrictVector> vectors(12);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto& v = vectors[i];
    v.district_id = "d," + std::to_string(i);
    v.user_count = g.integer(0, 5000);
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
      if (g.coin(0.9)) v.mean[k] = g.normal();
      if (g.coin(0.9)) v.z[k] = g.normal();
    }
    v.population = g.uniform(0, 1e6);
    v.area_m2 = g.uniform(1, 1e8);
    if (g.coin()) v.penetration = g.uniform(0, 1);
    if (g.coin()) v.unemployment_rate = g.uniform(0, 1);
  }
  const auto back = parse_districts_csv(districts_csv(vectors));
  REQUIRE(back.size() == vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    CHECK(back[i].district_id == vectors[i].district_id);
    CHECK(back[i].user_count == vectors[i].user_count);
    CHECK(back[i].mean == vectors[i].mean);
    CHECK(back[i].z == vectors[i].z);
    CHECK(back[i].population == vectors[i].population);
    CHECK(back[i].area_m2 == vectors[i].area_m2);
    CHECK(back[i].penetration == vectors[i].penetration);
    CHECK(back[i].unemployment_rate == vectors[i].unemployment_rate);
  }
  CHECK_THROWS_AS(parse_districts_csv(""), Error);
}

TEST_CASE("home district assignment") {
  TowerSet towers({Tower{"a", 0, 0, 5, 5}, Tower{"b", 0, 0, 10, 5}, Tower{"c", 0, 0, 50, 50}});
  const std::vector<ZonePolygon> d = {make_rectangle_zone("y", ZoneKind::district, 0, 0, 10, 10),
                                      make_rectangle_zone("x", ZoneKind::district, 10, 0, 20, 10)};
  CHECK(assign_home_district("a", towers, d) == "y");
  CHECK(assign_home_district("b", towers, d) == "x");
  CHECK_FALSE(assign_home_district("c", towers, d).has_value());
  CHECK_FALSE(assign_home_district("zz", towers, d).has_value());
}
