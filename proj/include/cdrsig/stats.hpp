// Descriptive statistics on dense Eigen vectors: standardization, Pearson
// correlation, simple linear fits, ECDFs and log-log scaling fits.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "cdrsig/core.hpp"

namespace cdrsig::stats {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Two-sided Student-t critical value, e.g. t_critical(0.95, 10) ≈ 2.228.
template <typename Scalar = double>
Scalar t_critical(Scalar level, Scalar dof) {
  boost::math::students_t_distribution<Scalar> dist(dof);
  return boost::math::quantile(dist, (Scalar(1) + level) / Scalar(2));
}

template <typename Scalar = double>
Scalar t_two_sided_p(Scalar t, Scalar dof) {
  boost::math::students_t_distribution<Scalar> dist(dof);
  return Scalar(2) * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

template <typename Derived>
typename Derived::Scalar sample_variance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const auto n = x.size();
  if (n < 2) return Scalar(0);
  const Scalar m = x.mean();
  return (x.array() - m).square().sum() / Scalar(n - 1);
}

template <typename Scalar>
struct Standardized {
  Matrix<Scalar> z;
  Vector<Scalar> mean;
  Vector<Scalar> stddev;             // sample (n-1) standard deviation
  std::vector<bool> zero_variance;   // flagged columns are filled with zeros
};

// Column-wise z-scores with the sample standard deviation. Columns with
// fewer than two rows or zero spread are flagged and zeroed.
template <typename Derived>
Standardized<typename Derived::Scalar> standardize_columns(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  Standardized<Scalar> s;
  const auto n = x.rows(), p = x.cols();
  s.z.resize(n, p);
  s.mean.resize(p);
  s.stddev.resize(p);
  s.zero_variance.assign(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Scalar m = n > 0 ? x.col(j).mean() : Scalar(0);
    const Scalar sd = std::sqrt(sample_variance(x.col(j)));
    s.mean(j) = m;
    s.stddev(j) = sd;
    // Relative threshold so constant columns with rounding noise still flag.
    const Scalar scale = std::max<Scalar>(Scalar(1), std::abs(m));
    if (n < 2 || !(sd > Scalar(64) * Eigen::NumTraits<Scalar>::epsilon() * scale)) {
      s.zero_variance[static_cast<std::size_t>(j)] = true;
      s.z.col(j).setZero();
    } else {
      s.z.col(j) = (x.col(j).array() - m) / sd;
    }
  }
  return s;
}

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar pearson(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "pearson: length mismatch");
  if (x.size() < 2) throw Error(ErrorCode::InsufficientData, "pearson: need at least two points");
  const auto xc = (x.array() - x.mean()).matrix();
  const auto yc = (y.array() - y.mean()).matrix();
  const Scalar sxx = xc.squaredNorm(), syy = yc.squaredNorm();
  if (!(sxx > 0) || !(syy > 0)) return Scalar(0);
  const Scalar r = xc.dot(yc) / std::sqrt(sxx * syy);
  return std::clamp(r, Scalar(-1), Scalar(1));
}

template <typename Scalar>
struct LinearFit {
  Scalar slope = 0;
  Scalar intercept = 0;
  Scalar slope_se = 0;
  Scalar slope_ci_half_width = 0;  // 95 %, Student-t with n-2 dof
  Scalar r = 0;
  Scalar r2 = 0;
  Eigen::Index n = 0;
};

// Ordinary least squares y = a + b x.
template <typename DerivedX, typename DerivedY>
LinearFit<typename DerivedX::Scalar> linear_fit(const Eigen::MatrixBase<DerivedX>& x,
                                                 const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  const auto n = x.size();
  if (n != y.size()) throw Error(ErrorCode::DimensionMismatch, "linear_fit: length mismatch");
  if (n < 3) throw Error(ErrorCode::InsufficientData, "linear_fit: need at least three points");
  LinearFit<Scalar> f;
  f.n = n;
  const Scalar mx = x.mean(), my = y.mean();
  const auto xc = (x.array() - mx).matrix();
  const auto yc = (y.array() - my).matrix();
  const Scalar sxx = xc.squaredNorm();
  if (!(sxx > 0)) throw Error(ErrorCode::InsufficientData, "linear_fit: x has no spread");
  f.slope = xc.dot(yc) / sxx;
  f.intercept = my - f.slope * mx;
  const Scalar rss = (yc - f.slope * xc).squaredNorm();
  const Scalar tss = yc.squaredNorm();
  f.r2 = tss > 0 ? std::clamp<Scalar>(Scalar(1) - rss / tss, Scalar(0), Scalar(1)) : Scalar(0);
  f.r = pearson(x, y);
  f.slope_se = std::sqrt(rss / Scalar(n - 2) / sxx);
  f.slope_ci_half_width = t_critical<Scalar>(Scalar(0.95), Scalar(n - 2)) * f.slope_se;
  return f;
}

// Right-continuous empirical CDF.
template <typename Scalar = double>
class Ecdf {
 public:
  template <typename Derived>
  explicit Ecdf(const Eigen::MatrixBase<Derived>& values) : sorted_(values.begin(), values.end()) {
    if (sorted_.empty()) throw Error(ErrorCode::EmptyInput, "ecdf of an empty sample");
    std::sort(sorted_.begin(), sorted_.end());
  }
  explicit Ecdf(std::vector<Scalar> values) : sorted_(std::move(values)) {
    if (sorted_.empty()) throw Error(ErrorCode::EmptyInput, "ecdf of an empty sample");
    std::sort(sorted_.begin(), sorted_.end());
  }

  Scalar operator()(Scalar v) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), v);
    return Scalar(it - sorted_.begin()) / Scalar(sorted_.size());
  }

  // (x, F(x)) at each distinct sample value.
  std::vector<std::pair<Scalar, Scalar>> steps() const {
    std::vector<std::pair<Scalar, Scalar>> out;
    for (std::size_t i = 0; i < sorted_.size(); ++i) {
      if (i + 1 < sorted_.size() && sorted_[i + 1] == sorted_[i]) continue;
      out.emplace_back(sorted_[i], Scalar(i + 1) / Scalar(sorted_.size()));
    }
    return out;
  }

  std::size_t size() const { return sorted_.size(); }

 private:
  std::vector<Scalar> sorted_;
};

template <typename Scalar>
struct ScalingFit {
  Scalar exponent = 0;   // b in y = a x^b
  Scalar prefactor = 0;  // a
  Scalar exponent_ci_low = 0;
  Scalar exponent_ci_high = 0;
  Scalar r2 = 0;
  Eigen::Index n = 0;
};

// OLS of ln y on ln x. Throws NonPositiveValue unless all x, y > 0.
template <typename DerivedX, typename DerivedY>
ScalingFit<typename DerivedX::Scalar> fit_scaling(const Eigen::MatrixBase<DerivedX>& x,
                                                   const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  if ((x.array() <= Scalar(0)).any() || (y.array() <= Scalar(0)).any()) {
    throw Error(ErrorCode::NonPositiveValue, "fit_scaling requires strictly positive x and y");
  }
  const Vector<Scalar> lx = x.array().log().matrix();
  const Vector<Scalar> ly = y.array().log().matrix();
  const auto f = linear_fit(lx, ly);
  ScalingFit<Scalar> s;
  s.exponent = f.slope;
  s.prefactor = std::exp(f.intercept);
  s.exponent_ci_low = f.slope - f.slope_ci_half_width;
  s.exponent_ci_high = f.slope + f.slope_ci_half_width;
  s.r2 = f.r2;
  s.n = f.n;
  return s;
}

}  // namespace cdrsig::stats
