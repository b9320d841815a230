// Ordinary least squares with classical diagnostics.
#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdrsig/core.hpp"
#include "cdrsig/stats.hpp"

namespace cdrsig::ml {

template <typename Scalar>
struct OlsFit {
  // Index 0 is the intercept, then one entry per design column.
  stats::Vector<Scalar> coefficients;
  stats::Vector<Scalar> std_errors;
  stats::Vector<Scalar> t_values;
  stats::Vector<Scalar> p_values;
  stats::Vector<Scalar> residuals;
  Scalar rss = 0;
  Scalar sigma2 = 0;  // RSS / (n - p - 1)
  Scalar r2 = 0;
  Scalar adj_r2 = 0;
  // n ln(RSS/n) + (p+1) ln n.
  Scalar bic = 0;
  // Full Gaussian log-likelihood form, -2 ln L + (p+2) ln n, counting the
  // error variance as a parameter. Differs from `bic` by a constant for
  // fixed n.
  Scalar bic_loglik = 0;
  Eigen::Index n = 0;
  Eigen::Index p = 0;  // regressors, excluding the intercept
};

// Fits y = b0 + X b by column-pivoted Householder QR. Standard errors come
// from sigma² (XᵀX)⁻¹ on the intercept-augmented design.
template <typename DerivedX, typename DerivedY>
OlsFit<typename DerivedX::Scalar> ols_fit(const Eigen::MatrixBase<DerivedX>& x,
                                          const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  using Mat = stats::Matrix<Scalar>;
  using Vec = stats::Vector<Scalar>;
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y.size() != n) throw Error(ErrorCode::DimensionMismatch, "ols_fit: X and y row counts differ");
  if (n <= p + 1) throw Error(ErrorCode::InsufficientData, "ols_fit: need more observations than coefficients");

  Mat a(n, p + 1);
  a.col(0).setOnes();
  a.rightCols(p) = x;
  const Vec yv = y;

  Eigen::ColPivHouseholderQR<Mat> qr(a);
  if (qr.rank() < p + 1) throw Error(ErrorCode::SingularDesign, "ols_fit: design matrix is rank deficient");

  OlsFit<Scalar> f;
  f.n = n;
  f.p = p;
  f.coefficients = qr.solve(yv);
  f.residuals = yv - a * f.coefficients;
  f.rss = f.residuals.squaredNorm();
  const Scalar dof = Scalar(n - p - 1);
  f.sigma2 = f.rss / dof;

  const Mat r = qr.matrixR().topLeftCorner(p + 1, p + 1).template triangularView<Eigen::Upper>();
  const Mat r_inv = r.template triangularView<Eigen::Upper>().solve(Mat::Identity(p + 1, p + 1));
  const Mat cov = qr.colsPermutation() * (r_inv * r_inv.transpose()) * qr.colsPermutation().transpose();
  f.std_errors = (f.sigma2 * cov.diagonal().array()).sqrt().matrix();
  f.t_values = f.coefficients.cwiseQuotient(f.std_errors);
  f.p_values.resize(p + 1);
  for (Eigen::Index j = 0; j <= p; ++j) f.p_values(j) = stats::t_two_sided_p<Scalar>(f.t_values(j), dof);

  const Scalar tss = (yv.array() - yv.mean()).square().sum();
  f.r2 = tss > 0 ? Scalar(1) - f.rss / tss : Scalar(0);
  f.adj_r2 = Scalar(1) - (Scalar(1) - f.r2) * Scalar(n - 1) / dof;
  const Scalar nn = Scalar(n);
  const Scalar log_n = std::log(nn);
  const Scalar log_rss_n = std::log(f.rss / nn);
  f.bic = nn * log_rss_n + Scalar(p + 1) * log_n;
  f.bic_loglik = nn * (std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + Scalar(1) + log_rss_n) +
                 Scalar(p + 2) * log_n;
  return f;
}

// Significance stars as in regression tables: *** p<0.01, ** p<0.05, * p<0.1.
template <typename Scalar>
std::string significance_stars(Scalar p) {
  if (p < Scalar(0.01)) return "***";
  if (p < Scalar(0.05)) return "**";
  if (p < Scalar(0.1)) return "*";
  return "";
}

}  // namespace cdrsig::ml
