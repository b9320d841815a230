// Gaussian-process regression with a squared-exponential ARD kernel plus
// white noise. Hyperparameters maximize the log marginal likelihood over
// several seeded restarts.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cdrsig/core.hpp"
#include "cdrsig/ml/lbfgs.hpp"
#include "cdrsig/stats.hpp"

namespace cdrsig::ml {

struct GpConfig {
  int restarts = 5;
  int max_iterations = 200;
  double noise_floor = 1e-12;  // added to the learned noise variance
  double jitter_start = 1e-10;
  double jitter_max = 1e-4;
  double log_lower = -14.0;  // box on every log-hyperparameter
  double log_upper = 8.0;
};

template <typename Scalar>
struct GpModel {
  Scalar signal_variance = 1;
  stats::Vector<Scalar> length_scales;
  Scalar noise_variance = 0;  // includes the floor; always > 0
  Scalar jitter = 0;          // diagonal jitter the final factorization needed
  Scalar log_marginal_likelihood = 0;  // on the normalized targets
  // Best log marginal likelihood seen after each restart.
  std::vector<Scalar> restart_best;
  std::uint64_t seed = 0;

  stats::Matrix<Scalar> x_train;
  stats::Vector<Scalar> y_train;
  Scalar y_mean = 0;
  Scalar y_scale = 1;
  stats::Vector<Scalar> alpha;   // K⁻¹ (y - mean) / scale
  stats::Matrix<Scalar> chol_l;  // lower Cholesky factor of K + noise I
};

template <typename Scalar>
struct GpPrediction {
  stats::Vector<Scalar> mean;
  stats::Vector<Scalar> variance;  // latent function variance, >= 0
};

namespace detail {

template <typename Scalar>
struct GpProblem {
  const std::vector<stats::Matrix<Scalar>>* sq_dist;  // per-dimension (x_i - x_j)²
  const stats::Vector<Scalar>* y;
  const GpConfig* config;
};

template <typename Scalar>
stats::Matrix<Scalar> se_kernel(const std::vector<stats::Matrix<Scalar>>& sq_dist, Scalar sf2,
                                const stats::Vector<Scalar>& ell) {
  const auto n = sq_dist.front().rows();
  stats::Matrix<Scalar> r2 = stats::Matrix<Scalar>::Zero(n, n);
  for (std::size_t d = 0; d < sq_dist.size(); ++d) r2 += sq_dist[d] / (ell(static_cast<Eigen::Index>(d)) * ell(static_cast<Eigen::Index>(d)));
  return sf2 * (Scalar(-0.5) * r2.array()).exp().matrix();
}

// Cholesky of k + (noise + jitter) I with jitter escalation; returns false
// when even jitter_max fails.
template <typename Scalar>
bool factor_with_jitter(const stats::Matrix<Scalar>& k, Scalar noise, const GpConfig& cfg,
                        Eigen::LLT<stats::Matrix<Scalar>>& llt, Scalar& jitter_used) {
  Scalar jitter = 0;
  while (true) {
    stats::Matrix<Scalar> ky = k;
    ky.diagonal().array() += noise + jitter;
    llt.compute(ky);
    if (llt.info() == Eigen::Success) {
      jitter_used = jitter;
      return true;
    }
    if (jitter >= Scalar(cfg.jitter_max)) return false;
    jitter = jitter == 0 ? Scalar(cfg.jitter_start) : jitter * Scalar(10);
  }
}

// Negative log marginal likelihood and its gradient in
// theta = (log sf, log ell_1..D, log sn) with sn² the learned noise above the floor.
template <typename Scalar>
Scalar negative_lml(const GpProblem<Scalar>& prob, const stats::Vector<Scalar>& theta,
                    stats::Vector<Scalar>& grad) {
  using Mat = stats::Matrix<Scalar>;
  using Vec = stats::Vector<Scalar>;
  const auto& sq = *prob.sq_dist;
  const auto& y = *prob.y;
  const auto dims = static_cast<Eigen::Index>(sq.size());
  const auto n = y.size();
  const Scalar sf2 = std::exp(Scalar(2) * theta(0));
  const Vec ell = theta.segment(1, dims).array().exp().matrix();
  const Scalar noise_excess = std::exp(Scalar(2) * theta(dims + 1));
  const Scalar noise = Scalar(prob.config->noise_floor) + noise_excess;

  const Mat k = se_kernel(sq, sf2, ell);
  Eigen::LLT<Mat> llt;
  Scalar jitter = 0;
  if (!factor_with_jitter(k, noise, *prob.config, llt, jitter)) return std::numeric_limits<Scalar>::infinity();
  const Vec alpha = llt.solve(y);
  const Mat l = llt.matrixL();
  const Scalar log_det_half = l.diagonal().array().log().sum();
  const Scalar nlml = Scalar(0.5) * y.dot(alpha) + log_det_half +
                      Scalar(0.5) * Scalar(n) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);

  // dL/dθ = ½ tr((ααᵀ - K⁻¹) ∂K/∂θ); the gradient of the negative is its negation.
  const Mat w = alpha * alpha.transpose() - llt.solve(Mat::Identity(n, n));
  grad.resize(theta.size());
  grad(0) = -(w.array() * k.array()).sum();
  for (Eigen::Index d = 0; d < dims; ++d) {
    const Scalar inv_l2 = Scalar(1) / (ell(d) * ell(d));
    grad(1 + d) = -Scalar(0.5) * (w.array() * k.array() * sq[static_cast<std::size_t>(d)].array()).sum() * inv_l2;
  }
  grad(dims + 1) = -w.trace() * noise_excess;
  return nlml;
}

}  // namespace detail

// Fits a GP to (x, y). Targets are centered and scaled by their sample
// standard deviation before fitting; predictions are mapped back.
template <typename DerivedX, typename DerivedY>
GpModel<typename DerivedX::Scalar> gp_fit(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                          const GpConfig& cfg, std::uint64_t seed) {
  using Scalar = typename DerivedX::Scalar;
  using Mat = stats::Matrix<Scalar>;
  using Vec = stats::Vector<Scalar>;
  const auto n = x.rows(), dims = x.cols();
  if (y.size() != n) throw Error(ErrorCode::DimensionMismatch, "gp_fit: X and y row counts differ");
  if (n < 2) throw Error(ErrorCode::InsufficientData, "gp_fit: need at least two training points");
  if (dims < 1) throw Error(ErrorCode::DimensionMismatch, "gp_fit: X has no columns");
  if (cfg.restarts < 1) throw Error(ErrorCode::Config, "gp_fit: restarts must be >= 1");

  GpModel<Scalar> m;
  m.seed = seed;
  m.x_train = x;
  m.y_train = y;
  m.y_mean = m.y_train.mean();
  const Scalar sd = std::sqrt(stats::sample_variance(m.y_train));
  m.y_scale = sd > Scalar(0) ? sd : Scalar(1);
  const Vec yn = ((m.y_train.array() - m.y_mean) / m.y_scale).matrix();

  std::vector<Mat> sq(static_cast<std::size_t>(dims));
  for (Eigen::Index d = 0; d < dims; ++d) {
    const Vec c = m.x_train.col(d);
    sq[static_cast<std::size_t>(d)] = (c.replicate(1, n) - c.transpose().replicate(n, 1)).array().square().matrix();
  }
  const detail::GpProblem<Scalar> prob{&sq, &yn, &cfg};

  LbfgsOptions<Scalar> opt;
  opt.max_iterations = cfg.max_iterations;
  opt.lower = Scalar(cfg.log_lower);
  opt.upper = Scalar(cfg.log_upper);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const Eigen::Index np = dims + 2;
  Vec best_theta;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    Vec theta0(np);
    if (r == 0) {
      theta0(0) = 0;
      theta0.segment(1, dims).setConstant(Scalar(0.5) * std::log(Scalar(dims)));
      theta0(dims + 1) = Scalar(0.5) * std::log(Scalar(0.1));
    } else {
      theta0(0) = Scalar(std::log(0.3) + u01(rng) * (std::log(3.0) - std::log(0.3)));
      for (Eigen::Index d = 0; d < dims; ++d) theta0(1 + d) = Scalar(std::log(0.3) + u01(rng) * (std::log(30.0) - std::log(0.3)));
      theta0(dims + 1) = Scalar(0.5 * (std::log(1e-3) + u01(rng) * (std::log(1.0) - std::log(1e-3))));
    }
    auto objective = [&](const Vec& t, Vec& g) { return detail::negative_lml(prob, t, g); };
    const auto res = minimize_lbfgs<Scalar>(objective, theta0, opt);
    if (std::isfinite(res.value) && res.value < best) {
      best = res.value;
      best_theta = res.x;
    }
    m.restart_best.push_back(std::isfinite(best) ? -best : -std::numeric_limits<Scalar>::infinity());
  }
  if (!std::isfinite(best)) throw Error(ErrorCode::IllConditionedKernel, "gp_fit: kernel matrix not positive definite at any restart");

  m.signal_variance = std::exp(Scalar(2) * best_theta(0));
  m.length_scales = best_theta.segment(1, dims).array().exp().matrix();
  m.noise_variance = Scalar(cfg.noise_floor) + std::exp(Scalar(2) * best_theta(dims + 1));
  const Mat k = detail::se_kernel(sq, m.signal_variance, m.length_scales);
  Eigen::LLT<Mat> llt;
  if (!detail::factor_with_jitter(k, m.noise_variance, cfg, llt, m.jitter)) {
    throw Error(ErrorCode::IllConditionedKernel, "gp_fit: final kernel factorization failed after jitter escalation");
  }
  m.chol_l = llt.matrixL();
  m.alpha = llt.solve(yn);
  m.log_marginal_likelihood = -best;
  return m;
}

template <typename Scalar, typename Derived>
GpPrediction<Scalar> gp_predict(const GpModel<Scalar>& m, const Eigen::MatrixBase<Derived>& xs) {
  using Mat = stats::Matrix<Scalar>;
  if (xs.cols() != m.x_train.cols()) throw Error(ErrorCode::DimensionMismatch, "gp_predict: column count differs from training data");
  const auto n = m.x_train.rows(), q = xs.rows();
  Mat r2 = Mat::Zero(q, n);
  for (Eigen::Index d = 0; d < xs.cols(); ++d) {
    const Scalar inv = Scalar(1) / (m.length_scales(d) * m.length_scales(d));
    for (Eigen::Index i = 0; i < q; ++i) {
      r2.row(i).array() += (m.x_train.col(d).transpose().array() - xs(i, d)).square() * inv;
    }
  }
  const Mat ks = m.signal_variance * (Scalar(-0.5) * r2.array()).exp().matrix();  // q × n
  GpPrediction<Scalar> p;
  p.mean = (m.y_mean + m.y_scale * (ks * m.alpha).array()).matrix();
  const Mat v = m.chol_l.template triangularView<Eigen::Lower>().solve(ks.transpose());  // n × q
  p.variance.resize(q);
  for (Eigen::Index i = 0; i < q; ++i) {
    const Scalar latent = std::max(Scalar(0), m.signal_variance - v.col(i).squaredNorm());
    p.variance(i) = m.y_scale * m.y_scale * latent;
  }
  return p;
}

}  // namespace cdrsig::ml
