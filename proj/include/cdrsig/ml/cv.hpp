// Repeated K-fold cross-validation of the GP regressor.
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdrsig/core.hpp"
#include "cdrsig/ml/gp.hpp"
#include "cdrsig/parallel.hpp"
#include "cdrsig/stats.hpp"

namespace cdrsig::ml {

struct CvConfig {
  int folds = 5;
  int repeats = 5;
  std::uint64_t seed = 0;
  GpConfig gp;
  int threads = 1;
};

template <typename Scalar>
struct CvReport {
  std::string label;
  int folds = 0;
  int repeats = 0;
  std::uint64_t seed = 0;
  // fold_of[r][i]: fold holding row i out in repeat r.
  std::vector<std::vector<int>> fold_of;
  // fold_r2[r][f]: 1 - SS_res/SS_tot inside fold f of repeat r, raw.
  std::vector<std::vector<Scalar>> fold_r2;
  // Pooled out-of-fold R² per repeat, raw (may be negative).
  std::vector<Scalar> repeat_r2;
  Scalar mean_r2 = 0;          // mean of repeat_r2, raw
  Scalar mean_r2_floored = 0;  // max(0, mean_r2), for summary tables
  Scalar ci_low = 0;           // 95 % t-interval of the mean over repeats
  Scalar ci_high = 0;
  // Out-of-fold predictions and variances, averaged over repeats.
  stats::Vector<Scalar> oof_mean;
  stats::Vector<Scalar> oof_variance;
  Scalar oof_r = 0;  // Pearson r of oof_mean against y
};

template <typename DerivedY, typename DerivedP>
typename DerivedY::Scalar r2_score(const Eigen::MatrixBase<DerivedY>& y, const Eigen::MatrixBase<DerivedP>& pred) {
  using Scalar = typename DerivedY::Scalar;
  const Scalar ss_res = (y - pred).squaredNorm();
  const Scalar ss_tot = (y.array() - y.mean()).square().sum();
  if (!(ss_tot > 0)) return ss_res > 0 ? -std::numeric_limits<Scalar>::infinity() : Scalar(1);
  return Scalar(1) - ss_res / ss_tot;
}

// Balanced fold labels for n rows, shuffled by a generator seeded with
// (seed, repeat).
inline std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed, int repeat) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(repeat)};
  std::mt19937_64 rng(seq);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) out[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return out;
}

inline std::uint64_t fold_seed(std::uint64_t seed, int repeat, int fold) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(repeat * 1000 + fold + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <typename DerivedX, typename DerivedY>
CvReport<typename DerivedX::Scalar> cross_validate(const Eigen::MatrixBase<DerivedX>& x,
                                                   const Eigen::MatrixBase<DerivedY>& y, const CvConfig& cfg,
                                                   std::string label = "") {
  using Scalar = typename DerivedX::Scalar;
  using Mat = stats::Matrix<Scalar>;
  using Vec = stats::Vector<Scalar>;
  const auto n = x.rows();
  if (y.size() != n) throw Error(ErrorCode::DimensionMismatch, "cross_validate: X and y row counts differ");
  if (cfg.folds < 2) throw Error(ErrorCode::Config, "cross_validate: K must be >= 2");
  if (cfg.repeats < 1) throw Error(ErrorCode::Config, "cross_validate: repeats must be >= 1");
  if (n < cfg.folds) throw Error(ErrorCode::InsufficientData, "cross_validate: fewer rows than folds");

  CvReport<Scalar> rep;
  rep.label = std::move(label);
  rep.folds = cfg.folds;
  rep.repeats = cfg.repeats;
  rep.seed = cfg.seed;
  const Mat xm = x;
  const Vec yv = y;
  for (int r = 0; r < cfg.repeats; ++r) rep.fold_of.push_back(fold_assignment(static_cast<std::size_t>(n), cfg.folds, cfg.seed, r));

  // Per (repeat, fold) task: predictions for that fold's rows.
  const std::size_t tasks = static_cast<std::size_t>(cfg.repeats) * static_cast<std::size_t>(cfg.folds);
  std::vector<Vec> pred_mean(tasks), pred_var(tasks);
  std::vector<std::vector<Eigen::Index>> test_rows(tasks);
  for (int r = 0; r < cfg.repeats; ++r) {
    for (Eigen::Index i = 0; i < n; ++i) {
      test_rows[static_cast<std::size_t>(r * cfg.folds + rep.fold_of[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)])].push_back(i);
    }
  }
  parallel_for(tasks, resolve_threads(cfg.threads), [&](std::size_t t) {
    const int r = static_cast<int>(t) / cfg.folds, f = static_cast<int>(t) % cfg.folds;
    const auto& fold = rep.fold_of[static_cast<std::size_t>(r)];
    std::vector<Eigen::Index> train;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (fold[static_cast<std::size_t>(i)] != f) train.push_back(i);
    }
    const Mat xtr = xm(train, Eigen::all);
    const Vec ytr = yv(train);
    const Mat xte = xm(test_rows[t], Eigen::all);
    const auto model = gp_fit(xtr, ytr, cfg.gp, fold_seed(cfg.seed, r, f));
    auto p = gp_predict(model, xte);
    pred_mean[t] = std::move(p.mean);
    pred_var[t] = std::move(p.variance);
  });

  rep.oof_mean = Vec::Zero(n);
  rep.oof_variance = Vec::Zero(n);
  for (int r = 0; r < cfg.repeats; ++r) {
    Vec oof(n);
    std::vector<Scalar> per_fold;
    for (int f = 0; f < cfg.folds; ++f) {
      const std::size_t t = static_cast<std::size_t>(r * cfg.folds + f);
      const auto& rows = test_rows[t];
      for (std::size_t k = 0; k < rows.size(); ++k) {
        oof(rows[k]) = pred_mean[t](static_cast<Eigen::Index>(k));
        rep.oof_variance(rows[k]) += pred_var[t](static_cast<Eigen::Index>(k));
      }
      per_fold.push_back(r2_score(yv(rows), pred_mean[t]));
    }
    rep.fold_r2.push_back(std::move(per_fold));
    rep.repeat_r2.push_back(r2_score(yv, oof));
    rep.oof_mean += oof;
  }
  rep.oof_mean /= Scalar(cfg.repeats);
  rep.oof_variance /= Scalar(cfg.repeats);

  const Eigen::Map<const Vec> rr(rep.repeat_r2.data(), static_cast<Eigen::Index>(rep.repeat_r2.size()));
  rep.mean_r2 = rr.mean();
  rep.mean_r2_floored = std::max(Scalar(0), rep.mean_r2);
  if (cfg.repeats >= 2) {
    const Scalar se = std::sqrt(stats::sample_variance(rr) / Scalar(cfg.repeats));
    const Scalar half = stats::t_critical<Scalar>(Scalar(0.95), Scalar(cfg.repeats - 1)) * se;
    rep.ci_low = rep.mean_r2 - half;
    rep.ci_high = rep.mean_r2 + half;
  } else {
    rep.ci_low = rep.ci_high = rep.mean_r2;
  }
  rep.oof_r = stats::pearson(rep.oof_mean, yv);
  return rep;
}

}  // namespace cdrsig::ml
