// Online self-organizing map on a rectangular grid.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cdrsig/core.hpp"
#include "cdrsig/stats.hpp"

namespace cdrsig::ml {

struct SomParams {
  int rows = 3;
  int cols = 3;
  int epochs = 500;
  double learning_rate_start = 0.5;
  double learning_rate_end = 0.01;
  // Negative means max(rows, cols) / 2.
  double radius_start = -1.0;
  double radius_end = 0.0;

  int nodes() const { return rows * cols; }
  double initial_radius() const { return radius_start < 0 ? std::max(rows, cols) / 2.0 : radius_start; }
};

template <typename Scalar>
struct SomModel {
  SomParams params;
  std::uint64_t seed = 0;
  stats::Matrix<Scalar> codebook;  // one row per node, node = row * cols + col
  std::vector<Scalar> quantization_error;  // after each epoch
  std::vector<Eigen::Index> assignment;    // best-matching unit per training row
};

// Best-matching unit per row; ties go to the lowest node index.
template <typename Scalar, typename Derived>
std::vector<Eigen::Index> som_assign(const SomModel<Scalar>& m, const Eigen::MatrixBase<Derived>& data) {
  if (data.cols() != m.codebook.cols()) throw Error(ErrorCode::DimensionMismatch, "som_assign: dimensionality differs from codebook");
  std::vector<Eigen::Index> out(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    Eigen::Index best = 0;
    Scalar best_d = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < m.codebook.rows(); ++k) {
      const Scalar d = (m.codebook.row(k) - data.row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// Mean Euclidean distance from each row to its best-matching codebook.
template <typename Scalar, typename Derived>
Scalar som_quantization_error(const SomModel<Scalar>& m, const Eigen::MatrixBase<Derived>& data) {
  const auto bmu = som_assign(m, data);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < data.rows(); ++i) total += (m.codebook.row(bmu[static_cast<std::size_t>(i)]) - data.row(i)).norm();
  return total / Scalar(data.rows());
}

// Codebooks start uniform in the data bounding box. Each epoch presents the
// rows in a seeded random order; the learning rate and neighbourhood radius
// decay linearly. The neighbourhood is Gaussian in grid distance, truncated
// at the radius, and once the radius drops below one only the winner moves.
template <typename Derived>
SomModel<typename Derived::Scalar> som_train(const Eigen::MatrixBase<Derived>& data, const SomParams& params,
                                             std::uint64_t seed) {
  using Scalar = typename Derived::Scalar;
  const auto n = data.rows(), dim = data.cols();
  if (n == 0 || dim == 0) throw Error(ErrorCode::EmptyInput, "som_train: no data");
  if (params.rows < 1 || params.cols < 1 || params.epochs < 1) throw Error(ErrorCode::Config, "som_train: grid and epochs must be positive");

  SomModel<Scalar> m;
  m.params = params;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const stats::Vector<Scalar> lo = data.colwise().minCoeff().transpose();
  const stats::Vector<Scalar> hi = data.colwise().maxCoeff().transpose();
  const int nodes = params.nodes();
  m.codebook.resize(nodes, dim);
  for (int k = 0; k < nodes; ++k) {
    for (Eigen::Index j = 0; j < dim; ++j) m.codebook(k, j) = lo(j) + Scalar(u01(rng)) * (hi(j) - lo(j));
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const double r0 = params.initial_radius();
  for (int e = 0; e < params.epochs; ++e) {
    const double frac = params.epochs > 1 ? double(e) / double(params.epochs - 1) : 1.0;
    const Scalar lr = Scalar(params.learning_rate_start + frac * (params.learning_rate_end - params.learning_rate_start));
    const double radius = r0 + frac * (params.radius_end - r0);
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto i : order) {
      Eigen::Index bmu = 0;
      Scalar best_d = std::numeric_limits<Scalar>::infinity();
      for (int k = 0; k < nodes; ++k) {
        const Scalar d = (m.codebook.row(k) - data.row(i)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          bmu = k;
        }
      }
      const int br = static_cast<int>(bmu) / params.cols, bc = static_cast<int>(bmu) % params.cols;
      for (int k = 0; k < nodes; ++k) {
        Scalar h;
        if (radius < 1.0) {
          h = k == bmu ? Scalar(1) : Scalar(0);
        } else {
          const double dr = k / params.cols - br, dc = k % params.cols - bc;
          const double g2 = dr * dr + dc * dc;
          if (g2 > radius * radius) continue;
          h = Scalar(std::exp(-g2 / (2.0 * radius * radius)));
        }
        if (h == Scalar(0)) continue;
        m.codebook.row(k) += lr * h * (data.row(i) - m.codebook.row(k));
      }
    }
    m.quantization_error.push_back(som_quantization_error(m, data));
  }
  m.assignment = som_assign(m, data);
  return m;
}

template <typename Scalar>
struct NodeSummary {
  Eigen::Index node = 0;
  Eigen::Index count = 0;
  std::optional<Scalar> mean_target;  // absent for empty nodes
};

template <typename Scalar>
struct ClusterContrast {
  std::vector<NodeSummary<Scalar>> nodes;
  std::vector<Eigen::Index> low_group;   // nodes in the lower half by mean target
  std::vector<Eigen::Index> high_group;
  std::vector<std::pair<Scalar, Scalar>> low_ecdf;   // ECDF steps of the target
  std::vector<std::pair<Scalar, Scalar>> high_ecdf;
};

// Per-node target means, and ECDFs of the target over two node groups. When
// no groups are given, occupied nodes are ranked by mean target and split
// into a lower and an upper half (the middle node joins the upper half).
template <typename Scalar>
ClusterContrast<Scalar> cluster_contrast(const std::vector<Eigen::Index>& assignment, const std::vector<Scalar>& target,
                                         Eigen::Index node_count, std::vector<Eigen::Index> low_group = {},
                                         std::vector<Eigen::Index> high_group = {}) {
  if (assignment.size() != target.size()) throw Error(ErrorCode::DimensionMismatch, "cluster_contrast: assignment and target differ in length");
  ClusterContrast<Scalar> c;
  std::vector<Scalar> sum(static_cast<std::size_t>(node_count), Scalar(0));
  std::vector<Eigen::Index> count(static_cast<std::size_t>(node_count), 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const auto k = static_cast<std::size_t>(assignment[i]);
    if (k >= sum.size()) throw Error(ErrorCode::DimensionMismatch, "cluster_contrast: node index out of range");
    sum[k] += target[i];
    ++count[k];
  }
  for (Eigen::Index k = 0; k < node_count; ++k) {
    NodeSummary<Scalar> s;
    s.node = k;
    s.count = count[static_cast<std::size_t>(k)];
    if (s.count > 0) s.mean_target = sum[static_cast<std::size_t>(k)] / Scalar(s.count);
    c.nodes.push_back(s);
  }
  if (low_group.empty() && high_group.empty()) {
    std::vector<Eigen::Index> occupied;
    for (const auto& s : c.nodes) {
      if (s.count > 0) occupied.push_back(s.node);
    }
    std::stable_sort(occupied.begin(), occupied.end(), [&](Eigen::Index a, Eigen::Index b) {
      return *c.nodes[static_cast<std::size_t>(a)].mean_target < *c.nodes[static_cast<std::size_t>(b)].mean_target;
    });
    const std::size_t half = occupied.size() / 2;
    low_group.assign(occupied.begin(), occupied.begin() + static_cast<std::ptrdiff_t>(half));
    high_group.assign(occupied.begin() + static_cast<std::ptrdiff_t>(half), occupied.end());
  }
  c.low_group = low_group;
  c.high_group = high_group;
  auto values_in = [&](const std::vector<Eigen::Index>& group) {
    std::vector<Scalar> v;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (std::find(group.begin(), group.end(), assignment[i]) != group.end()) v.push_back(target[i]);
    }
    return v;
  };
  if (auto v = values_in(c.low_group); !v.empty()) c.low_ecdf = stats::Ecdf<Scalar>(std::move(v)).steps();
  if (auto v = values_in(c.high_group); !v.empty()) c.high_ecdf = stats::Ecdf<Scalar>(std::move(v)).steps();
  return c;
}

}  // namespace cdrsig::ml
