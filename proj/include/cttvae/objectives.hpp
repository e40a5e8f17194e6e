#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cttvae/core.hpp"
#include "cttvae/nn.hpp"

namespace cttvae {

inline constexpr std::array<double, 3> kDefaultKernelScales{0.5, 1.0, 2.0};
inline constexpr double kBandwidthFloor = 1e-6;

/// Biased (V-statistic) squared MMD between the rows of `x` and `y` under a
/// sum of Gaussian kernels exp(-d^2 / (2 sigma_s^2)), sigma_s = scale_s *
/// median pairwise distance of the joint sample. `grad_x` (optional)
/// receives dMMD/dx, including the dependence of the median bandwidth on x.
template <class T>
T mmd(const nn::Mat<T>& x, const nn::Mat<T>& y, std::span<const double> scales = kDefaultKernelScales,
      nn::Mat<T>* grad_x = nullptr) {
  if (x.rows() == 0 || y.rows() == 0) throw Error("mmd: empty batch");
  if (x.cols() != y.cols()) throw Error("mmd: dimensionality mismatch");
  const Eigen::Index n = x.rows(), m = y.rows(), total = n + m;
  auto point = [&](Eigen::Index i) { return i < n ? x.row(i) : y.row(i - n); };

  nn::Mat<T> d2(total, total);
  std::vector<T> dist;
  dist.reserve(static_cast<std::size_t>(total * (total - 1) / 2));
  for (Eigen::Index i = 0; i < total; ++i) {
    d2(i, i) = 0;
    for (Eigen::Index j = i + 1; j < total; ++j) {
      T s = (point(i) - point(j)).squaredNorm();
      d2(i, j) = d2(j, i) = s;
      dist.push_back(std::sqrt(s));
    }
  }

  // Median with the even-count convention (mean of the two middle values).
  T median = 0;
  std::array<T, 2> mid_vals{};
  int mid_count = 0;
  if (!dist.empty()) {
    std::vector<T> sorted = dist;
    const std::size_t k = sorted.size() / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
    mid_vals[0] = sorted[k];
    mid_count = 1;
    median = sorted[k];
    if (sorted.size() % 2 == 0) {
      mid_vals[1] = *std::max_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k));
      mid_count = 2;
      median = (mid_vals[0] + mid_vals[1]) / T(2);
    }
  }
  const bool floored = !(median > T(kBandwidthFloor));
  const T base = floored ? T(kBandwidthFloor) : median;

  auto coef = [&](Eigen::Index i, Eigen::Index j) -> T {
    const bool xi = i < n, xj = j < n;
    if (xi && xj) return T(1) / T(n * n);
    if (!xi && !xj) return T(1) / T(m * m);
    return -T(1) / T(n * m);
  };

  T value = 0;
  T d_base = 0;  // dMMD/d(base bandwidth)
  nn::Mat<T> w;  // per-pair weight on (p_i - p_j) for the fixed-bandwidth gradient
  if (grad_x) w = nn::Mat<T>::Zero(n, total);
  for (double sc : scales) {
    const T sigma = T(sc) * base;
    const T inv2s2 = T(1) / (T(2) * sigma * sigma);
    for (Eigen::Index i = 0; i < total; ++i) {
      for (Eigen::Index j = 0; j < total; ++j) {
        const T c = coef(i, j);
        const T k = std::exp(-d2(i, j) * inv2s2);
        value += c * k;
        if (grad_x) {
          d_base += c * k * d2(i, j) / (sigma * sigma * sigma) * T(sc);
          if (i < n && i != j) w(i, j) += T(2) * c * k * (-T(1) / (sigma * sigma));
        }
      }
    }
  }

  if (grad_x) {
    grad_x->setZero(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < total; ++j)
        if (w(i, j) != T(0)) grad_x->row(i) += w(i, j) * (x.row(i) - point(j));
    if (!floored) {
      // Route d_base through every pair whose distance equals a middle order statistic.
      const T share = d_base / T(mid_count);
      for (int q = 0; q < mid_count; ++q) {
        bool done = false;
        for (Eigen::Index i = 0; i < total && !done; ++i)
          for (Eigen::Index j = i + 1; j < total && !done; ++j) {
            if (std::sqrt(d2(i, j)) != mid_vals[static_cast<std::size_t>(q)]) continue;
            const T dij = std::sqrt(d2(i, j));
            if (dij > T(0)) {
              auto dir = (point(i) - point(j)) / dij;
              if (i < n) grad_x->row(i) += share * dir;
              if (j < n) grad_x->row(j) -= share * dir;
            }
            done = true;
          }
      }
    }
  }
  return value;
}

struct Triplet {
  int anchor = 0;
  int positive = 0;
  int negative = 0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletSet {
  std::vector<Triplet> triplets;
  std::size_t count() const { return triplets.size(); }
  bool empty() const { return triplets.empty(); }
};

enum class SemiHardWindow { min_positive, chosen_positive };

/// Euclidean pairwise distances between rows.
template <class T>
nn::Mat<T> pairwise_distances(const nn::Mat<T>& a) {
  nn::Mat<T> d(a.rows(), a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    d(i, i) = 0;
    for (Eigen::Index j = i + 1; j < a.rows(); ++j) d(i, j) = d(j, i) = (a.row(i) - a.row(j)).norm();
  }
  return d;
}

/// Semi-hard triplet mining on posterior means. Per anchor: skip when it has
/// no positive or no negative; d_ap = smallest positive distance (or the
/// chosen positive's distance under `chosen_positive`); positive = farthest
/// positive; negative = random member of {n : d_ap < D[a][n] < d_ap + margin},
/// else the closest negative. Ties resolve to the lowest index.
template <class T>
TripletSet mine_triplets(const nn::Mat<T>& mu, std::span<const int> labels, double margin, Rng& rng,
                         SemiHardWindow window = SemiHardWindow::min_positive) {
  if (static_cast<std::size_t>(mu.rows()) != labels.size()) throw Error("mine_triplets: label count mismatch");
  const auto n = static_cast<int>(labels.size());
  TripletSet out;
  if (n < 2) return out;
  const nn::Mat<T> d = pairwise_distances(mu);
  std::vector<int> mask;
  for (int i = 0; i < n; ++i) {
    int far_pos = -1, near_neg = -1;
    T min_pos = 0, max_pos = 0, min_neg = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const T dij = d(i, j);
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
        if (far_pos < 0) {
          min_pos = max_pos = dij;
          far_pos = j;
        } else {
          min_pos = std::min(min_pos, dij);
          if (dij > max_pos) {
            max_pos = dij;
            far_pos = j;
          }
        }
      } else if (near_neg < 0 || dij < min_neg) {
        min_neg = dij;
        near_neg = j;
      }
    }
    if (far_pos < 0 || near_neg < 0) continue;
    const T d_ap = window == SemiHardWindow::min_positive ? min_pos : max_pos;
    mask.clear();
    for (int j = 0; j < n; ++j) {
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) continue;
      if (d_ap < d(i, j) && d(i, j) < d_ap + T(margin)) mask.push_back(j);
    }
    int neg = near_neg;
    if (!mask.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, mask.size() - 1);
      neg = mask[pick(rng)];
    }
    out.triplets.push_back({i, far_pos, neg});
  }
  return out;
}

/// Mean over triplets of max(|a-p|^2 - |a-n|^2 + margin, 0); 0 for an empty set.
template <class T>
T triplet_loss(const nn::Mat<T>& mu, const TripletSet& set, double margin, nn::Mat<T>* grad = nullptr) {
  if (grad) grad->setZero(mu.rows(), mu.cols());
  if (set.empty()) return T(0);
  const T inv = T(1) / T(set.count());
  T total = 0;
  for (const auto& t : set.triplets) {
    if (t.anchor < 0 || t.positive < 0 || t.negative < 0 || t.anchor >= mu.rows() || t.positive >= mu.rows() ||
        t.negative >= mu.rows())
      throw Error("triplet_loss: index out of range");
    auto a = mu.row(t.anchor);
    auto p = mu.row(t.positive);
    auto ng = mu.row(t.negative);
    const T v = (a - p).squaredNorm() - (a - ng).squaredNorm() + T(margin);
    if (v > T(0)) {
      total += v;
      if (grad) {
        grad->row(t.anchor) += T(2) * inv * (ng - p);
        grad->row(t.positive) += -T(2) * inv * (a - p);
        grad->row(t.negative) += T(2) * inv * (a - ng);
      }
    }
  }
  return total * inv;
}

struct LossWeights {
  double beta = 1.0;    // MMD weight
  double alpha = 1.0;   // triplet weight
  double margin = 0.5;  // triplet margin
};

/// recon + beta * mmd + alpha * triplet. Non-finite inputs raise instead of propagating NaN.
inline double total_loss(double recon, double mmd_value, double triplet_value, const LossWeights& w) {
  if (!std::isfinite(recon) || !std::isfinite(mmd_value) || !std::isfinite(triplet_value))
    throw Error("total_loss: non-finite loss component");
  return recon + w.beta * mmd_value + w.alpha * triplet_value;
}

}  // namespace cttvae
