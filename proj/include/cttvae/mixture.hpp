#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "cttvae/core.hpp"

namespace cttvae {

struct Mode {
  double mean = 0.0;
  double std = 1.0;
  double weight = 1.0;
};

struct MixtureOptions {
  int max_modes = 10;
  double weight_concentration = 1e-3;  // Dirichlet prior on mixing weights
  double prune_weight = 0.01;
  int max_iter = 500;
  double tol = 1e-9;  // relative lower-bound change
};

namespace detail {

// Variational Bayes for a 1-D Gaussian mixture with a symmetric Dirichlet
// prior on the weights and a Normal-Gamma prior on each (mean, precision).
class VariationalMixture1D {
 public:
  VariationalMixture1D(std::span<const double> x, int k, const MixtureOptions& opt)
      : x_(x), k_(k), opt_(opt) {
    const double n = static_cast<double>(x.size());
    m0_ = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0.0;
    for (double v : x) var += (v - m0_) * (v - m0_);
    var /= n;
    winv0_ = std::max(var, 1e-12);  // W0^-1 = empirical variance
    resp_.assign(x.size() * static_cast<std::size_t>(k), 0.0);
    alpha_.resize(k);
    beta_.resize(k);
    m_.resize(k);
    nu_.resize(k);
    w_.resize(k);
  }

  // Hard responsibilities from contiguous quantile chunks.
  void init_quantiles() {
    std::vector<std::size_t> order(x_.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x_[a] < x_[b]; });
    std::fill(resp_.begin(), resp_.end(), 0.0);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      auto c = static_cast<int>(rank * static_cast<std::size_t>(k_) / order.size());
      r(order[rank], c) = 1.0;
    }
  }

  std::vector<double>& responsibilities() { return resp_; }
  const std::vector<double>& responsibilities() const { return resp_; }

  double fit() {
    double prev = -std::numeric_limits<double>::infinity();
    double bound = prev;
    for (int it = 0; it < opt_.max_iter; ++it) {
      m_step();
      bound = lower_bound();
      e_step();
      if (std::isfinite(prev) && std::abs(bound - prev) <= opt_.tol * std::abs(bound)) break;
      prev = bound;
    }
    m_step();
    return lower_bound();
  }

  std::vector<Mode> modes() const {
    std::vector<Mode> out(k_);
    double asum = std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
    for (int c = 0; c < k_; ++c) {
      out[c].mean = m_[c];
      out[c].std = std::sqrt(1.0 / (nu_[c] * w_[c]));
      out[c].weight = alpha_[c] / asum;
    }
    return out;
  }

 private:
  double& r(std::size_t n, int c) { return resp_[n * k_ + c]; }
  double r(std::size_t n, int c) const { return resp_[n * k_ + c]; }

  void stats(std::vector<double>& nk, std::vector<double>& xbar, std::vector<double>& sk) const {
    nk.assign(k_, 0.0);
    xbar.assign(k_, 0.0);
    sk.assign(k_, 0.0);
    for (std::size_t n = 0; n < x_.size(); ++n)
      for (int c = 0; c < k_; ++c) {
        nk[c] += r(n, c);
        xbar[c] += r(n, c) * x_[n];
      }
    for (int c = 0; c < k_; ++c) {
      nk[c] += 10 * std::numeric_limits<double>::epsilon();
      xbar[c] /= nk[c];
    }
    for (std::size_t n = 0; n < x_.size(); ++n)
      for (int c = 0; c < k_; ++c) sk[c] += r(n, c) * (x_[n] - xbar[c]) * (x_[n] - xbar[c]);
    for (int c = 0; c < k_; ++c) sk[c] /= nk[c];
  }

  void m_step() {
    stats(nk_, xbar_, sk_);
    for (int c = 0; c < k_; ++c) {
      alpha_[c] = opt_.weight_concentration + nk_[c];
      beta_[c] = beta0_ + nk_[c];
      m_[c] = (beta0_ * m0_ + nk_[c] * xbar_[c]) / beta_[c];
      nu_[c] = nu0_ + nk_[c];
      double winv = winv0_ + nk_[c] * sk_[c] +
                    beta0_ * nk_[c] / (beta0_ + nk_[c]) * (xbar_[c] - m0_) * (xbar_[c] - m0_);
      w_[c] = 1.0 / winv;
    }
  }

  double expected_log_precision(int c) const {
    return boost::math::digamma(nu_[c] / 2.0) + std::numbers::ln2 + std::log(w_[c]);
  }
  double expected_log_weight(int c, double alpha_sum) const {
    return boost::math::digamma(alpha_[c]) - boost::math::digamma(alpha_sum);
  }

  void e_step() {
    const double asum = std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
    std::vector<double> lpi(k_), llam(k_);
    for (int c = 0; c < k_; ++c) {
      lpi[c] = expected_log_weight(c, asum);
      llam[c] = expected_log_precision(c);
    }
    std::vector<double> logr(k_);
    for (std::size_t n = 0; n < x_.size(); ++n) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k_; ++c) {
        double d = x_[n] - m_[c];
        logr[c] = lpi[c] + 0.5 * llam[c] - 0.5 * std::log(2 * std::numbers::pi) -
                  0.5 * (1.0 / beta_[c] + nu_[c] * w_[c] * d * d);
        mx = std::max(mx, logr[c]);
      }
      double s = 0.0;
      for (int c = 0; c < k_; ++c) s += std::exp(logr[c] - mx);
      for (int c = 0; c < k_; ++c) r(n, c) = std::exp(logr[c] - mx) / s;
    }
  }

  static double log_c(const std::vector<double>& a) {
    double s = 0.0, lg = 0.0;
    for (double v : a) {
      s += v;
      lg += std::lgamma(v);
    }
    return std::lgamma(s) - lg;
  }
  static double log_b(double w, double nu) {
    return -0.5 * nu * std::log(w) - 0.5 * nu * std::numbers::ln2 - std::lgamma(nu / 2.0);
  }

  // Variational lower bound (1-D Gaussian-Gamma mixture).
  double lower_bound() const {
    const double asum = std::accumulate(alpha_.begin(), alpha_.end(), 0.0);
    const double two_pi = 2 * std::numbers::pi;
    double lp_x = 0, lp_z = 0, lp_pi, lp_mu = 0, lq_z = 0, lq_pi, lq_mu = 0;
    std::vector<double> lpi(k_), llam(k_);
    for (int c = 0; c < k_; ++c) {
      lpi[c] = expected_log_weight(c, asum);
      llam[c] = expected_log_precision(c);
    }
    for (int c = 0; c < k_; ++c) {
      double dm = xbar_[c] - m_[c];
      lp_x += 0.5 * nk_[c] *
              (llam[c] - 1.0 / beta_[c] - nu_[c] * sk_[c] * w_[c] - nu_[c] * w_[c] * dm * dm -
               std::log(two_pi));
      double dm0 = m_[c] - m0_;
      lp_mu += 0.5 * (std::log(beta0_ / two_pi) + llam[c] - beta0_ / beta_[c] -
                      beta0_ * nu_[c] * dm0 * dm0 * w_[c]);
      lp_mu += (nu0_ - 2.0) / 2.0 * llam[c] - 0.5 * nu_[c] * winv0_ * w_[c];
      double entropy_lam = -log_b(w_[c], nu_[c]) - (nu_[c] - 2.0) / 2.0 * llam[c] + nu_[c] / 2.0;
      lq_mu += 0.5 * llam[c] + 0.5 * std::log(beta_[c] / two_pi) - 0.5 - entropy_lam;
    }
    lp_mu += k_ * log_b(1.0 / winv0_, nu0_);
    for (std::size_t n = 0; n < x_.size(); ++n)
      for (int c = 0; c < k_; ++c) {
        double rv = r(n, c);
        lp_z += rv * lpi[c];
        if (rv > 0) lq_z += rv * std::log(rv);
      }
    std::vector<double> a0(k_, opt_.weight_concentration);
    lp_pi = log_c(a0);
    lq_pi = log_c(alpha_);
    for (int c = 0; c < k_; ++c) {
      lp_pi += (opt_.weight_concentration - 1.0) * lpi[c];
      lq_pi += (alpha_[c] - 1.0) * lpi[c];
    }
    return lp_x + lp_z + lp_pi + lp_mu - lq_z - lq_pi - lq_mu;
  }

  std::span<const double> x_;
  int k_;
  MixtureOptions opt_;
  double m0_ = 0, winv0_ = 1, beta0_ = 1.0, nu0_ = 1.0;
  std::vector<double> resp_;
  std::vector<double> alpha_, beta_, m_, nu_, w_;
  std::vector<double> nk_, xbar_, sk_;
};

}  // namespace detail

/// Fits a 1-D variational Gaussian mixture with at most `opt.max_modes`
/// components and returns the active modes (weight >= prune_weight),
/// weights renormalized, sorted by mean. Adjacent active modes are merged
/// whenever that raises the variational lower bound.
inline std::vector<Mode> fit_mixture_1d(std::span<const double> x, const MixtureOptions& opt = {}) {
  if (x.empty()) throw Error("fit_mixture_1d: empty input");
  if (opt.max_modes < 1) throw Error("fit_mixture_1d: max_modes must be >= 1");

  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  auto distinct = static_cast<int>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());

  if (opt.max_modes == 1 || distinct == 1) {
    double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(x.size()));
    return {Mode{mean, sd > 0 ? sd : 1.0, 1.0}};
  }

  const int k = std::min(opt.max_modes, distinct);
  detail::VariationalMixture1D vb(x, k, opt);
  vb.init_quantiles();
  double bound = vb.fit();

  auto active_of = [&](const std::vector<Mode>& ms) {
    std::vector<int> idx;
    for (int c = 0; c < k; ++c)
      if (ms[c].weight >= opt.prune_weight) idx.push_back(c);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return ms[a].mean < ms[b].mean; });
    return idx;
  };

  for (bool improved = true; improved;) {
    improved = false;
    auto ms = vb.modes();
    auto act = active_of(ms);
    if (act.size() < 2) break;
    const auto base = vb.responsibilities();
    for (std::size_t i = 0; i + 1 < act.size(); ++i) {
      detail::VariationalMixture1D trial(x, k, opt);
      auto& rs = trial.responsibilities();
      rs = base;
      for (std::size_t n = 0; n < x.size(); ++n) {
        rs[n * k + act[i]] += rs[n * k + act[i + 1]];
        rs[n * k + act[i + 1]] = 0.0;
      }
      double b = trial.fit();
      if (b > bound + 1e-9 * std::abs(bound)) {
        vb = std::move(trial);
        bound = b;
        improved = true;
        break;
      }
    }
  }

  auto ms = vb.modes();
  auto act = active_of(ms);
  std::vector<Mode> out;
  double wsum = 0.0;
  for (int c : act) {
    out.push_back(ms[c]);
    wsum += ms[c].weight;
  }
  for (auto& m : out) {
    m.weight /= wsum;
    if (!(m.std > 1e-12)) m.std = 1e-12;
  }
  return out;
}

}  // namespace cttvae
