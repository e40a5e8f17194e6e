#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cttvae/core.hpp"

// Minimal dense layers with explicit backward passes. Activations are
// row-major (one row per sample or per token); weights map in -> out
// as `y = x W + b`.
namespace cttvae::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <class T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat<T>::Zero(rows, cols)), grad(Mat<T>::Zero(rows, cols)) {}
};

/// Parameters live in one vector; layers refer to them by index so the
/// owning model stays copyable.
template <class T>
class ParamStore {
 public:
  int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    params_.emplace_back(std::move(name), rows, cols);
    return static_cast<int>(params_.size()) - 1;
  }
  Param<T>& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  const Param<T>& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  std::vector<Param<T>>& all() { return params_; }
  const std::vector<Param<T>>& all() const { return params_; }
  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

 private:
  std::vector<Param<T>> params_;
};

template <class T>
struct Linear {
  int w = -1, b = -1;
  Eigen::Index in = 0, out = 0;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, Eigen::Index in_dim, Eigen::Index out_dim)
      : w(ps.add(name + ".weight", in_dim, out_dim)), b(ps.add(name + ".bias", 1, out_dim)), in(in_dim),
        out(out_dim) {}

  // PyTorch-style uniform(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  void init(ParamStore<T>& ps, Rng& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : ps[w].value.reshaped()) v = static_cast<T>(bound * u(rng));
    for (auto& v : ps[b].value.reshaped()) v = static_cast<T>(bound * u(rng));
  }

  template <class Derived>
  Mat<T> forward(const ParamStore<T>& ps, const Eigen::MatrixBase<Derived>& x) const {
    Mat<T> y = x * ps[w].value;
    y.rowwise() += ps[b].value.row(0);
    return y;
  }

  /// Accumulates weight/bias gradients and returns dL/dx.
  template <class DX, class DY>
  Mat<T> backward(ParamStore<T>& ps, const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DY>& dy) const {
    ps[w].grad.noalias() += x.transpose() * dy;
    ps[b].grad.row(0) += dy.colwise().sum();
    return dy * ps[w].value.transpose();
  }
};

template <class T>
struct LayerNorm {
  int gamma = -1, beta = -1;
  T eps = T(1e-5);

  struct Cache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, Eigen::Index dim)
      : gamma(ps.add(name + ".weight", 1, dim)), beta(ps.add(name + ".bias", 1, dim)) {
    ps[gamma].value.setOnes();
  }

  Mat<T> forward(const ParamStore<T>& ps, const Mat<T>& x, Cache* cache) const {
    const auto n = x.cols();
    Eigen::Matrix<T, Eigen::Dynamic, 1> mean = x.rowwise().mean();
    Mat<T> xc = x.colwise() - mean;
    Eigen::Matrix<T, Eigen::Dynamic, 1> inv =
        ((xc.array().square().rowwise().sum() / T(n)) + eps).rsqrt().matrix();
    Mat<T> xhat = xc.array().colwise() * inv.array();
    Mat<T> y = xhat.array().rowwise() * ps[gamma].value.row(0).array();
    y.rowwise() += ps[beta].value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv);
    }
    return y;
  }

  Mat<T> backward(ParamStore<T>& ps, const Cache& c, const Mat<T>& dy) const {
    const T n = T(dy.cols());
    ps[gamma].grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    ps[beta].grad.row(0) += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * ps[gamma].value.row(0).array();
    Eigen::Matrix<T, Eigen::Dynamic, 1> s1 = dxhat.rowwise().sum();
    Eigen::Matrix<T, Eigen::Dynamic, 1> s2 = (dxhat.array() * c.xhat.array()).rowwise().sum();
    Mat<T> dx = (n * dxhat.array()).colwise() - s1.array();
    dx.array() -= c.xhat.array().colwise() * s2.array();
    dx.array().colwise() *= c.inv_std.array() / n;
    return dx;
  }
};

/// Multi-head self-attention over groups of `tokens` consecutive rows.
template <class T>
struct SelfAttention {
  Linear<T> qkv, proj;
  Eigen::Index dim = 0;
  int heads = 1;

  struct Cache {
    Mat<T> x, qkv, attn, context;  // attn: (groups*heads*tokens) x tokens
  };

  SelfAttention() = default;
  SelfAttention(ParamStore<T>& ps, const std::string& name, Eigen::Index d, int h)
      : qkv(ps, name + ".in_proj", d, 3 * d), proj(ps, name + ".out_proj", d, d), dim(d), heads(h) {}

  void init(ParamStore<T>& ps, Rng& rng) const {
    qkv.init(ps, rng);
    proj.init(ps, rng);
  }

  Mat<T> forward(const ParamStore<T>& ps, const Mat<T>& x, Eigen::Index tokens, Cache* cache) const {
    const Eigen::Index groups = x.rows() / tokens;
    const Eigen::Index dh = dim / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    Mat<T> q = qkv.forward(ps, x);
    Mat<T> ctx(x.rows(), dim);
    Mat<T> attn(groups * heads * tokens, tokens);
    for (Eigen::Index g = 0; g < groups; ++g) {
      for (int h = 0; h < heads; ++h) {
        auto qb = q.block(g * tokens, h * dh, tokens, dh);
        auto kb = q.block(g * tokens, dim + h * dh, tokens, dh);
        auto vb = q.block(g * tokens, 2 * dim + h * dh, tokens, dh);
        auto p = attn.block((g * heads + h) * tokens, 0, tokens, tokens);
        p.noalias() = scale * (qb * kb.transpose());
        for (Eigen::Index i = 0; i < tokens; ++i) {
          T mx = p.row(i).maxCoeff();
          p.row(i) = (p.row(i).array() - mx).exp();
          p.row(i) /= p.row(i).sum();
        }
        ctx.block(g * tokens, h * dh, tokens, dh).noalias() = p * vb;
      }
    }
    Mat<T> y = proj.forward(ps, ctx);
    if (cache) {
      cache->x = x;
      cache->qkv = std::move(q);
      cache->attn = std::move(attn);
      cache->context = std::move(ctx);
    }
    return y;
  }

  Mat<T> backward(ParamStore<T>& ps, const Cache& c, const Mat<T>& dy, Eigen::Index tokens) const {
    const Eigen::Index groups = c.x.rows() / tokens;
    const Eigen::Index dh = dim / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    Mat<T> dctx = proj.backward(ps, c.context, dy);
    Mat<T> dq = Mat<T>::Zero(c.qkv.rows(), c.qkv.cols());
    Mat<T> dp(tokens, tokens);
    for (Eigen::Index g = 0; g < groups; ++g) {
      for (int h = 0; h < heads; ++h) {
        auto qb = c.qkv.block(g * tokens, h * dh, tokens, dh);
        auto kb = c.qkv.block(g * tokens, dim + h * dh, tokens, dh);
        auto vb = c.qkv.block(g * tokens, 2 * dim + h * dh, tokens, dh);
        auto p = c.attn.block((g * heads + h) * tokens, 0, tokens, tokens);
        auto dout = dctx.block(g * tokens, h * dh, tokens, dh);
        dp.noalias() = dout * vb.transpose();
        dq.block(g * tokens, 2 * dim + h * dh, tokens, dh).noalias() = p.transpose() * dout;
        Eigen::Matrix<T, Eigen::Dynamic, 1> rs = (dp.array() * p.array()).rowwise().sum();
        Mat<T> ds = p.array() * (dp.array().colwise() - rs.array());
        ds *= scale;
        dq.block(g * tokens, h * dh, tokens, dh).noalias() = ds * kb;
        dq.block(g * tokens, dim + h * dh, tokens, dh).noalias() = ds.transpose() * qb;
      }
    }
    return qkv.backward(ps, c.x, dq);
  }
};

/// Inverted dropout mask (entries 0 or 1/(1-p)); empty when inactive.
template <class T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return {};
  std::bernoulli_distribution keep(1.0 - p);
  Mat<T> m(rows, cols);
  const T s = T(1.0 / (1.0 - p));
  for (auto& v : m.reshaped()) v = keep(*rng) ? s : T(0);
  return m;
}

template <class T>
void apply_mask(Mat<T>& x, const Mat<T>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

}  // namespace cttvae::nn
