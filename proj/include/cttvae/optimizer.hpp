#pragma once

#include <cmath>
#include <vector>

#include "cttvae/nn.hpp"

namespace cttvae {

/// Adam with decoupled weight decay.
template <class T>
class AdamW {
 public:
  struct Options {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
  };

  AdamW(const nn::ParamStore<T>& ps, Options opt) : opt_(opt) {
    for (const auto& p : ps.all()) {
      m_.push_back(nn::Mat<T>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(nn::Mat<T>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(nn::ParamStore<T>& ps) {
    ++t_;
    const T b1 = T(opt_.beta1), b2 = T(opt_.beta2);
    const T c1 = T(1) - std::pow(b1, T(t_));
    const T c2 = T(1) - std::pow(b2, T(t_));
    const T lr = T(opt_.lr), eps = T(opt_.eps), decay = T(1) - T(opt_.lr * opt_.weight_decay);
    auto& params = ps.all();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      m_[i] = b1 * m_[i] + (T(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
      p.value *= decay;
      p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  Options opt_;
  std::vector<nn::Mat<T>> m_, v_;
  long t_ = 0;
};

}  // namespace cttvae
