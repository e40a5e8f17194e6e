#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cttvae/data_model.hpp"

namespace cttvae {

struct ClassifierConfig {
  enum class Kind { gradient_boosting, logistic_regression };
  Kind kind = Kind::gradient_boosting;
  int iterations = 150;        // boosting rounds, [50, 300]
  int depth = 4;               // tree depth, [3, 10]
  double learning_rate = 0.1;  // [0.01, 0.3]
  double subsample = 0.8;      // row fraction per boosting round
  double C = 1.0;              // inverse L2 strength for logistic regression, [0.01, 10]
  std::uint64_t seed = 0;

  void validate() const {
    if (kind == Kind::gradient_boosting) {
      if (iterations < 50 || iterations > 300) throw ConfigError("classifier: iterations must lie in [50, 300]");
      if (depth < 3 || depth > 10) throw ConfigError("classifier: depth must lie in [3, 10]");
      if (learning_rate < 0.01 || learning_rate > 0.3)
        throw ConfigError("classifier: learning_rate must lie in [0.01, 0.3]");
      if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("classifier: subsample must lie in (0, 1]");
    } else if (C < 0.01 || C > 10.0) {
      throw ConfigError("classifier: C must lie in [0.01, 10]");
    }
  }
};

inline nlohmann::json to_json(const ClassifierConfig& c) {
  if (c.kind == ClassifierConfig::Kind::logistic_regression)
    return {{"kind", "logistic_regression"}, {"C", c.C}, {"seed", c.seed}};
  return {{"kind", "gradient_boosting"}, {"iterations", c.iterations}, {"depth", c.depth},
          {"learning_rate", c.learning_rate}, {"subsample", c.subsample}, {"seed", c.seed}};
}

inline ClassifierConfig classifier_config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  auto kind = j.value("kind", std::string("gradient_boosting"));
  if (kind == "gradient_boosting") c.kind = ClassifierConfig::Kind::gradient_boosting;
  else if (kind == "logistic_regression") c.kind = ClassifierConfig::Kind::logistic_regression;
  else throw ConfigError("classifier: unknown kind " + kind);
  c.iterations = j.value("iterations", c.iterations);
  c.depth = j.value("depth", c.depth);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.subsample = j.value("subsample", c.subsample);
  c.C = j.value("C", c.C);
  c.seed = j.value("seed", c.seed);
  return c;
}

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Classifier inputs: raw numericals and one-hot categoricals, target excluded.
struct ClassifierData {
  FeatureMatrix x;
  std::vector<int> y;
};

inline ClassifierData classifier_features(const Table& t, const TableSchema& schema) {
  const auto tidx = schema.target_index();
  int width = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (c == tidx) continue;
    width += schema.columns[c].kind == ColumnKind::numerical ? 1 : static_cast<int>(schema.columns[c].vocab.size());
  }
  ClassifierData d;
  d.x = FeatureMatrix::Zero(static_cast<Eigen::Index>(t.rows.size()), width);
  d.y.resize(t.rows.size());
  std::vector<std::size_t> src(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) src[c] = t.col(schema.columns[c].name);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    int off = 0;
    const auto row = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      const auto& spec = schema.columns[c];
      const auto& cell = t.rows[r][src[c]];
      if (c == tidx) {
        int idx = spec.category_index(cell);
        if (idx < 0) throw Error("classifier_features: unknown class '" + cell + "'");
        d.y[r] = idx;
        continue;
      }
      if (spec.kind == ColumnKind::numerical) {
        double v;
        if (!parse_double(cell, v)) throw Error("classifier_features: non-numeric '" + cell + "' in " + spec.name);
        d.x(row, off++) = v;
      } else {
        int idx = spec.category_index(cell);
        if (idx >= 0) d.x(row, off + idx) = 1.0;  // unseen categories encode as all-zero
        off += static_cast<int>(spec.vocab.size());
      }
    }
  }
  return d;
}

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual void fit(const FeatureMatrix& x, const std::vector<int>& y, int num_classes) = 0;
  virtual std::vector<int> predict(const FeatureMatrix& x) const = 0;
};

namespace detail {

inline FeatureMatrix softmax_rows(const FeatureMatrix& f) {
  FeatureMatrix p(f.rows(), f.cols());
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    double mx = f.row(r).maxCoeff();
    p.row(r) = (f.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

inline std::vector<int> argmax_rows(const FeatureMatrix& f) {
  std::vector<int> out(static_cast<std::size_t>(f.rows()));
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    Eigen::Index a;
    f.row(r).maxCoeff(&a);
    out[static_cast<std::size_t>(r)] = static_cast<int>(a);
  }
  return out;
}

}  // namespace detail

/// Second-order gradient boosting with softmax loss, one depth-limited tree
/// per class per round, splits searched over quantile histograms.
class GradientBoostingClassifier : public Classifier {
 public:
  explicit GradientBoostingClassifier(ClassifierConfig cfg) : cfg_(cfg) {}

  void fit(const FeatureMatrix& x, const std::vector<int>& y, int num_classes) override {
    const auto n = x.rows();
    k_ = num_classes;
    trees_.clear();
    build_bins(x);
    std::vector<std::vector<std::uint8_t>> binned(static_cast<std::size_t>(x.cols()),
                                                  std::vector<std::uint8_t>(static_cast<std::size_t>(n)));
    for (Eigen::Index f = 0; f < x.cols(); ++f)
      for (Eigen::Index r = 0; r < n; ++r) binned[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)] = bin_of(f, x(r, f));

    base_.assign(static_cast<std::size_t>(k_), 0.0);
    std::vector<double> cnt(static_cast<std::size_t>(k_), 1.0);  // add-one smoothing
    for (int v : y) cnt[static_cast<std::size_t>(v)] += 1.0;
    const double tot = std::accumulate(cnt.begin(), cnt.end(), 0.0);
    for (int c = 0; c < k_; ++c) base_[static_cast<std::size_t>(c)] = std::log(cnt[static_cast<std::size_t>(c)] / tot);

    FeatureMatrix score(n, k_);
    for (int c = 0; c < k_; ++c) score.col(c).setConstant(base_[static_cast<std::size_t>(c)]);
    Rng rng{stream_seed(cfg_.seed, "classifier")};
    std::bernoulli_distribution take(cfg_.subsample);
    std::vector<double> g(static_cast<std::size_t>(n)), h(static_cast<std::size_t>(n));
    std::vector<std::size_t> rows;
    for (int it = 0; it < cfg_.iterations; ++it) {
      FeatureMatrix p = detail::softmax_rows(score);
      rows.clear();
      for (Eigen::Index r = 0; r < n; ++r)
        if (cfg_.subsample >= 1.0 || take(rng)) rows.push_back(static_cast<std::size_t>(r));
      if (rows.empty()) continue;
      for (int c = 0; c < k_; ++c) {
        for (Eigen::Index r = 0; r < n; ++r) {
          const double pr = p(r, c);
          g[static_cast<std::size_t>(r)] = pr - (y[static_cast<std::size_t>(r)] == c ? 1.0 : 0.0);
          h[static_cast<std::size_t>(r)] = std::max(pr * (1.0 - pr), 1e-6);
        }
        Tree tree = grow(binned, g, h, rows);
        for (Eigen::Index r = 0; r < n; ++r) score(r, c) += tree.predict(x.row(r));
        trees_.push_back(std::move(tree));
      }
    }
  }

  std::vector<int> predict(const FeatureMatrix& x) const override { return detail::argmax_rows(scores(x)); }

  FeatureMatrix scores(const FeatureMatrix& x) const {
    FeatureMatrix s(x.rows(), k_);
    for (int c = 0; c < k_; ++c) s.col(c).setConstant(base_[static_cast<std::size_t>(c)]);
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      const auto c = static_cast<Eigen::Index>(t % static_cast<std::size_t>(k_));
      for (Eigen::Index r = 0; r < x.rows(); ++r) s(r, c) += trees_[t].predict(x.row(r));
    }
    return s;
  }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;
    double predict(const Eigen::Ref<const Eigen::Matrix<double, 1, Eigen::Dynamic>>& row) const {
      int i = 0;
      while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(i)];
        i = row(nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
      return nodes[static_cast<std::size_t>(i)].value;
    }
  };

  static constexpr int kMaxBins = 64;
  static constexpr double kLambda = 1.0;
  static constexpr double kMinChildHessian = 1e-3;

  void build_bins(const FeatureMatrix& x) {
    cuts_.assign(static_cast<std::size_t>(x.cols()), {});
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      std::vector<double> v(x.col(f).data() ? static_cast<std::size_t>(x.rows()) : 0);
      for (Eigen::Index r = 0; r < x.rows(); ++r) v[static_cast<std::size_t>(r)] = x(r, f);
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      auto& cuts = cuts_[static_cast<std::size_t>(f)];
      if (v.size() <= kMaxBins) {
        for (std::size_t i = 0; i + 1 < v.size(); ++i) cuts.push_back(0.5 * (v[i] + v[i + 1]));
      } else {
        for (int q = 1; q < kMaxBins; ++q) {
          auto i = static_cast<std::size_t>(static_cast<double>(q) * static_cast<double>(v.size()) / kMaxBins);
          double c = 0.5 * (v[i - 1] + v[i]);
          if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
        }
      }
    }
  }

  std::uint8_t bin_of(Eigen::Index f, double v) const {
    const auto& cuts = cuts_[static_cast<std::size_t>(f)];
    return static_cast<std::uint8_t>(std::lower_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
  }

  Tree grow(const std::vector<std::vector<std::uint8_t>>& binned, const std::vector<double>& g,
            const std::vector<double>& h, const std::vector<std::size_t>& rows) const {
    Tree tree;
    struct Work {
      int node;
      std::vector<std::size_t> rows;
      int depth;
    };
    std::vector<Work> stack;
    tree.nodes.push_back({});
    stack.push_back({0, rows, 0});
    std::vector<double> hg(kMaxBins + 1), hh(kMaxBins + 1);
    while (!stack.empty()) {
      Work w = std::move(stack.back());
      stack.pop_back();
      double gs = 0, hs = 0;
      for (auto r : w.rows) {
        gs += g[r];
        hs += h[r];
      }
      tree.nodes[static_cast<std::size_t>(w.node)].value = -cfg_.learning_rate * gs / (hs + kLambda);
      if (w.depth >= cfg_.depth || w.rows.size() < 2) continue;
      const double parent = gs * gs / (hs + kLambda);
      double best_gain = 1e-12;
      int best_f = -1, best_bin = -1;
      for (std::size_t f = 0; f < binned.size(); ++f) {
        const auto nb = cuts_[f].size() + 1;
        if (nb < 2) continue;
        std::fill(hg.begin(), hg.begin() + static_cast<std::ptrdiff_t>(nb), 0.0);
        std::fill(hh.begin(), hh.begin() + static_cast<std::ptrdiff_t>(nb), 0.0);
        for (auto r : w.rows) {
          hg[binned[f][r]] += g[r];
          hh[binned[f][r]] += h[r];
        }
        double gl = 0, hl = 0;
        for (std::size_t b = 0; b + 1 < nb; ++b) {
          gl += hg[b];
          hl += hh[b];
          const double gr = gs - gl, hr = hs - hl;
          if (hl < kMinChildHessian || hr < kMinChildHessian) continue;
          const double gain = gl * gl / (hl + kLambda) + gr * gr / (hr + kLambda) - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_f = static_cast<int>(f);
            best_bin = static_cast<int>(b);
          }
        }
      }
      if (best_f < 0) continue;
      Work lw{static_cast<int>(tree.nodes.size()), {}, w.depth + 1};
      Work rw{static_cast<int>(tree.nodes.size()) + 1, {}, w.depth + 1};
      for (auto r : w.rows)
        (binned[static_cast<std::size_t>(best_f)][r] <= best_bin ? lw.rows : rw.rows).push_back(r);
      auto& nd = tree.nodes[static_cast<std::size_t>(w.node)];
      nd.feature = best_f;
      nd.threshold = cuts_[static_cast<std::size_t>(best_f)][static_cast<std::size_t>(best_bin)];
      nd.left = lw.node;
      nd.right = rw.node;
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      stack.push_back(std::move(rw));
      stack.push_back(std::move(lw));
    }
    return tree;
  }

  ClassifierConfig cfg_;
  int k_ = 2;
  std::vector<double> base_;
  std::vector<std::vector<double>> cuts_;
  std::vector<Tree> trees_;
};

/// Multinomial logistic regression on standardized features, L2 penalty
/// ||W||^2 / (2 C n), fitted by full-batch gradient descent.
class LogisticRegressionClassifier : public Classifier {
 public:
  explicit LogisticRegressionClassifier(ClassifierConfig cfg, int max_iter = 500) : cfg_(cfg), max_iter_(max_iter) {}

  void fit(const FeatureMatrix& x, const std::vector<int>& y, int num_classes) override {
    const auto n = x.rows(), d = x.cols();
    mean_ = x.colwise().mean();
    scale_ = ((x.rowwise() - mean_).array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    for (Eigen::Index j = 0; j < d; ++j)
      if (!(scale_(j) > 0)) scale_(j) = 1.0;
    FeatureMatrix xs = standardize(x);
    FeatureMatrix onehot = FeatureMatrix::Zero(n, num_classes);
    for (Eigen::Index r = 0; r < n; ++r) onehot(r, y[static_cast<std::size_t>(r)]) = 1.0;
    w_ = FeatureMatrix::Zero(d, num_classes);
    b_ = Eigen::Matrix<double, 1, Eigen::Dynamic>::Zero(num_classes);
    const double reg = 1.0 / (cfg_.C * static_cast<double>(n));
    const double lr = 0.5;
    for (int it = 0; it < max_iter_; ++it) {
      FeatureMatrix logits = xs * w_;
      logits.rowwise() += b_;
      FeatureMatrix err = (detail::softmax_rows(logits) - onehot) / static_cast<double>(n);
      w_ -= lr * (xs.transpose() * err + reg * w_);
      b_ -= lr * err.colwise().sum();
    }
  }

  std::vector<int> predict(const FeatureMatrix& x) const override {
    FeatureMatrix logits = standardize(x) * w_;
    logits.rowwise() += b_;
    return detail::argmax_rows(logits);
  }

 private:
  FeatureMatrix standardize(const FeatureMatrix& x) const {
    FeatureMatrix xs = x.rowwise() - mean_;
    xs.array().rowwise() /= scale_.array();
    return xs;
  }

  ClassifierConfig cfg_;
  int max_iter_;
  Eigen::Matrix<double, 1, Eigen::Dynamic> mean_, scale_, b_;
  FeatureMatrix w_;
};

inline std::unique_ptr<Classifier> make_classifier(const ClassifierConfig& cfg) {
  if (cfg.kind == ClassifierConfig::Kind::logistic_regression)
    return std::make_unique<LogisticRegressionClassifier>(cfg);
  return std::make_unique<GradientBoostingClassifier>(cfg);
}

}  // namespace cttvae
