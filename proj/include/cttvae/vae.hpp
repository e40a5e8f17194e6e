#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cttvae/data_model.hpp"
#include "cttvae/nn.hpp"

namespace cttvae {

struct ModelConfig {
  int latent_dim = 16;
  int embedding_dim = 64;
  int nhead = 4;
  int dim_feedforward = 512;
  int num_layers = 2;
  double dropout = 0.1;

  /// Structural checks only; hyperparameter grids are enforced by the run config.
  void validate() const {
    if (latent_dim < 1 || embedding_dim < 1 || nhead < 1 || dim_feedforward < 1 || num_layers < 1)
      throw ConfigError("model: all dimensions must be >= 1");
    if (embedding_dim % nhead != 0) throw ConfigError("model: embedding_dim must be divisible by nhead");
    if (!(dropout >= 0.0 && dropout <= 0.3)) throw ConfigError("model: dropout must lie in [0, 0.3]");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Allowed (embedding_dim, nhead) pairs of the hyperparameter surface.
inline bool attention_shape_allowed(int embedding_dim, int nhead) {
  static constexpr std::pair<int, int> allowed[] = {{64, 4}, {128, 4}, {128, 8}, {256, 8}};
  for (auto [e, h] : allowed)
    if (e == embedding_dim && h == nhead) return true;
  return false;
}

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"latent_dim", c.latent_dim},           {"embedding_dim", c.embedding_dim},
          {"nhead", c.nhead},                     {"dim_feedforward", c.dim_feedforward},
          {"num_layers", c.num_layers},           {"dropout", c.dropout}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.nhead = j.value("nhead", c.nhead);
  c.dim_feedforward = j.value("dim_feedforward", c.dim_feedforward);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.dropout = j.value("dropout", c.dropout);
  return c;
}

template <class T>
struct PosteriorParams {
  nn::Mat<T> mu;
  nn::Mat<T> log_var;
  nn::Mat<T> h;
};

/// z = mu + exp(log_var / 2) * eps; `eps` (optional) receives the noise.
template <class T>
nn::Mat<T> reparameterize(const PosteriorParams<T>& post, Rng& rng, nn::Mat<T>* eps = nullptr) {
  std::normal_distribution<double> normal;
  nn::Mat<T> e(post.mu.rows(), post.mu.cols());
  for (auto& v : e.reshaped()) v = static_cast<T>(normal(rng));
  nn::Mat<T> z = post.mu.array() + (post.log_var.array() * T(0.5)).exp() * e.array();
  if (eps) *eps = std::move(e);
  return z;
}

/// Squared error on numerical scalars plus softmax cross-entropy on every
/// categorical and mode-indicator block, summed over columns and averaged
/// over rows. `grad` (optional) receives dL/d(recon).
template <class T>
T reconstruction_loss(const nn::Mat<T>& recon, const nn::Mat<T>& target, const std::vector<Span>& layout,
                      nn::Mat<T>* grad = nullptr) {
  if (recon.rows() != target.rows() || recon.cols() != target.cols())
    throw Error("reconstruction_loss: shape mismatch");
  const Eigen::Index n = recon.rows();
  const T inv_n = T(1) / T(n);
  if (grad) grad->setZero(recon.rows(), recon.cols());
  T total = 0;
  auto softmax_ce = [&](Eigen::Index r, int start, int width) {
    auto logits = recon.row(r).segment(start, width);
    auto y = target.row(r).segment(start, width);
    T mx = logits.maxCoeff();
    nn::RowVec<T> p = (logits.array() - mx).exp().matrix();
    T z = p.sum();
    T lse = mx + std::log(z);
    total += (y.array() * (lse - logits.array())).sum();
    if (grad) {
      p /= z;
      grad->row(r).segment(start, width) = (p.array() * y.sum() - y.array()) * inv_n;
    }
  };
  for (Eigen::Index r = 0; r < n; ++r) {
    for (const auto& s : layout) {
      if (s.kind == ColumnKind::categorical) {
        softmax_ce(r, s.start, s.width);
      } else {
        T d = recon(r, s.start) - target(r, s.start);
        total += d * d;
        if (grad) (*grad)(r, s.start) = T(2) * d * inv_n;
        softmax_ce(r, s.start + 1, s.width - 1);
      }
    }
  }
  return total * inv_n;
}

/// Transformer encoder over per-column tokens plus an MLP decoder on (z || h).
template <class T = double>
class TransformerVae {
 public:
  using Mat = nn::Mat<T>;

  struct EncodeCache {
    Mat x;
    std::vector<typename nn::SelfAttention<T>::Cache> attn;
    std::vector<typename nn::LayerNorm<T>::Cache> ln1, ln2;
    std::vector<Mat> layer_in, x1, ff_pre, ff_act, mask_attn, mask_ff;
    Mat h;
  };
  struct DecodeCache {
    Mat input, a1, g1, a2, g2;
  };

  TransformerVae() = default;

  TransformerVae(const ModelConfig& cfg, std::vector<Span> layout, std::uint64_t init_seed)
      : cfg_(cfg), layout_(std::move(layout)) {
    cfg_.validate();
    const Eigen::Index e = cfg_.embedding_dim;
    for (std::size_t c = 0; c < layout_.size(); ++c)
      tokenizer_.emplace_back(ps_, "tokenizer." + std::to_string(c), layout_[c].width, e);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      const std::string p = "encoder." + std::to_string(l);
      Block b;
      b.attn = nn::SelfAttention<T>(ps_, p + ".attn", e, cfg_.nhead);
      b.ln1 = nn::LayerNorm<T>(ps_, p + ".norm1", e);
      b.ff1 = nn::Linear<T>(ps_, p + ".linear1", e, cfg_.dim_feedforward);
      b.ff2 = nn::Linear<T>(ps_, p + ".linear2", cfg_.dim_feedforward, e);
      b.ln2 = nn::LayerNorm<T>(ps_, p + ".norm2", e);
      blocks_.push_back(b);
    }
    head_ = nn::Linear<T>(ps_, "latent_head", e, 2 * cfg_.latent_dim);
    dec1_ = nn::Linear<T>(ps_, "decoder.0", cfg_.latent_dim + e, cfg_.dim_feedforward);
    dec2_ = nn::Linear<T>(ps_, "decoder.1", cfg_.dim_feedforward, cfg_.dim_feedforward);
    dec3_ = nn::Linear<T>(ps_, "decoder.2", cfg_.dim_feedforward, width());

    Rng rng{init_seed};
    for (const auto& t : tokenizer_) t.init(ps_, rng);
    for (const auto& b : blocks_) {
      b.attn.init(ps_, rng);
      b.ff1.init(ps_, rng);
      b.ff2.init(ps_, rng);
    }
    head_.init(ps_, rng);
    dec1_.init(ps_, rng);
    dec2_.init(ps_, rng);
    dec3_.init(ps_, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Span>& layout() const { return layout_; }
  int width() const { return layout_.empty() ? 0 : layout_.back().start + layout_.back().width; }
  Eigen::Index tokens() const { return static_cast<Eigen::Index>(layout_.size()); }
  nn::ParamStore<T>& params() { return ps_; }
  const nn::ParamStore<T>& params() const { return ps_; }

  /// Posterior parameters and contextual embedding. Dropout is active only
  /// when `dropout_rng` is non-null.
  PosteriorParams<T> encode(const Mat& x, Rng* dropout_rng = nullptr, EncodeCache* cache = nullptr,
                            long batch_index = -1) const {
    if (x.cols() != width())
      throw Error("encode: layout mismatch (input width " + std::to_string(x.cols()) + ", model width " +
                  std::to_string(width()) + ")");
    const Eigen::Index b = x.rows(), t = tokens(), e = cfg_.embedding_dim;
    Mat tok(b, t * e);
    for (Eigen::Index c = 0; c < t; ++c) {
      const auto& s = layout_[static_cast<std::size_t>(c)];
      tok.middleCols(c * e, e) = tokenizer_[static_cast<std::size_t>(c)].forward(ps_, x.middleCols(s.start, s.width));
    }
    Mat cur = Eigen::Map<Mat>(tok.data(), b * t, e);
    if (cache) {
      cache->x = x;
      cache->attn.resize(blocks_.size());
      cache->ln1.resize(blocks_.size());
      cache->ln2.resize(blocks_.size());
      for (auto* v : {&cache->layer_in, &cache->x1, &cache->ff_pre, &cache->ff_act, &cache->mask_attn,
                      &cache->mask_ff})
        v->resize(blocks_.size());
    }
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const auto& blk = blocks_[l];
      Mat a = blk.attn.forward(ps_, cur, t, cache ? &cache->attn[l] : nullptr);
      Mat m1 = nn::dropout_mask<T>(a.rows(), a.cols(), cfg_.dropout, dropout_rng);
      nn::apply_mask(a, m1);
      Mat x1 = blk.ln1.forward(ps_, cur + a, cache ? &cache->ln1[l] : nullptr);
      Mat pre = blk.ff1.forward(ps_, x1);
      Mat act = pre.cwiseMax(T(0));
      Mat f = blk.ff2.forward(ps_, act);
      Mat m2 = nn::dropout_mask<T>(f.rows(), f.cols(), cfg_.dropout, dropout_rng);
      nn::apply_mask(f, m2);
      Mat out = blk.ln2.forward(ps_, x1 + f, cache ? &cache->ln2[l] : nullptr);
      if (cache) {
        cache->layer_in[l] = std::move(cur);
        cache->x1[l] = std::move(x1);
        cache->ff_pre[l] = std::move(pre);
        cache->ff_act[l] = std::move(act);
        cache->mask_attn[l] = std::move(m1);
        cache->mask_ff[l] = std::move(m2);
      }
      cur = std::move(out);
    }
    // Mean pool over tokens.
    Mat pooled = Mat::Zero(b, e);
    for (Eigen::Index c = 0; c < t; ++c) pooled += Eigen::Map<const Mat>(cur.data(), b, t * e).middleCols(c * e, e);
    pooled /= T(t);
    Mat lat = head_.forward(ps_, pooled);
    PosteriorParams<T> post{lat.leftCols(cfg_.latent_dim), lat.rightCols(cfg_.latent_dim), pooled};
    if (!post.mu.allFinite() || !post.log_var.allFinite() || !post.h.allFinite())
      throw Error("encode: non-finite activations" +
                  (batch_index >= 0 ? " in batch " + std::to_string(batch_index) : std::string()));
    if (cache) cache->h = post.h;
    return post;
  }

  Mat decode(const Mat& z, const Mat& h, DecodeCache* cache = nullptr) const {
    if (z.rows() != h.rows()) throw Error("decode: z and h row counts differ");
    if (z.cols() != cfg_.latent_dim || h.cols() != cfg_.embedding_dim) throw Error("decode: input width mismatch");
    Mat in(z.rows(), z.cols() + h.cols());
    in << z, h;
    Mat a1 = dec1_.forward(ps_, in);
    Mat g1 = a1.cwiseMax(T(0));
    Mat a2 = dec2_.forward(ps_, g1);
    Mat g2 = a2.cwiseMax(T(0));
    Mat out = dec3_.forward(ps_, g2);
    if (cache) {
      cache->input = std::move(in);
      cache->a1 = std::move(a1);
      cache->g1 = std::move(g1);
      cache->a2 = std::move(a2);
      cache->g2 = std::move(g2);
    }
    return out;
  }

  /// Accumulates decoder parameter gradients; returns (dL/dz, dL/dh).
  std::pair<Mat, Mat> backward_decode(const DecodeCache& c, const Mat& d_out) {
    Mat dg2 = dec3_.backward(ps_, c.g2, d_out);
    Mat da2 = dg2.array() * (c.a2.array() > T(0)).template cast<T>();
    Mat dg1 = dec2_.backward(ps_, c.g1, da2);
    Mat da1 = dg1.array() * (c.a1.array() > T(0)).template cast<T>();
    Mat din = dec1_.backward(ps_, c.input, da1);
    return {din.leftCols(cfg_.latent_dim), din.rightCols(cfg_.embedding_dim)};
  }

  /// Accumulates encoder parameter gradients from upstream dL/dmu, dL/dlog_var, dL/dh.
  void backward_encode(const EncodeCache& c, const Mat& d_mu, const Mat& d_log_var, const Mat& d_h) {
    const Eigen::Index b = c.x.rows(), t = tokens(), e = cfg_.embedding_dim;
    Mat d_lat(b, 2 * cfg_.latent_dim);
    d_lat << d_mu, d_log_var;
    Mat d_pool = head_.backward(ps_, c.h, d_lat) + d_h;
    Mat d_wide(b, t * e);
    for (Eigen::Index k = 0; k < t; ++k) d_wide.middleCols(k * e, e) = d_pool / T(t);
    Mat d_cur = Eigen::Map<Mat>(d_wide.data(), b * t, e);
    for (std::size_t l = blocks_.size(); l-- > 0;) {
      const auto& blk = blocks_[l];
      Mat d_r2 = blk.ln2.backward(ps_, c.ln2[l], d_cur);
      Mat d_f = d_r2;
      nn::apply_mask(d_f, c.mask_ff[l]);
      Mat d_act = blk.ff2.backward(ps_, c.ff_act[l], d_f);
      Mat d_pre = d_act.array() * (c.ff_pre[l].array() > T(0)).template cast<T>();
      Mat d_x1 = d_r2 + blk.ff1.backward(ps_, c.x1[l], d_pre);
      Mat d_r1 = blk.ln1.backward(ps_, c.ln1[l], d_x1);
      Mat d_a = d_r1;
      nn::apply_mask(d_a, c.mask_attn[l]);
      d_cur = d_r1 + blk.attn.backward(ps_, c.attn[l], d_a, t);
    }
    Mat d_tok = Eigen::Map<Mat>(d_cur.data(), b, t * e);
    for (Eigen::Index k = 0; k < t; ++k) {
      const auto& s = layout_[static_cast<std::size_t>(k)];
      tokenizer_[static_cast<std::size_t>(k)].backward(ps_, c.x.middleCols(s.start, s.width),
                                                        d_tok.middleCols(k * e, e));
    }
  }

 private:
  struct Block {
    nn::SelfAttention<T> attn;
    nn::LayerNorm<T> ln1, ln2;
    nn::Linear<T> ff1, ff2;
  };

  ModelConfig cfg_;
  std::vector<Span> layout_;
  nn::ParamStore<T> ps_;
  std::vector<nn::Linear<T>> tokenizer_;
  std::vector<Block> blocks_;
  nn::Linear<T> head_, dec1_, dec2_, dec3_;
};

}  // namespace cttvae
