#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cttvae/objectives.hpp"
#include "cttvae/optimizer.hpp"
#include "cttvae/tbs.hpp"
#include "cttvae/vae.hpp"

namespace cttvae {

struct TrainOptions {
  int batch_size = 64;
  int epochs = 50;
  double learning_rate = 1e-3;
  double l2scale = 1e-5;
  std::uint64_t seed = 0;
  double lambda = 1.0;  // TBS mixing weight; 1 = empirical class proportions
  LossWeights weights;
  SemiHardWindow window = SemiHardWindow::min_positive;
  std::vector<double> kernel_scales{kDefaultKernelScales.begin(), kDefaultKernelScales.end()};
};

struct LossBreakdown {
  double recon = 0, mmd = 0, triplet = 0, total = 0;
  std::size_t triplets = 0;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean;
};

/// Where the stochastic inputs of one training step come from: either an rng
/// stream or a fixed value (fixed values take precedence).
template <class T>
struct StepSources {
  Rng* dropout = nullptr;
  Rng* reparam = nullptr;
  const nn::Mat<T>* eps = nullptr;
  Rng* prior = nullptr;
  const nn::Mat<T>* prior_batch = nullptr;
  Rng* mining = nullptr;
  const TripletSet* triplets = nullptr;
};

template <class T>
nn::Mat<T> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  nn::Mat<T> m(rows, cols);
  for (auto& v : m.reshaped()) v = static_cast<T>(normal(rng));
  return m;
}

/// One forward/backward pass of the combined objective on a batch. Parameter
/// gradients are reset and then filled. Non-finite loss raises an Error.
template <class T>
LossBreakdown loss_and_gradients(TransformerVae<T>& model, const nn::Mat<T>& x, std::span<const int> labels,
                                 const TrainOptions& opt, const StepSources<T>& src, long step = -1) {
  using Mat = nn::Mat<T>;
  model.params().zero_grad();
  typename TransformerVae<T>::EncodeCache ecache;
  auto post = model.encode(x, src.dropout, &ecache, step);

  Mat eps;
  if (src.eps) {
    eps = *src.eps;
  } else {
    if (!src.reparam) throw Error("loss_and_gradients: no reparameterization source");
    eps = standard_normal<T>(post.mu.rows(), post.mu.cols(), *src.reparam);
  }
  Mat sigma = (post.log_var.array() * T(0.5)).exp();
  Mat z = post.mu.array() + sigma.array() * eps.array();

  typename TransformerVae<T>::DecodeCache dcache;
  Mat out = model.decode(z, post.h, &dcache);
  Mat d_out;
  LossBreakdown lb;
  lb.recon = static_cast<double>(reconstruction_loss(out, x, model.layout(), &d_out));

  Mat prior;
  if (src.prior_batch) {
    prior = *src.prior_batch;
  } else {
    if (!src.prior) throw Error("loss_and_gradients: no prior source");
    prior = standard_normal<T>(z.rows(), z.cols(), *src.prior);
  }
  Mat d_z_mmd;
  lb.mmd = static_cast<double>(mmd(z, prior, opt.kernel_scales, &d_z_mmd));

  Mat d_mu_trip = Mat::Zero(post.mu.rows(), post.mu.cols());
  const double alpha = opt.weights.alpha;
  if (alpha != 0.0 || src.triplets) {
    TripletSet mined;
    const TripletSet* ts = src.triplets;
    if (!ts) {
      if (!src.mining) throw Error("loss_and_gradients: no mining source");
      mined = mine_triplets(post.mu, labels, opt.weights.margin, *src.mining, opt.window);
      ts = &mined;
    }
    lb.triplet = static_cast<double>(triplet_loss(post.mu, *ts, opt.weights.margin, &d_mu_trip));
    lb.triplets = ts->count();
  }
  try {
    lb.total = total_loss(lb.recon, lb.mmd, lb.triplet, opt.weights);
  } catch (const Error&) {
    throw Error("non-finite loss at step " + std::to_string(step));
  }

  auto [d_z, d_h] = model.backward_decode(dcache, d_out);
  d_z += T(opt.weights.beta) * d_z_mmd;
  Mat d_mu = d_z + T(alpha) * d_mu_trip;
  Mat d_lv = (d_z.array() * eps.array() * sigma.array() * T(0.5)).matrix();
  model.backward_encode(ecache, d_mu, d_lv, d_h);
  return lb;
}

struct TrainResult {
  TransformerVae<double> model;
  std::vector<EpochLog> epochs;
  long steps = 0;
  double seconds = 0;
};

/// epochs * ceil(N / batch_size) AdamW steps on TBS-sampled batches.
inline TrainResult train_model(const EncodedMatrix& data, std::size_t num_classes, const ModelConfig& cfg,
                               const TrainOptions& opt,
                               const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (data.rows() == 0) throw Error("train: empty training matrix");
  if (opt.batch_size < 1 || opt.epochs < 1) throw Error("train: batch_size and epochs must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  res.model = TransformerVae<double>(cfg, data.layout, stream_seed(opt.seed, "init"));
  auto index = ClassIndex::from_labels(data.labels, num_classes);
  auto counts = index.counts();
  // Classes absent from the training rows cannot be sampled.
  std::vector<std::size_t> present;
  for (auto c : counts)
    if (c > 0) present.push_back(c);
  ClassPMF pmf = class_pmf(present, opt.lambda);
  if (present.size() != counts.size()) {
    std::vector<double> full;
    std::size_t k = 0;
    for (auto c : counts) full.push_back(c > 0 ? pmf.probs[k++] : 0.0);
    pmf.probs = full;
    pmf.class_counts = counts;
  }

  Rng tbs = make_stream(opt.seed, "tbs");
  Rng reparam = make_stream(opt.seed, "reparameterize");
  Rng prior = make_stream(opt.seed, "prior");
  Rng mining = make_stream(opt.seed, "mining");
  Rng dropout = make_stream(opt.seed, "dropout");
  AdamW<double> adam(res.model.params(), {.lr = opt.learning_rate, .weight_decay = opt.l2scale});

  const auto n = static_cast<std::size_t>(data.rows());
  const std::size_t bs = static_cast<std::size_t>(opt.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  nn::Mat<double> x(static_cast<Eigen::Index>(bs), data.data.cols());
  std::vector<int> labels(bs);
  StepSources<double> src{.dropout = cfg.dropout > 0 ? &dropout : nullptr,
                          .reparam = &reparam,
                          .prior = &prior,
                          .mining = &mining};
  for (int ep = 0; ep < opt.epochs; ++ep) {
    EpochLog log;
    log.epoch = ep;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      auto idx = sample_batch(index, pmf, bs, tbs);
      for (std::size_t i = 0; i < bs; ++i) {
        x.row(static_cast<Eigen::Index>(i)) = data.data.row(static_cast<Eigen::Index>(idx[i]));
        labels[i] = data.labels[idx[i]];
      }
      auto lb = loss_and_gradients(res.model, x, labels, opt, src, res.steps);
      adam.step(res.model.params());
      ++res.steps;
      log.mean.recon += lb.recon;
      log.mean.mmd += lb.mmd;
      log.mean.triplet += lb.triplet;
      log.mean.total += lb.total;
      log.mean.triplets += lb.triplets;
    }
    const double k = static_cast<double>(steps_per_epoch);
    log.mean.recon /= k;
    log.mean.mmd /= k;
    log.mean.triplet /= k;
    log.mean.total /= k;
    log.mean.triplets /= steps_per_epoch;
    if (on_epoch) on_epoch(log);
    res.epochs.push_back(log);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace cttvae
