#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cttvae/checkpoint.hpp"
#include "cttvae/trainer.hpp"
#include "support.hpp"

using namespace cttvae;
using Mat = nn::Mat<double>;

namespace {

struct TinySetup {
  TableSchema schema;
  EncodedMatrix enc;
  ModelConfig cfg;
};

TinySetup tiny(std::uint64_t seed = 3, int latent = 4, int ff = 32) {
  Rng rng{seed};
  Table t = testkit::random_table(rng, 60, 2, 1);
  TinySetup s;
  s.schema = testkit::fitted_schema(t, "y", 3);
  s.enc = encode_rows(t, s.schema);
  s.cfg.latent_dim = latent;
  s.cfg.embedding_dim = 64;
  s.cfg.nhead = 4;
  s.cfg.dim_feedforward = ff;
  s.cfg.num_layers = 2;
  s.cfg.dropout = 0.0;
  return s;
}

}  // namespace

TEST(ModelConfig, RejectsIndivisibleHeads) {
  ModelConfig c;
  c.embedding_dim = 64;
  c.nhead = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c.nhead = 4;
  c.dropout = 0.31;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, AttentionShapes) {
  EXPECT_TRUE(attention_shape_allowed(64, 4));
  EXPECT_TRUE(attention_shape_allowed(128, 8));
  EXPECT_TRUE(attention_shape_allowed(256, 8));
  EXPECT_FALSE(attention_shape_allowed(64, 8));
  EXPECT_FALSE(attention_shape_allowed(256, 4));
}

TEST(Encoder, ShapeContract) {
  auto s = tiny();
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  for (Eigen::Index n : {1, 5, 17}) {
    Mat x = s.enc.data.topRows(n);
    auto post = m.encode(x);
    EXPECT_EQ(post.mu.rows(), n);
    EXPECT_EQ(post.mu.cols(), 4);
    EXPECT_EQ(post.log_var.rows(), n);
    EXPECT_EQ(post.log_var.cols(), 4);
    EXPECT_EQ(post.h.rows(), n);
    EXPECT_EQ(post.h.cols(), 64);
    Mat out = m.decode(post.mu, post.h);
    EXPECT_EQ(out.rows(), n);
    EXPECT_EQ(out.cols(), s.enc.width());
  }
}

TEST(Encoder, DuplicateRowsGiveIdenticalOutputs) {
  auto s = tiny();
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  Mat x(2, s.enc.width());
  x.row(0) = s.enc.data.row(4);
  x.row(1) = s.enc.data.row(4);
  auto post = m.encode(x);
  EXPECT_EQ(post.mu.row(0), post.mu.row(1));
  EXPECT_EQ(post.log_var.row(0), post.log_var.row(1));
  EXPECT_EQ(post.h.row(0), post.h.row(1));
}

TEST(Encoder, PerturbingAFeatureChangesH) {
  auto s = tiny();
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  Mat x = s.enc.data.topRows(1);
  auto base = m.encode(x);
  x(0, 0) += 1e-3;
  auto moved = m.encode(x);
  EXPECT_GT((moved.h - base.h).norm(), 1e-9);
}

TEST(Encoder, LayoutMismatchThrows) {
  auto s = tiny();
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  Mat x = Mat::Zero(2, s.enc.width() + 1);
  EXPECT_THROW(m.encode(x), Error);
}

TEST(Encoder, NonFiniteInputNamesBatch) {
  auto s = tiny();
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  Mat x = s.enc.data.topRows(3);
  x(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    m.encode(x, nullptr, nullptr, 42);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("batch 42"), std::string::npos);
  }
}

TEST(Encoder, DropoutOnlyWithRng) {
  auto s = tiny();
  s.cfg.dropout = 0.2;
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  Mat x = s.enc.data.topRows(4);
  auto a = m.encode(x), b = m.encode(x);
  EXPECT_EQ(a.h, b.h);
  Rng r{5};
  auto c = m.encode(x, &r);
  EXPECT_GT((c.h - a.h).norm(), 0.0);
}

TEST(Decoder, RowMismatchThrows) {
  auto s = tiny();
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  EXPECT_THROW(m.decode(Mat::Zero(2, 4), Mat::Zero(3, 64)), Error);
}

TEST(Decoder, UsesBothZAndH) {
  auto s = tiny();
  TransformerVae<double> m(s.cfg, s.enc.layout, 1);
  auto post = m.encode(s.enc.data.topRows(2));
  Mat base = m.decode(post.mu, post.h);
  Rng rng{11};
  std::uniform_int_distribution<Eigen::Index> zc(0, 3), hc(0, 63);
  for (int probe = 0; probe < 3; ++probe) {
    Mat z = post.mu, h = post.h;
    z(0, zc(rng)) += 1e-4;
    EXPECT_GT((m.decode(z, post.h) - base).cwiseAbs().maxCoeff(), 0.0);
    h(0, hc(rng)) += 1e-4;
    EXPECT_GT((m.decode(post.mu, h) - base).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Reparameterize, DegenerateNoiseGivesMu) {
  PosteriorParams<double> p{Mat::Constant(3, 2, 1.5), Mat::Constant(3, 2, -1e4), Mat::Zero(3, 1)};
  Rng rng{1};
  EXPECT_EQ(reparameterize(p, rng), p.mu);
}

TEST(Reparameterize, SeededDeterminism) {
  PosteriorParams<double> p{Mat::Zero(4, 3), Mat::Zero(4, 3), Mat::Zero(4, 1)};
  Rng a{9}, b{9};
  EXPECT_EQ(reparameterize(p, a), reparameterize(p, b));
}

TEST(Reparameterize, MonteCarloMean) {
  const int n = 100000;
  PosteriorParams<double> p{Mat(n, 2), Mat(n, 2), Mat::Zero(n, 1)};
  p.mu.col(0).setConstant(1.0);
  p.mu.col(1).setConstant(-2.0);
  p.log_var.col(0).setConstant(std::log(4.0));
  p.log_var.col(1).setConstant(0.0);
  Rng rng{21};
  Mat z = reparameterize(p, rng);
  EXPECT_LT(std::abs(z.col(0).mean() - 1.0), 3 * 2.0 / std::sqrt(n));
  EXPECT_LT(std::abs(z.col(1).mean() + 2.0), 3 * 1.0 / std::sqrt(n));
}

TEST(ReconstructionLoss, PerfectReconstructionIsZero) {
  std::vector<Span> layout{{0, 3, 0, ColumnKind::categorical}, {3, 3, 1, ColumnKind::numerical}};
  Mat target(1, 6);
  target << 0, 1, 0, 0.25, 1, 0;
  Mat recon(1, 6);
  recon << -1e4, 1e4, -1e4, 0.25, 1e4, -1e4;
  EXPECT_NEAR(reconstruction_loss(recon, target, layout), 0.0, 1e-12);
}

TEST(ReconstructionLoss, UniformFourWayIsLn4) {
  std::vector<Span> layout{{0, 4, 0, ColumnKind::categorical}};
  Mat target(2, 4);
  target << 1, 0, 0, 0, 0, 0, 0, 1;
  EXPECT_NEAR(reconstruction_loss(Mat(Mat::Zero(2, 4)), target, layout), std::log(4.0), 1e-12);
}

TEST(ReconstructionLoss, MatchesElementwiseOracle) {
  auto s = tiny();
  Mat target = s.enc.data.topRows(5);
  Rng rng{8};
  std::normal_distribution<double> nd;
  Mat recon(5, target.cols());
  for (auto& v : recon.reshaped()) v = nd(rng);
  double expect = 0;
  for (int r = 0; r < 5; ++r)
    for (const auto& sp : s.enc.layout) {
      int start = sp.start, width = sp.width;
      if (sp.kind == ColumnKind::numerical) {
        expect += std::pow(recon(r, start) - target(r, start), 2);
        ++start;
        --width;
      }
      double z = 0;
      for (int j = 0; j < width; ++j) z += std::exp(recon(r, start + j));
      for (int j = 0; j < width; ++j)
        if (target(r, start + j) == 1.0) expect += -(recon(r, start + j) - std::log(z));
    }
  expect /= 5;
  EXPECT_NEAR(reconstruction_loss(recon, target, s.enc.layout), expect, 1e-9);
}

TEST(ReconstructionLoss, GradientMatchesFiniteDifferences) {
  auto s = tiny();
  Mat target = s.enc.data.topRows(4);
  Rng rng{2};
  std::normal_distribution<double> nd;
  Mat recon(4, target.cols());
  for (auto& v : recon.reshaped()) v = nd(rng);
  Mat g;
  reconstruction_loss(recon, target, s.enc.layout, &g);
  for (Eigen::Index i = 0; i < recon.size(); ++i) {
    Mat a = recon, b = recon;
    a.data()[i] += 1e-6;
    b.data()[i] -= 1e-6;
    const double fd = (reconstruction_loss(a, target, s.enc.layout) - reconstruction_loss(b, target, s.enc.layout)) / 2e-6;
    EXPECT_NEAR(g.data()[i], fd, 1e-6);
  }
}

TEST(Gradients, TotalLossMatchesFiniteDifferences) {
  auto s = tiny(5, 4, 32);
  TransformerVae<double> m(s.cfg, s.enc.layout, 17);
  Mat x = s.enc.data.topRows(8);
  std::vector<int> labels(s.enc.labels.begin(), s.enc.labels.begin() + 8);
  TrainOptions opt;
  opt.weights = {.beta = 1.0, .alpha = 1.0, .margin = 0.5};
  auto res = testkit::gradcheck_total_loss(m, x, labels, opt, 99, 3);
  EXPECT_LT(res.max_rel_error, 1e-3) << res.worst;
  EXPECT_GT(res.checked, 50u);
}

TEST(Gradients, DropoutMasksAreRespected) {
  auto s = tiny(6, 4, 32);
  s.cfg.dropout = 0.2;
  TransformerVae<double> m(s.cfg, s.enc.layout, 3);
  Mat x = s.enc.data.topRows(6);
  std::vector<int> labels(s.enc.labels.begin(), s.enc.labels.begin() + 6);
  TrainOptions opt;
  Rng r0{4};
  Mat eps = standard_normal<double>(6, 4, r0), prior = standard_normal<double>(6, 4, r0);
  TripletSet none;
  auto run = [&] {
    Rng drop{77};
    StepSources<double> src{.dropout = &drop, .eps = &eps, .prior_batch = &prior, .triplets = &none};
    return loss_and_gradients(m, x, labels, opt, src).total;
  };
  run();
  auto& p = m.params().all()[0];
  const double g = p.grad(0, 0);
  const double orig = p.value(0, 0);
  p.value(0, 0) = orig + 1e-6;
  const double lp = run();
  p.value(0, 0) = orig - 1e-6;
  const double lm = run();
  p.value(0, 0) = orig;
  EXPECT_NEAR(g, (lp - lm) / 2e-6, 1e-3 * std::max(1e-7, std::abs(g)) + 1e-8);
}

TEST(Checkpoint, RoundTripPreservesParameters) {
  auto s = tiny();
  Checkpoint ck{TransformerVae<double>(s.cfg, s.enc.layout, 4), s.schema, 12, nlohmann::json{{"a", 1}}};
  auto bytes = serialize_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, kCheckpointMagic.size()), kCheckpointMagic);
  auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.seed, 12u);
  EXPECT_EQ(back.model.config(), s.cfg);
  ASSERT_EQ(back.model.params().all().size(), ck.model.params().all().size());
  for (std::size_t i = 0; i < back.model.params().all().size(); ++i)
    EXPECT_EQ(back.model.params().all()[i].value, ck.model.params().all()[i].value);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, RejectsCorruption) {
  auto s = tiny();
  Checkpoint ck{TransformerVae<double>(s.cfg, s.enc.layout, 4), s.schema, 0, nullptr};
  auto bytes = serialize_checkpoint(ck);
  EXPECT_THROW(deserialize_checkpoint("XX" + bytes), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), Error);
}

TEST(Training, FixedSeedIsBitReproducible) {
  auto s = tiny();
  s.cfg.dropout = 0.1;
  TrainOptions opt;
  opt.batch_size = 16;
  opt.epochs = 2;
  opt.seed = 5;
  auto a = train_model(s.enc, 2, s.cfg, opt);
  auto b = train_model(s.enc, 2, s.cfg, opt);
  Checkpoint ca{a.model, s.schema, 5, nullptr}, cb{b.model, s.schema, 5, nullptr};
  EXPECT_EQ(serialize_checkpoint(ca), serialize_checkpoint(cb));
  EXPECT_EQ(a.steps, 2 * 4);  // ceil(60 / 16) steps per epoch
}

TEST(Training, LossDecreases) {
  auto s = tiny();
  TrainOptions opt;
  opt.batch_size = 16;
  opt.epochs = 30;
  opt.seed = 1;
  auto r = train_model(s.enc, 2, s.cfg, opt);
  EXPECT_LT(r.epochs.back().mean.recon, r.epochs.front().mean.recon);
}

TEST(Training, AlphaZeroSkipsTriplets) {
  auto s = tiny();
  TrainOptions opt;
  opt.batch_size = 16;
  opt.epochs = 1;
  opt.weights.alpha = 0;
  auto r = train_model(s.enc, 2, s.cfg, opt);
  EXPECT_EQ(r.epochs[0].mean.triplet, 0.0);
  EXPECT_EQ(r.epochs[0].mean.triplets, 0u);
}
