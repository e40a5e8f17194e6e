#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "cttvae/generator.hpp"
#include "support.hpp"

using namespace cttvae;
using Mat = nn::Mat<double>;
using Vec = nn::RowVec<double>;

namespace {

LatentBank toy_bank(std::size_t n_per_class, int dim, std::uint64_t seed) {
  Rng rng{seed};
  std::normal_distribution<double> g;
  LatentBank b;
  b.z.resize(static_cast<Eigen::Index>(2 * n_per_class), dim);
  b.h.resize(b.z.rows(), 3);
  for (Eigen::Index i = 0; i < b.z.rows(); ++i) {
    const int c = i % 2;
    b.y.push_back(c);
    for (int d = 0; d < dim; ++d) b.z(i, d) = g(rng) + (c ? 5.0 : -5.0);
    b.h.row(i).setConstant(static_cast<double>(i));
  }
  return b;
}

struct SmallModel {
  Table train;
  TableSchema schema;
  EncodedMatrix enc;
  ModelConfig cfg;
};

SmallModel small_model(std::size_t rows = 120) {
  Rng rng{17};
  SmallModel s;
  s.train = testkit::random_table(rng, rows, 2, 1);
  s.schema = testkit::fitted_schema(s.train, "y", 3);
  s.enc = encode_rows(s.train, s.schema);
  s.cfg.latent_dim = 4;
  s.cfg.embedding_dim = 16;
  s.cfg.nhead = 2;
  s.cfg.dim_feedforward = 32;
  s.cfg.num_layers = 1;
  s.cfg.dropout = 0.0;
  return s;
}

// All-pairs reference for the neighbor query.
std::vector<std::size_t> brute_neighbors(const LatentBank& b, std::size_t base, int k) {
  std::vector<std::size_t> pool;
  for (std::size_t j = 0; j < b.size(); ++j)
    if (j != base && b.y[j] == b.y[base]) pool.push_back(j);
  std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t c) {
    return (b.z.row(static_cast<Eigen::Index>(a)) - b.z.row(static_cast<Eigen::Index>(base))).norm() <
           (b.z.row(static_cast<Eigen::Index>(c)) - b.z.row(static_cast<Eigen::Index>(base))).norm();
  });
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

}  // namespace

TEST(TriangleWeights, SimplexForAllK) {
  for (int k = 2; k <= 10; ++k) {
    auto num = triangle_weight_numerators(k);
    EXPECT_EQ(std::accumulate(num.begin(), num.end(), 0L), triangle_weight_denominator(k)) << k;
    EXPECT_EQ(num.back(), 0);
    for (std::size_t r = 1; r < num.size(); ++r) EXPECT_LT(num[r], num[r - 1]);
    auto w = triangle_weights(k);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
  }
  EXPECT_THROW(triangle_weights(1), Error);
}

TEST(TriangleWeights, KFive) {
  auto w = triangle_weights(5);
  const std::vector<double> expect{0.4, 0.3, 0.2, 0.1, 0.0};
  for (std::size_t r = 0; r < 5; ++r) EXPECT_DOUBLE_EQ(w[r], expect[r]);
}

TEST(Interpolate, DegenerateCases) {
  Vec base(3);
  base << 1, -2, 3;
  std::vector<Vec> nb;
  for (int r = 0; r < 5; ++r) nb.push_back(Vec::Random(3));
  EXPECT_EQ(triangle_interpolate(base, nb, std::vector<double>(5, 0.0)), base);

  std::vector<Vec> same(5, base);
  EXPECT_EQ(triangle_interpolate(base, same, {0.3, 0.9, 0.1, 1.0, 0.5}), base);
  EXPECT_THROW(triangle_interpolate(base, nb, {0.1}), Error);
}

TEST(Interpolate, FarthestNeighborHasNoInfluence) {
  Vec base = Vec::Zero(2);
  std::vector<Vec> nb(5, Vec::Ones(2));
  auto a = triangle_interpolate(base, nb, {0.5, 0.5, 0.5, 0.5, 0.5});
  nb[4] << 1e6, -1e6;
  auto b = triangle_interpolate(base, nb, {0.5, 0.5, 0.5, 0.5, 0.5});
  EXPECT_EQ(a, b);
}

TEST(SampleLatent, LocalityClosureAndOrdering) {
  auto bank = toy_bank(60, 3, 1);
  InterpolationSpec spec;
  Rng rng{2};
  for (int c = 0; c < 2; ++c) {
    ClassSampler sampler(bank, c, spec);
    for (int t = 0; t < 300; ++t) {
      auto s = sampler.sample(rng);
      const Vec zi = bank.z.row(static_cast<Eigen::Index>(s.base));
      ASSERT_EQ(bank.y[s.base], c);
      ASSERT_EQ(s.neighbors.size(), 5u);
      auto w = spec.weights();
      double bound = 0, far = 0, prev = 0;
      for (std::size_t r = 0; r < 5; ++r) {
        ASSERT_EQ(bank.y[s.neighbors[r]], c);
        ASSERT_NE(s.neighbors[r], s.base);
        const double d = (bank.z.row(static_cast<Eigen::Index>(s.neighbors[r])) - zi).norm();
        ASSERT_GE(d, prev);
        prev = d;
        bound += w[r] * s.u[r] * d;
        far = std::max(far, d);
        ASSERT_GE(s.u[r], 0.0);
        ASSERT_LT(s.u[r], 1.0);
      }
      const double moved = (s.z_hat - zi).norm();
      ASSERT_LE(moved, bound + 1e-12);
      ASSERT_LE(bound, far + 1e-12);
      ASSERT_EQ(s.h, bank.h.row(static_cast<Eigen::Index>(s.base)));
      ASSERT_EQ(s.neighbors, brute_neighbors(bank, s.base, 5));
    }
  }
}

TEST(SampleLatent, TiesBrokenByLowerIndex) {
  LatentBank b;
  b.z = Mat::Zero(6, 2);
  b.z(0, 0) = 10;
  b.h = Mat::Zero(6, 1);
  b.y = std::vector<int>(6, 0);
  auto nb = nearest_in_class(b, 0, b.members(0), 3);
  EXPECT_EQ(nb, (std::vector<std::size_t>{1, 2, 3}));
  // duplicates of the base stay as neighbors; only the base index is excluded
  b.z = Mat::Zero(6, 2);
  b.z(1, 0) = 1;
  nb = nearest_in_class(b, 3, b.members(0), 4);
  EXPECT_EQ(nb, (std::vector<std::size_t>{0, 2, 4, 5}));
}

TEST(SampleLatent, MinkowskiOrders) {
  Vec a(2), b(2);
  a << 0, 0;
  b << 3, 4;
  EXPECT_DOUBLE_EQ(minkowski(a, b, 2.0), 5.0);
  EXPECT_DOUBLE_EQ(minkowski(a, b, 1.0), 7.0);
  EXPECT_DOUBLE_EQ(minkowski(a, b, std::numeric_limits<double>::infinity()), 4.0);
  EXPECT_NEAR(minkowski(a, b, 3.0), std::cbrt(27.0 + 64.0), 1e-12);
}

TEST(SampleLatent, MonteCarloMean) {
  Vec base(2);
  base << 1, 1;
  std::vector<Vec> nb;
  for (int r = 0; r < 5; ++r) {
    Vec v(2);
    v << r + 2.0, -r - 1.0;
    nb.push_back(v);
  }
  Rng rng{3};
  std::uniform_real_distribution<double> u01;
  Vec mean = Vec::Zero(2);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    std::vector<double> u(5);
    for (auto& x : u) x = u01(rng);
    mean += triangle_interpolate(base, nb, u);
  }
  mean /= n;
  auto w = triangle_weights(5);
  Vec expect = base;
  for (int r = 0; r < 5; ++r) expect += w[static_cast<std::size_t>(r)] / 2 * (nb[static_cast<std::size_t>(r)] - base);
  EXPECT_NEAR(mean(0), expect(0), 0.01);
  EXPECT_NEAR(mean(1), expect(1), 0.01);
}

TEST(SampleLatent, TooSmallClassAsksForSmallerK) {
  auto bank = toy_bank(5, 2, 4);
  Rng rng{5};
  try {
    sample_latent(bank, 1, InterpolationSpec{5, 2.0}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("smaller k"), std::string::npos);
  }
  EXPECT_NO_THROW(sample_latent(bank, 1, InterpolationSpec{4, 2.0}, rng));
}

TEST(LatentBank, ShapeDeterminismAndMismatch) {
  auto s = small_model();
  TransformerVae<double> model(s.cfg, s.enc.layout, 1);
  Rng a{9}, b{9};
  auto b1 = build_latent_bank(model, s.enc, a), b2 = build_latent_bank(model, s.enc, b);
  EXPECT_EQ(b1.size(), s.train.rows.size());
  EXPECT_EQ(b1.z.rows(), b1.h.rows());
  EXPECT_EQ(b1.z, b2.z);
  EXPECT_EQ(b1.y, s.enc.labels);

  Rng c{9};
  Table wider = testkit::random_table(c, 50, 3, 1);
  auto other = encode_rows(wider, testkit::fitted_schema(wider, "y", 1));
  EXPECT_THROW(build_latent_bank(model, other, c), Error);
}

TEST(LatentBank, DrawsWithinSixSigma) {
  Rng rng{10};
  Table t = testkit::random_table(rng, 100000, 2, 1);
  auto schema = testkit::fitted_schema(t, "y", 1);
  auto enc = encode_rows(t, schema);
  ModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.embedding_dim = 8;
  cfg.nhead = 2;
  cfg.dim_feedforward = 16;
  cfg.num_layers = 1;
  cfg.dropout = 0.0;
  TransformerVae<double> model(cfg, enc.layout, 2);
  Rng draw{11};
  auto bank = build_latent_bank(model, enc, draw);
  auto post = model.encode(enc.data);
  Mat dev = ((bank.z - post.mu).array() / (0.5 * post.log_var.array()).exp()).abs().matrix();
  EXPECT_LT(dev.maxCoeff(), 6.0);
}

TEST(GenerateTable, CountsLabelsAndDeterminism) {
  auto s = small_model();
  TransformerVae<double> model(s.cfg, s.enc.layout, 1);
  Rng r1{4};
  auto bank = build_latent_bank(model, s.enc, r1, 2.0, "abc");
  std::vector<std::size_t> counts{100, 50};
  Rng g1{5}, g2{5};
  auto out = generate_table(model, s.schema, bank, counts, {}, g1);
  ASSERT_EQ(out.table.rows.size(), 150u);
  const auto tcol = s.schema.target_index();
  std::size_t first = 0;
  for (std::size_t i = 0; i < out.table.rows.size(); ++i) {
    EXPECT_EQ(out.table.rows[i][tcol], s.schema.class_vocab[static_cast<std::size_t>(out.requested_class[i])]);
    first += out.requested_class[i] == 0;
  }
  EXPECT_EQ(first, 100u);
  EXPECT_EQ(out.table.header, s.train.header);
  EXPECT_EQ(out.provenance.checkpoint_hash, "abc");
  EXPECT_EQ(out.provenance.per_class_counts.at(s.schema.class_vocab[1]), 50u);

  auto again = generate_table(model, s.schema, bank, counts, {}, g2);
  EXPECT_EQ(to_csv_string(out.table), to_csv_string(again.table));
}

TEST(GenerateTable, UnsatisfiableRequests) {
  auto s = small_model();
  TransformerVae<double> model(s.cfg, s.enc.layout, 1);
  Rng rng{6};
  auto bank = build_latent_bank(model, s.enc, rng);
  const auto minority = bank.members(1).size();
  EXPECT_THROW(generate_table(model, s.schema, bank, {10, 10}, InterpolationSpec{static_cast<int>(minority), 2.0}, rng),
               Error);
  EXPECT_THROW(generate_table(model, s.schema, bank, {10}, {}, rng), Error);
}

TEST(GenerateTable, DefaultCounts) {
  EXPECT_EQ(default_class_counts({80, 20}, false), (std::vector<std::size_t>{80, 20}));
  EXPECT_EQ(default_class_counts({80, 20}, true), (std::vector<std::size_t>{50, 50}));
}

TEST(GenerateTable, BankExport) {
  auto bank = toy_bank(4, 2, 7);
  TableSchema schema;
  schema.target = "y";
  schema.class_vocab = {"a", "b"};
  auto t = latent_bank_table(bank, schema);
  EXPECT_EQ(t.header, (std::vector<std::string>{"z0", "z1", "y"}));
  EXPECT_EQ(t.rows.size(), 8u);
  EXPECT_EQ(t.rows[1][2], "b");
  EXPECT_EQ(std::stod(t.rows[3][0]), bank.z(3, 0));
}
