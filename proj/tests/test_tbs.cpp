#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "cttvae/tbs.hpp"

using namespace cttvae;

namespace {

std::vector<int> labels_for(const std::vector<std::size_t>& counts) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t i = 0; i < counts[c]; ++i) labels.push_back(static_cast<int>(c));
  Rng rng{99};  // class members are not contiguous
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

}  // namespace

TEST(ClassPmf, Endpoints) {
  std::vector<std::size_t> counts{70, 20, 10};
  auto emp = class_pmf(counts, 1.0);
  EXPECT_DOUBLE_EQ(emp.probs[0], 0.7);
  EXPECT_DOUBLE_EQ(emp.probs[1], 0.2);
  EXPECT_DOUBLE_EQ(emp.probs[2], 0.1);
  auto uni = class_pmf(counts, 0.0);
  for (double p : uni.probs) EXPECT_DOUBLE_EQ(p, 1.0 / 3.0);
}

TEST(ClassPmf, HalfwayExample) {
  std::vector<std::size_t> counts{80, 20};
  auto p = class_pmf(counts, 0.5);
  EXPECT_NEAR(p.probs[0], 0.65, 1e-15);
  EXPECT_NEAR(p.probs[1], 0.35, 1e-15);
  EXPECT_EQ(p.lambda, 0.5);
  EXPECT_EQ(p.class_counts, counts);
}

TEST(ClassPmf, AffineInLambdaAndNormalized) {
  Rng rng{1};
  std::uniform_int_distribution<std::size_t> cnt(1, 5000);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> counts(2 + trial % 5);
    for (auto& c : counts) c = cnt(rng);
    const double l = lam(rng);
    auto p = class_pmf(counts, l), p1 = class_pmf(counts, 1.0), p0 = class_pmf(counts, 0.0);
    double sum = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      ASSERT_NEAR(p.probs[c], l * p1.probs[c] + (1 - l) * p0.probs[c], 1e-12);
      ASSERT_GT(p.probs[c], 0.0);
      sum += p.probs[c];
    }
    ASSERT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(ClassPmf, Errors) {
  std::vector<std::size_t> ok{3, 4}, zero{3, 0}, one{5};
  EXPECT_THROW(class_pmf(ok, -0.01), Error);
  EXPECT_THROW(class_pmf(ok, 1.01), Error);
  EXPECT_THROW(class_pmf(ok, std::nan("")), Error);
  EXPECT_THROW(class_pmf(zero, 0.5), Error);
  EXPECT_THROW(class_pmf(one, 0.5), Error);
}

TEST(ClassIndex, DisjointCover) {
  auto labels = labels_for({40, 7, 13});
  auto idx = ClassIndex::from_labels(labels, 3);
  EXPECT_EQ(idx.counts(), (std::vector<std::size_t>{40, 7, 13}));
  std::vector<int> seen(labels.size(), 0);
  for (std::size_t c = 0; c < 3; ++c)
    for (auto r : idx.rows[c]) {
      ++seen[r];
      EXPECT_EQ(labels[r], static_cast<int>(c));
    }
  for (int s : seen) EXPECT_EQ(s, 1);
  std::vector<int> bad{0, 3};
  EXPECT_THROW(ClassIndex::from_labels(bad, 3), Error);
}

TEST(SampleBatch, ConcentratedPmfDrawsOneClass) {
  auto labels = labels_for({50, 10});
  auto idx = ClassIndex::from_labels(labels, 2);
  ClassPMF pmf{{0.0, 1.0}, 0.0, {50, 10}};
  Rng rng{2};
  for (auto r : sample_batch(idx, pmf, 500, rng)) EXPECT_EQ(labels[r], 1);
}

TEST(SampleBatch, FixedSeedIsDeterministic) {
  auto labels = labels_for({50, 10});
  auto idx = ClassIndex::from_labels(labels, 2);
  auto pmf = class_pmf(idx.counts(), 0.5);
  Rng a{5}, b{5};
  for (int i = 0; i < 20; ++i) ASSERT_EQ(sample_batch(idx, pmf, 64, a), sample_batch(idx, pmf, 64, b));
}

TEST(SampleBatch, ClassFrequenciesMatchPmf) {
  auto labels = labels_for({80, 20});
  auto idx = ClassIndex::from_labels(labels, 2);
  auto pmf = class_pmf(idx.counts(), 0.5);
  Rng rng{6};
  auto draws = sample_batch(idx, pmf, 100000, rng);
  std::size_t minority = 0;
  for (auto r : draws) minority += labels[r] == 1;
  EXPECT_NEAR(static_cast<double>(minority) / 1e5, 0.35, 0.01);
}

TEST(SampleBatch, UniformWithinClass) {
  auto labels = labels_for({30, 12});
  auto idx = ClassIndex::from_labels(labels, 2);
  auto pmf = class_pmf(idx.counts(), 0.3);
  Rng rng{7};
  auto draws = sample_batch(idx, pmf, 100000, rng);
  for (std::size_t c = 0; c < 2; ++c) {
    std::map<std::size_t, std::size_t> freq;
    std::size_t n = 0;
    for (auto r : draws)
      if (labels[r] == static_cast<int>(c)) ++freq[r], ++n;
    const double m = static_cast<double>(idx.rows[c].size());
    const double p = 1.0 / m;
    const double sigma = std::sqrt(static_cast<double>(n) * p * (1 - p));
    EXPECT_EQ(freq.size(), idx.rows[c].size());
    for (auto [row, f] : freq) EXPECT_LT(std::abs(static_cast<double>(f) - static_cast<double>(n) * p), 3 * sigma);
  }
}

TEST(SampleBatch, LabelsAlwaysMatchDrawnClass) {
  auto labels = labels_for({25, 5, 9});
  auto idx = ClassIndex::from_labels(labels, 3);
  Rng rng{8};
  for (std::size_t c = 0; c < 3; ++c) {
    ClassPMF pmf{std::vector<double>(3, 0.0), 0.0, idx.counts()};
    pmf.probs[c] = 1.0;
    for (auto r : sample_batch(idx, pmf, 200, rng)) ASSERT_EQ(labels[r], static_cast<int>(c));
  }
}

TEST(SampleBatch, Errors) {
  auto labels = labels_for({5, 5});
  auto idx = ClassIndex::from_labels(labels, 2);
  auto pmf = class_pmf(idx.counts(), 0.5);
  Rng rng{9};
  EXPECT_THROW(sample_batch(idx, pmf, 0, rng), Error);
  auto pmf3 = class_pmf(std::vector<std::size_t>{1, 1, 1}, 0.5);
  EXPECT_THROW(sample_batch(idx, pmf3, 4, rng), Error);
}
