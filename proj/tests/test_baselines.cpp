#include <gtest/gtest.h>

#include <cmath>

#include "cttvae/smote.hpp"
#include "support.hpp"

using namespace cttvae;

namespace {

struct Fixture {
  Table train;
  TableSchema schema;
};

Fixture mixed(std::uint64_t seed, std::size_t rows = 150) {
  Rng rng{seed};
  Fixture f;
  f.train = testkit::random_table(rng, rows, 3, 2);
  f.schema = infer_schema(f.train, "y");
  return f;
}

// Brute-force k nearest same-class rows on population z-scored numericals.
std::vector<std::size_t> brute_knn(const Fixture& f, std::size_t base, int k) {
  const auto tcol = f.train.col("y");
  std::vector<std::size_t> num;
  for (std::size_t c = 0; c < f.schema.columns.size(); ++c)
    if (f.schema.columns[c].kind == ColumnKind::numerical) num.push_back(f.train.col(f.schema.columns[c].name));
  std::vector<double> sd;
  for (auto c : num) {
    auto v = numeric_column(f.train, c);
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m);
    sd.push_back(std::sqrt(s / static_cast<double>(v.size())));
  }
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t j = 0; j < f.train.rows.size(); ++j) {
    if (j == base || f.train.rows[j][tcol] != f.train.rows[base][tcol]) continue;
    double d = 0;
    for (std::size_t i = 0; i < num.size(); ++i) {
      double e = (std::stod(f.train.rows[j][num[i]]) - std::stod(f.train.rows[base][num[i]])) / sd[i];
      d += e * e;
    }
    cand.emplace_back(d, j);
  }
  std::sort(cand.begin(), cand.end());
  std::vector<std::size_t> out;
  for (int q = 0; q < k; ++q) out.push_back(cand[static_cast<std::size_t>(q)].second);
  return out;
}

}  // namespace

TEST(Smote, InterpolationEndpoints) {
  std::vector<double> a{1, -2, 3}, b{4, 0, -1};
  EXPECT_EQ(smote_interpolate(a, b, 0.0), a);
  EXPECT_EQ(smote_interpolate(a, b, 1.0), b);
  auto mid = smote_interpolate(a, b, 0.5);
  EXPECT_EQ(mid, (std::vector<double>{2.5, -1, 1}));
}

TEST(Smote, VoteRules) {
  ColumnSpec spec;
  spec.kind = ColumnKind::categorical;
  spec.vocab = {"a", "b", "c"};
  EXPECT_EQ(smote_vote(spec, "a", {"b", "b", "c"}), "b");
  EXPECT_EQ(smote_vote(spec, "c", {"b", "c", "b", "c"}), "c");  // tie resolved to base
  EXPECT_EQ(smote_vote(spec, "a", {"c", "b"}), "b");          // base absent: earliest vocab entry
}

TEST(Smote, OneDimensionalIntervalClosure) {
  Table t;
  t.header = {"x", "y"};
  t.rows = {{"0", "min"}, {"10", "min"}, {"3", "maj"}, {"4", "maj"}, {"5", "maj"}};
  auto schema = infer_schema(t, "y");
  Rng rng{1};
  auto out = smote_generate(t, schema, SmoteConfig{1, {0, 500}, 1}, rng);
  ASSERT_EQ(out.table.rows.size(), 500u);
  double lo = 1e9, hi = -1e9;
  for (const auto& r : out.table.rows) {
    double v = std::stod(r[0]);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 10.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    EXPECT_EQ(r[1], "min");
  }
  EXPECT_LT(lo, 1.0);
  EXPECT_GT(hi, 9.0);
}

TEST(Smote, EveryRowIsOnABaseNeighborSegment) {
  auto f = mixed(3);
  const int k = 5;
  Rng rng{4};
  auto out = smote_generate(f.train, f.schema, SmoteConfig{k, {60, 40}, 4}, rng);
  ASSERT_EQ(class_counts(out.table, f.schema), (std::vector<std::size_t>{60, 40}));

  std::vector<std::vector<std::size_t>> knn(f.train.rows.size());
  for (std::size_t r = 0; r < f.train.rows.size(); ++r) knn[r] = brute_knn(f, r, k);
  const std::vector<std::size_t> num{0, 1, 2}, cat{3, 4};
  const auto tcol = f.train.col("y");

  for (const auto& row : out.table.rows) {
    bool found = false;
    for (std::size_t b = 0; b < f.train.rows.size() && !found; ++b) {
      if (f.train.rows[b][tcol] != row[tcol]) continue;
      for (auto nb : knn[b]) {
        // solve u on the first coordinate, then require every coordinate to agree
        const double x0 = std::stod(f.train.rows[b][0]), x1 = std::stod(f.train.rows[nb][0]);
        const double u = (std::stod(row[0]) - x0) / (x1 - x0);
        if (!(u >= -1e-12 && u <= 1 + 1e-12)) continue;
        bool ok = true;
        for (auto c : num) {
          const double a = std::stod(f.train.rows[b][c]), z = std::stod(f.train.rows[nb][c]);
          const double v = std::stod(row[c]);
          if (std::abs(a + u * (z - a) - v) > 1e-9 * std::max(1.0, std::abs(v))) ok = false;
          if (v < std::min(a, z) - 1e-12 || v > std::max(a, z) + 1e-12) ok = false;
        }
        for (auto c : cat) {
          bool seen = false;
          for (auto j : knn[b]) seen |= f.train.rows[j][c] == row[c];
          ok &= seen;
        }
        if (ok) {
          found = true;
          break;
        }
      }
    }
    ASSERT_TRUE(found) << "row not explained by any (base, neighbor) pair";
  }
}

TEST(Smote, FixedSeedIsDeterministic) {
  auto f = mixed(5);
  Rng a{6}, b{6};
  auto o1 = smote_generate(f.train, f.schema, SmoteConfig{5, {30, 30}, 6}, a);
  auto o2 = smote_generate(f.train, f.schema, SmoteConfig{5, {30, 30}, 6}, b);
  EXPECT_EQ(o1.table, o2.table);
  EXPECT_EQ(o1.provenance.method, "smote");
  EXPECT_EQ(o1.provenance.k, 5);
}

TEST(Smote, Errors) {
  Table t;
  t.header = {"x", "y"};
  t.rows = {{"0", "min"}, {"10", "min"}, {"3", "maj"}, {"4", "maj"}, {"5", "maj"}};
  auto schema = infer_schema(t, "y");
  Rng rng{1};
  EXPECT_THROW(smote_generate(t, schema, SmoteConfig{2, {1, 1}, 1}, rng), Error);  // 2 minority rows <= k
  EXPECT_THROW(smote_generate(t, schema, SmoteConfig{0, {1, 1}, 1}, rng), Error);
  EXPECT_THROW(smote_generate(t, schema, SmoteConfig{1, {1}, 1}, rng), Error);
  EXPECT_NO_THROW(smote_generate(t, schema, SmoteConfig{2, {3, 0}, 1}, rng));
}
