#include <gtest/gtest.h>

#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "cttvae/core.hpp"
#include "cttvae/csv.hpp"

using namespace cttvae;

TEST(Hashing, Fnv1aKnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(0), "0000000000000000");
}

TEST(Streams, NamedStreamsAreDistinctAndStable) {
  std::set<std::uint64_t> seeds;
  for (const char* n : {"split", "init", "tbs", "reparameterize", "prior", "mining", "dropout", "generation",
                        "subsampling", "classifier"})
    seeds.insert(stream_seed(42, n));
  EXPECT_EQ(seeds.size(), 10u);
  EXPECT_EQ(stream_seed(42, "tbs"), stream_seed(42, "tbs"));
  EXPECT_NE(stream_seed(42, "tbs"), stream_seed(43, "tbs"));

  auto a = make_stream(7, "init"), b = make_stream(7, "init");
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Numbers, FormatRoundTripsExactly) {
  std::mt19937_64 rng{3};
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    double back;
    ASSERT_TRUE(parse_double(format_double(v), back));
    ASSERT_EQ(back, v);
  }
  EXPECT_EQ(format_double(-0.0), "0");
  EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Numbers, ParseRejectsGarbage) {
  double v;
  EXPECT_TRUE(parse_double(" 3.25 ", v));
  EXPECT_EQ(v, 3.25);
  EXPECT_TRUE(parse_double("+1e3", v));
  EXPECT_EQ(v, 1000.0);
  for (const char* bad : {"", "abc", "1.2.3", "nan", "inf", "3x", "--1"}) EXPECT_FALSE(parse_double(bad, v)) << bad;
}

TEST(Csv, QuotedFieldsRoundTrip) {
  Table t;
  t.header = {"id", "text", "value"};
  t.rows = {{"1", "plain", "0.5"},
            {"2", "with,comma", "1"},
            {"3", "with \"quotes\"", "-2"},
            {"4", "multi\nline", ""},
            {"5", "", "7"}};
  auto s = to_csv_string(t);
  std::istringstream in(s);
  auto back = read_csv(in);
  EXPECT_EQ(back, t);
}

TEST(Csv, CrLfAndMissingTrailingNewline) {
  std::istringstream in("a,b\r\n1,2\r\n3,\"x\"\"y\"");
  auto t = read_csv(in);
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "x\"y");
}

TEST(Csv, RaggedRowIsAnError) {
  std::istringstream in("a,b\n1,2,3\n");
  EXPECT_THROW(read_csv(in), Error);
}

TEST(Csv, MissingFileIsAnError) { EXPECT_THROW(read_csv_file("/nonexistent/file.csv"), Error); }

TEST(Csv, ColumnLookup) {
  Table t;
  t.header = {"a", "b"};
  EXPECT_EQ(t.col("b"), 1u);
  EXPECT_TRUE(t.has_col("a"));
  EXPECT_THROW(t.col("zz"), Error);
}
