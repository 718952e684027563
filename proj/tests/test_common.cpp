#include <gtest/gtest.h>

#include <set>

#include "m2mfp/common.hpp"

using namespace m2mfp;

TEST(Fnv1a, KnownDigests) {
  EXPECT_EQ(fingerprint(""), "cbf29ce484222325");
  EXPECT_EQ(fingerprint("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fingerprint("foobar"), "85944171f73967e8");
}

TEST(Fnv1a, IncrementalMatchesOneShot) {
  EXPECT_EQ(Fnv1a{}.update("foo").update("bar").hex(), fingerprint("foobar"));
}

TEST(SplitMix, FirstOutputFromZero) { EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL); }

TEST(FormatNumber, IntegralAndFractional) {
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(3.0), "3");
  EXPECT_EQ(format_number(0.25), "0.25");
  EXPECT_EQ(format_number(0.1), "0.1");
  const double x = 1.0 / 3.0;
  EXPECT_EQ(*parse_double(format_number(x)), x);
}

TEST(Parse, Integers) {
  EXPECT_EQ(parse_int("42"), 42);
  EXPECT_EQ(parse_int(" -7 "), -7);
  EXPECT_EQ(parse_int("+5"), 5);
  EXPECT_EQ(parse_int("16.0"), 16);
  EXPECT_FALSE(parse_int("16.5"));
  EXPECT_FALSE(parse_int(""));
  EXPECT_FALSE(parse_int("x1"));
}

TEST(Parse, Doubles) {
  EXPECT_DOUBLE_EQ(*parse_double("2.5"), 2.5);
  EXPECT_DOUBLE_EQ(*parse_double("1e3\r"), 1000.0);
  EXPECT_FALSE(parse_double("abc"));
  EXPECT_FALSE(parse_double("1.0x"));
}

TEST(Csv, SplitHandlesQuotes) {
  const auto f = split_csv_line(R"(a,"b,c","say ""hi""",)");
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0], "a");
  EXPECT_EQ(f[1], "b,c");
  EXPECT_EQ(f[2], "say \"hi\"");
  EXPECT_EQ(f[3], "");
}

TEST(Csv, EscapeRoundTrip) {
  for (std::string s : {"plain", "with,comma", "with \"quote\"", ""}) {
    const auto f = split_csv_line(csv_escape(s) + ",x");
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f[0], s);
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(7), b(7), c(8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformIntStaysInRangeAndCoversIt) {
  Rng rng(1);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.uniform_int(-3, 3);
    ASSERT_GE(v, -3);
    ASSERT_LE(v, 3);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(2);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 10000.0, 0.5, 0.02);
}

TEST(Rng, PoissonMean) {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) sum += static_cast<double>(rng.poisson(4.0));
  EXPECT_NEAR(sum / 20000.0, 4.0, 0.1);
  EXPECT_EQ(rng.poisson(0.0), 0);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(4);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(DurationLabel, Units) {
  EXPECT_EQ(duration_label(15 * kMinute), "15m");
  EXPECT_EQ(duration_label(kHour), "1h");
  EXPECT_EQ(duration_label(6 * kHour), "6h");
  EXPECT_EQ(duration_label(90), "90s");
}

TEST(Error, ExitCodes) {
  EXPECT_EQ(Error(ErrorKind::Config, "x").exit_code(), 2);
  EXPECT_EQ(Error(ErrorKind::MissingDependency, "x").exit_code(), 3);
  EXPECT_EQ(Error(ErrorKind::Data, "x").exit_code(), 4);
}
