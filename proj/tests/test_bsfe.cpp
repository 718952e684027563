#include <gtest/gtest.h>

#include "m2mfp/bsfe.hpp"
#include "m2mfp/hierarchy.hpp"
#include "oracles.hpp"

using namespace m2mfp;

namespace {

std::vector<std::uint8_t> bits_of(std::uint32_t value, int n) {
  std::vector<std::uint8_t> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = (value >> i) & 1U;
  return v;
}

oracle::Dense random_dense(Rng& rng) {
  const auto m = static_cast<std::size_t>(rng.uniform_int(1, 32));
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, 32));
  const double density = rng.uniform() * 0.6;
  oracle::Dense x(m, std::vector<std::uint8_t>(n, 0));
  for (auto& row : x) {
    for (auto& v : row) v = rng.bernoulli(density) ? 1 : 0;
  }
  return x;
}

}  // namespace

TEST(Bsfe1d, HandValues) {
  const std::vector<std::uint8_t> a = {1, 0, 1, 1, 0, 0, 0, 1};
  EXPECT_EQ(bsfe_1d(a), (Bsfe1d{4, 3, 2, 7, 1}));
  const std::vector<std::uint8_t> b = {1, 0, 0, 0, 1, 1, 0, 1};
  EXPECT_EQ(bsfe_1d(b), (Bsfe1d{4, 3, 2, 7, 1}));
  const std::vector<std::uint8_t> zero = {0, 0, 0, 0};
  EXPECT_EQ(bsfe_1d(zero), (Bsfe1d{0, 0, 0, 0, 0}));
  const std::vector<std::uint8_t> one = {1};
  EXPECT_EQ(bsfe_1d(one), (Bsfe1d{1, 1, 1, 0, 0}));
}

TEST(Bsfe1d, EmptyVectorIsAnError) {
  EXPECT_THROW(bsfe_1d(std::vector<std::uint8_t>{}), Error);
  const std::vector<std::int64_t> bad = {3, 3};
  EXPECT_THROW(bsfe_1d_indices(bad, 5), Error);
  const std::vector<std::int64_t> outside = {5};
  EXPECT_THROW(bsfe_1d_indices(outside, 5), Error);
}

TEST(Bsfe1d, MatchesOracleExhaustively) {
  for (int n = 1; n <= 12; ++n) {
    for (std::uint32_t v = 0; v < (1U << n); ++v) {
      const auto x = bits_of(v, n);
      const auto got = bsfe_1d(x).values();
      const auto want = oracle::phi(x);
      for (std::size_t d = 0; d < 5; ++d) ASSERT_EQ(got[d], want[d]) << "n=" << n << " v=" << v;
    }
  }
}

TEST(Bsfe1d, FlipInvarianceExhaustive) {
  for (int n = 1; n <= 12; ++n) {
    for (std::uint32_t v = 0; v < (1U << n); ++v) {
      auto x = bits_of(v, n);
      const auto forward = bsfe_1d(x);
      std::reverse(x.begin(), x.end());
      ASSERT_EQ(bsfe_1d(x), forward) << "n=" << n << " v=" << v;
    }
  }
}

TEST(Bsfe1d, FlipInvarianceRandomLong) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const int n = static_cast<int>(rng.uniform_int(13, 200));
    std::vector<std::uint8_t> x(static_cast<std::size_t>(n));
    for (auto& b : x) b = rng.bernoulli(0.3) ? 1 : 0;
    const auto forward = bsfe_1d(x);
    std::reverse(x.begin(), x.end());
    ASSERT_EQ(bsfe_1d(x), forward);
  }
}

TEST(Bsfe1d, SingleFlipChangesElementCountByOne) {
  for (int n = 1; n <= 12; ++n) {
    for (std::uint32_t v = 0; v < (1U << n); ++v) {
      auto x = bits_of(v, n);
      const auto base = bsfe_1d(x);
      for (int i = 0; i < n; ++i) {
        auto y = x;
        y[static_cast<std::size_t>(i)] ^= 1;
        const auto flipped = bsfe_1d(y);
        ASSERT_NE(flipped, base);
        ASSERT_EQ(std::abs(flipped.element - base.element), 1);
      }
    }
  }
}

TEST(Bsfe1d, DescriptorBounds) {
  for (int n = 1; n <= 12; ++n) {
    for (std::uint32_t v = 0; v < (1U << n); ++v) {
      const auto f = bsfe_1d(bits_of(v, n));
      ASSERT_LE(f.element, n);
      ASSERT_LE(f.group, (n + 1) / 2);
      ASSERT_LE(f.max_consecutive, f.element);
      if (f.element >= 2) {
        ASSERT_LE(f.min_distance, f.max_distance);
      }
    }
  }
}

TEST(Pool, Examples) {
  const std::vector<std::vector<double>> v = {{1, 0}, {0, 2}};
  EXPECT_EQ(pool(v, PoolMethod::Max), (std::vector<double>{1, 2}));
  EXPECT_EQ(pool(v, PoolMethod::Mean), (std::vector<double>{0.5, 1}));
  const std::vector<std::vector<double>> single = {{3, 4}};
  EXPECT_EQ(pool(single, PoolMethod::Max), single.front());
  EXPECT_EQ(pool(single, PoolMethod::Mean), single.front());
  EXPECT_THROW(pool(std::vector<std::vector<double>>{}, PoolMethod::Max), Error);
}

TEST(Pool, UnknownMethodName) {
  EXPECT_EQ(parse_pool_method("max"), PoolMethod::Max);
  EXPECT_EQ(parse_pool_method("mean"), PoolMethod::Mean);
  try {
    parse_pool_method("median");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
}

TEST(Bsfe2d, IdentityHandValues) {
  const auto x = SparseBinaryMatrix::from_dense({{1, 0}, {0, 1}});
  const auto f = bsfe_2d(x, false);
  const std::vector<double> row = {1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 2, 1, 2, 1, 1};
  EXPECT_EQ(f.row_level, row);
  EXPECT_EQ(f.col_level, row);
  EXPECT_EQ(f.flatten().size(), 30u);
}

TEST(Bsfe2d, ZeroMatrix) {
  for (bool occupied_only : {false, true}) {
    const auto f = bsfe_2d(SparseBinaryMatrix(8, 4), occupied_only).flatten();
    EXPECT_EQ(f, std::vector<double>(30, 0.0));
  }
}

TEST(Bsfe2d, SingleBitCollapsedDescriptors) {
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 4; ++c) {
      const auto f = bsfe_2d(SparseBinaryMatrix(8, 4, {{r, c}}), false);
      const std::vector<double> g(f.row_level.begin() + 10, f.row_level.end());
      const std::vector<double> h(f.col_level.begin() + 10, f.col_level.end());
      EXPECT_EQ(g, (std::vector<double>{1, 1, 1, 0, 0}));
      EXPECT_EQ(h, (std::vector<double>{1, 1, 1, 0, 0}));
    }
  }
}

TEST(Bsfe2d, OccupiedOnlyChangesMeanDenominator) {
  // One occupied row out of four.
  const SparseBinaryMatrix x(4, 4, {{1, 0}, {1, 1}});
  const auto all = bsfe_2d(x, false).row_level;
  const auto occ = bsfe_2d(x, true).row_level;
  EXPECT_EQ(all[5], 0.5);  // mean element over 4 rows
  EXPECT_EQ(occ[5], 2.0);  // mean element over the occupied row
  EXPECT_EQ(all[0], occ[0]);
}

TEST(Bsfe2d, MatchesDenseOracle) {
  Rng rng(1234);
  for (int i = 0; i < 1000; ++i) {
    const auto dense = random_dense(rng);
    const auto sparse = SparseBinaryMatrix::from_dense(dense);
    for (bool occupied_only : {false, true}) {
      const auto got = bsfe_2d(sparse, occupied_only).flatten();
      const auto want = oracle::bsfe_2d(dense, occupied_only);
      ASSERT_EQ(got.size(), 30u);
      for (std::size_t k = 0; k < 30; ++k) {
        const bool mean_slot = (k % 15) >= 5 && (k % 15) < 10;
        if (mean_slot) {
          ASSERT_NEAR(got[k], want[k], 1e-12) << "case " << i << " slot " << k;
        } else {
          ASSERT_EQ(got[k], want[k]) << "case " << i << " slot " << k;
        }
      }
    }
  }
}

TEST(Bsfe2d, TranspositionDuality) {
  Rng rng(99);
  for (int i = 0; i < 300; ++i) {
    const auto x = SparseBinaryMatrix::from_dense(random_dense(rng));
    for (bool occupied_only : {false, true}) {
      EXPECT_EQ(bsfe_2d(x, occupied_only).row_level, bsfe_2d(x.transposed(), occupied_only).col_level);
    }
  }
}

TEST(Bsfe2d, LengthIndependentOfShape) {
  for (auto [m, n] : std::vector<std::pair<std::int64_t, std::int64_t>>{{1, 1}, {8, 4}, {131072, 1024}, {3, 77}}) {
    const auto f = bsfe_2d(SparseBinaryMatrix(m, n, {{0, 0}, {m - 1, n - 1}}), true).flatten();
    EXPECT_EQ(f.size(), bsfe_2d_length(2));
  }
  const std::array<PoolMethod, 1> one = {PoolMethod::Max};
  EXPECT_EQ(bsfe_2d(SparseBinaryMatrix(2, 2), one, false).flatten().size(), bsfe_2d_length(1));
  EXPECT_THROW(bsfe_2d(SparseBinaryMatrix(2, 2), std::span<const PoolMethod>{}, false), Error);
}

TEST(Bsfe2d, FeatureNames) {
  const auto names = bsfe_2d_feature_names(kDefaultPooling, "bit.");
  ASSERT_EQ(names.size(), 30u);
  EXPECT_EQ(names.front(), "bit.bsfe.row.rta.max.element");
  EXPECT_EQ(names[10], "bit.bsfe.row.atr.element");
  EXPECT_EQ(names.back(), "bit.bsfe.col.atr.min_distance");
}

TEST(SparseMatrix, DeduplicatesAndValidates) {
  const SparseBinaryMatrix x(3, 3, {{1, 1}, {0, 2}, {1, 1}});
  EXPECT_EQ(x.coords().size(), 2u);
  EXPECT_EQ(x.coords().front(), (SparseBinaryMatrix::Coord{0, 2}));
  EXPECT_THROW(SparseBinaryMatrix(3, 3, {{3, 0}}), Error);
  EXPECT_THROW(SparseBinaryMatrix(0, 3), Error);
}
