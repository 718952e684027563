#include <gtest/gtest.h>

#include <sstream>

#include "m2mfp/hierarchy.hpp"
#include "oracles.hpp"

using namespace m2mfp;

namespace {

constexpr Timestamp kMidnight = 1704067200;  // 2024-01-01 00:00:00 UTC

CeEvent make_event(Timestamp t, int rank = 0, int device = 0, int bank = 0, std::int64_t row = 10,
                   std::int64_t col = 20, std::initializer_list<std::pair<int, int>> cells = {{0, 0}}) {
  CeEvent e;
  e.dimm_uid = "d0";
  e.log_time = t;
  e.rank_id = rank;
  e.device_id = device;
  e.bankgroup_id = bank / 4;
  e.bank_id = bank % 4;
  e.row_id = row;
  e.column_id = col;
  e.bit_matrix = oracle::matrix_of(cells);
  return e;
}

int count_set(const std::vector<std::uint8_t>& v) {
  return static_cast<int>(std::count(v.begin(), v.end(), 1));
}

}  // namespace

TEST(AggregateWindow, SameCellUnion) {
  const std::vector<CeEvent> events = {make_event(1), make_event(2)};
  const auto agg = aggregate_window(events, Geometry{});
  ASSERT_EQ(agg.banks.size(), 1u);
  EXPECT_EQ(agg.banks.begin()->second.cells.size(), 1u);
  EXPECT_EQ(agg.banks.begin()->second.bit_matrices.size(), 2u);
}

TEST(AggregateWindow, RankOccupancy) {
  const std::vector<CeEvent> events = {make_event(1, 0), make_event(2, 1)};
  const auto agg = aggregate_window(events, Geometry{});
  EXPECT_EQ(agg.rank_occupancy, (std::vector<std::uint8_t>{1, 1}));
}

TEST(AggregateWindow, ThreeEventsTwoBanksOneDevice) {
  const std::vector<CeEvent> events = {make_event(1, 0, 3, 2), make_event(2, 0, 3, 2, 11),
                                       make_event(3, 0, 3, 9)};
  const auto agg = aggregate_window(events, Geometry{});
  EXPECT_EQ(count_set(agg.bank_occupancy), 2);
  EXPECT_EQ(count_set(agg.device_occupancy), 1);
  EXPECT_EQ(agg.banks.size(), 2u);
  EXPECT_TRUE(agg.bank_occupancy[2] && agg.bank_occupancy[9]);
}

TEST(AggregateWindow, EmptyWindow) {
  const auto agg = aggregate_window({}, Geometry{});
  EXPECT_TRUE(agg.banks.empty());
  EXPECT_EQ(count_set(agg.rank_occupancy) + count_set(agg.device_occupancy) +
                count_set(agg.bank_occupancy),
            0);
}

TEST(MultiBsfe, EmptyWindowIsZero) {
  const auto f = multi_bsfe(aggregate_window({}, Geometry{}));
  EXPECT_EQ(f, std::vector<double>(kMultiBsfeLength, 0.0));
  EXPECT_EQ(multi_bsfe_feature_names("").size(), kMultiBsfeLength);
  EXPECT_EQ(kMultiBsfeLength, 195u);
}

TEST(MultiBsfe, SingleEventPoolsToItsBank) {
  const std::vector<CeEvent> events = {make_event(1, 1, 4, 5, 100, 7, {{0, 1}, {3, 1}})};
  const auto f = multi_bsfe(aggregate_window(events, Geometry{}));
  ASSERT_EQ(f.size(), kMultiBsfeLength);
  const std::vector<double> by_max(f.begin() + 15, f.begin() + 15 + kBankFeatureLength);
  const std::vector<double> by_mean(f.begin() + 15 + kBankFeatureLength, f.end());
  EXPECT_EQ(by_max, by_mean);
  // Bit-level part equals the event's own features under both bit pools.
  const auto bits = bit_level_features(events.front().bit_matrix);
  EXPECT_EQ(std::vector<double>(by_max.begin() + 30, by_max.begin() + 60), bits);
  EXPECT_EQ(std::vector<double>(by_max.begin() + 60, by_max.begin() + 90), bits);
}

TEST(MultiBsfe, TwoDisjointBanksCountTwo) {
  const std::vector<CeEvent> events = {make_event(1, 0, 0, 1), make_event(2, 0, 0, 6)};
  const auto f = multi_bsfe(aggregate_window(events, Geometry{}));
  EXPECT_EQ(f[10], 2.0);  // bank_occ.element
  EXPECT_EQ(f[5], 1.0);   // device_occ.element
}

TEST(MultiBsfe, NamesAreUnique) {
  auto names = multi_bsfe_feature_names("w1h.");
  std::sort(names.begin(), names.end());
  EXPECT_EQ(std::adjacent_find(names.begin(), names.end()), names.end());
}

TEST(CountingFeatures, Examples) {
  const std::vector<CeEvent> one = {make_event(1, 0, 0, 0, 1, 1, {{0, 0}, {0, 2}})};
  const auto c = counting_features(one, kHour);
  EXPECT_EQ(c.theta_dq, 1);
  EXPECT_EQ(c.theta_beat, 0);
  EXPECT_EQ(counting_features({}, kHour), CountingFeatures{});
  const std::vector<CeEvent> four(4, make_event(1));
  EXPECT_EQ(counting_features(four, kHour).ce_frequency, 4.0);
  EXPECT_EQ(counting_features(four, 15 * kMinute).ce_frequency, 16.0);
  EXPECT_THROW(counting_features(four, 0), Error);
}

TEST(SampleGrid, AlignsToNextGridPoint) {
  ObservationWindowSet w;
  const std::vector<CeEvent> events = {make_event(kMidnight + 10 * kHour + 7 * kMinute)};
  const auto grid = sample_grid(events, w);
  ASSERT_FALSE(grid.empty());
  EXPECT_EQ(grid.front(), kMidnight + 10 * kHour + 15 * kMinute);
  // Last point still has the event inside its 6 h window.
  EXPECT_EQ(grid.back(), kMidnight + 16 * kHour);
  EXPECT_EQ(grid.size(), 24u);
}

TEST(SampleGrid, EventOnGridPointIsItsOwnSample) {
  ObservationWindowSet w;
  const std::vector<CeEvent> events = {make_event(kMidnight + kHour)};
  EXPECT_EQ(sample_grid(events, w).front(), kMidnight + kHour);
}

TEST(SampleGrid, OverlappingEventsDoNotDuplicate) {
  ObservationWindowSet w;
  const std::vector<CeEvent> events = {make_event(kMidnight + 100), make_event(kMidnight + 200),
                                       make_event(kMidnight + kHour)};
  const auto grid = sample_grid(events, w);
  EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));
  EXPECT_EQ(std::adjacent_find(grid.begin(), grid.end()), grid.end());
  EXPECT_EQ(grid.back(), kMidnight + 7 * kHour - 15 * kMinute + 0);
}

TEST(Labels, MatchIntervalOracle) {
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    const Timestamp t = rng.uniform_int(0, 100000);
    const Timestamp failure = t + rng.uniform_int(-1000, 20000);
    const Duration lead = rng.uniform_int(0, 3000);
    const Duration valid = rng.uniform_int(1, 15000);
    ASSERT_EQ(label_at(t, failure, lead, valid), oracle::label(t, failure, lead, valid));
  }
  // Closed interval ends.
  EXPECT_EQ(label_at(0, 900, 900, 100), 1);
  EXPECT_EQ(label_at(0, 1000, 900, 100), 1);
  EXPECT_EQ(label_at(0, 1001, 900, 100), 0);
  EXPECT_EQ(label_at(0, 899, 900, 100), 0);
  EXPECT_EQ(label_at(0, std::nullopt, 900, 100), 0);
}

TEST(GenerateSamples, BurstBeforeFailureIsPositive) {
  std::vector<CeEvent> events;
  for (int i = 0; i < 5; ++i) events.push_back(make_event(kMidnight + i * 600));
  const Timestamp burst_end = events.back().log_time;
  const std::vector<FailureRecord> failures = {{"d0", burst_end + 2 * kHour}};
  ObservationWindowSet w;
  w.windows = {15 * kMinute, kHour};  // keep samples inside the burst
  const auto set = generate_samples(events, failures, w, Geometry{});
  ASSERT_FALSE(set.samples.empty());
  for (const auto& s : set.samples) {
    EXPECT_LT(s.sample_time, failures.front().failure_time);
    EXPECT_EQ(s.label, 1);
  }
}

TEST(GenerateSamples, NoFailureMeansAllNegative) {
  std::vector<CeEvent> events = {make_event(kMidnight), make_event(kMidnight + 3 * kHour)};
  const auto set = generate_samples(events, {}, ObservationWindowSet{}, Geometry{});
  ASSERT_FALSE(set.samples.empty());
  for (const auto& s : set.samples) EXPECT_EQ(s.label, 0);
}

TEST(GenerateSamples, StopsAtFailure) {
  std::vector<CeEvent> events = {make_event(kMidnight)};
  const std::vector<FailureRecord> failures = {{"d0", kMidnight + kHour}};
  const auto set = generate_samples(events, failures, ObservationWindowSet{}, Geometry{});
  ASSERT_EQ(set.samples.size(), 4u);  // 00:00, 00:15, 00:30, 00:45
  for (const auto& s : set.samples) EXPECT_LT(s.sample_time, kMidnight + kHour);
}

TEST(GenerateSamples, BadWindowsAreConfigErrors) {
  SampleOptions o;
  o.valid = 0;
  EXPECT_THROW(generate_samples({}, {}, ObservationWindowSet{}, Geometry{}, o), Error);
  o = SampleOptions{};
  o.lead = -1;
  EXPECT_THROW(generate_samples({}, {}, ObservationWindowSet{}, Geometry{}, o), Error);
  ObservationWindowSet w;
  w.windows = {kHour, kHour};
  EXPECT_THROW(generate_samples({}, {}, w, Geometry{}), Error);
}

TEST(Featurizer, SchemaLength) {
  TimePatchFeaturizer f(Geometry{}, ObservationWindowSet{});
  EXPECT_EQ(f.schema().names.size(), 3 * (kMultiBsfeLength + 4));
  EXPECT_EQ(f.schema().names.size(), 597u);
  TimePatchFeaturizer s(Geometry{}, ObservationWindowSet{}, true);
  EXPECT_EQ(s.schema().names.size(), 600u);
  EXPECT_NE(f.schema().fingerprint(), s.schema().fingerprint());
}

TEST(Featurizer, NoLeakageFromFutureEvents) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CeEvent> events;
    Timestamp t = kMidnight;
    for (int i = 0; i < 30; ++i) {
      t += rng.uniform_int(1, 1800);
      events.push_back(make_event(t, static_cast<int>(rng.uniform_int(0, 1)),
                                  static_cast<int>(rng.uniform_int(0, 17)),
                                  static_cast<int>(rng.uniform_int(0, 15)), rng.uniform_int(0, 50),
                                  rng.uniform_int(0, 50), {{static_cast<int>(rng.uniform_int(0, 7)), 1}}));
    }
    const Timestamp cut = events[15].log_time + rng.uniform_int(0, 100);
    auto perturbed = events;
    for (auto& e : perturbed) {
      if (e.log_time <= cut) continue;
      e.row_id = rng.uniform_int(0, 1000);
      e.device_id = static_cast<int>(rng.uniform_int(0, 17));
      e.bit_matrix = BitMatrix(8, 4, rng.next() & 0xffffffffULL);
    }
    perturbed.push_back(make_event(cut + 1, 1, 17, 15));
    std::stable_sort(perturbed.begin(), perturbed.end(),
                     [](const CeEvent& x, const CeEvent& y) { return x.log_time < y.log_time; });
    TimePatchFeaturizer a(Geometry{}, ObservationWindowSet{});
    TimePatchFeaturizer b(Geometry{}, ObservationWindowSet{});
    ASSERT_EQ(a.features(events, cut), b.features(perturbed, cut));
  }
}

TEST(Featurizer, MonotoneAggregation) {
  Rng rng(8);
  std::vector<CeEvent> window;
  int prev_count = 0;
  std::size_t prev_cells = 0;
  std::array<double, 3> prev_occ{};
  for (int i = 0; i < 60; ++i) {
    window.push_back(make_event(i, static_cast<int>(rng.uniform_int(0, 1)),
                                static_cast<int>(rng.uniform_int(0, 17)),
                                static_cast<int>(rng.uniform_int(0, 15)), rng.uniform_int(0, 5),
                                rng.uniform_int(0, 5)));
    const auto agg = aggregate_window(window, Geometry{});
    const auto f = multi_bsfe(agg);
    const auto c = counting_features(window, kHour);
    std::size_t cells = 0;
    for (const auto& [key, b] : agg.banks) cells += b.cells.size();
    ASSERT_GE(c.ce_count, prev_count);
    ASSERT_GE(cells, prev_cells);
    for (int level = 0; level < 3; ++level) {
      ASSERT_GE(f[static_cast<std::size_t>(level * 5)], prev_occ[static_cast<std::size_t>(level)]);
      prev_occ[static_cast<std::size_t>(level)] = f[static_cast<std::size_t>(level * 5)];
    }
    prev_count = static_cast<int>(c.ce_count);
    prev_cells = cells;
  }
}

TEST(Featurizer, WindowExcludesItsLeftEdge) {
  TimePatchFeaturizer f(Geometry{}, ObservationWindowSet{});
  const Timestamp t = kMidnight + 6 * kHour;
  const std::vector<CeEvent> at_edge = {make_event(t - 15 * kMinute)};
  const auto v = f.features(at_edge, t);
  // 15 min window is (t - 15m, t]: empty, so its ce_count is zero.
  EXPECT_EQ(v[kMultiBsfeLength], 0.0);
  // The 1 h window sees it.
  EXPECT_EQ(v[2 * kMultiBsfeLength + 4], 1.0);
}

TEST(Featurizer, DeterministicAcrossInstances) {
  std::vector<CeEvent> events;
  for (int i = 0; i < 10; ++i) events.push_back(make_event(kMidnight + i * 300, 0, i % 3, i % 5, i, 2 * i));
  const auto a = generate_samples(events, {}, ObservationWindowSet{}, Geometry{});
  const auto b = generate_samples(events, {}, ObservationWindowSet{}, Geometry{});
  EXPECT_EQ(a.schema, b.schema);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(Samples, WriteReadRoundTrip) {
  std::vector<CeEvent> events;
  for (int i = 0; i < 6; ++i) events.push_back(make_event(kMidnight + i * 700, 0, 1, i, i, i));
  const auto set = generate_samples(events, {{"d0", kMidnight + 3 * kHour}}, ObservationWindowSet{},
                                    Geometry{});
  std::ostringstream out;
  write_samples(out, set);
  std::istringstream in(out.str());
  const auto back = read_samples(in);
  EXPECT_EQ(back.schema, set.schema);
  EXPECT_EQ(back.samples, set.samples);
}
