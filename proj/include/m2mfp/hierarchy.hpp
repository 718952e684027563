#pragma once

// Time-patch featurization: per-window aggregation of a DIMM's CEs across the
// memory hierarchy, the multi-level BSFE vector, counting features, and
// labelled sample generation on a regular time grid.

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "m2mfp/bsfe.hpp"
#include "m2mfp/ce_model.hpp"

namespace m2mfp {

struct ObservationWindowSet {
  std::vector<Duration> windows{15 * kMinute, kHour, 6 * kHour};
  Duration sample_interval = 15 * kMinute;

  void validate() const {
    if (windows.empty()) fail(ErrorKind::Config, "at least one observation window is required");
    for (std::size_t i = 0; i < windows.size(); ++i) {
      if (windows[i] <= 0) fail(ErrorKind::Config, "observation windows must be positive");
      if (i > 0 && windows[i] <= windows[i - 1]) {
        fail(ErrorKind::Config, "observation windows must be strictly increasing");
      }
    }
    if (sample_interval <= 0) fail(ErrorKind::Config, "sample interval must be positive");
  }

  Duration largest() const { return windows.back(); }
};

/// Identifies one bank of one device of one rank.
struct BankKey {
  int rank = 0;
  int device = 0;
  int bank = 0;

  auto operator<=>(const BankKey&) const = default;
};

struct BankAggregate {
  std::vector<SparseBinaryMatrix::Coord> cells;  // union of faulty (row, col) cells, sorted
  std::vector<BitMatrix> bit_matrices;           // one per event in the bank
};

struct WindowAggregates {
  std::vector<std::uint8_t> rank_occupancy;
  std::vector<std::uint8_t> device_occupancy;
  std::vector<std::uint8_t> bank_occupancy;
  std::map<BankKey, BankAggregate> banks;
  std::int64_t n_row = 1;
  std::int64_t n_col = 1;

  SparseBinaryMatrix bank_matrix(const BankKey& key) const {
    auto it = banks.find(key);
    if (it == banks.end()) return {n_row, n_col};
    return {n_row, n_col, it->second.cells};
  }
};

inline WindowAggregates aggregate_window(std::span<const CeEvent> events, const Geometry& g) {
  WindowAggregates agg;
  agg.rank_occupancy.assign(static_cast<std::size_t>(g.n_rank), 0);
  agg.device_occupancy.assign(static_cast<std::size_t>(g.n_device), 0);
  agg.bank_occupancy.assign(static_cast<std::size_t>(g.n_bank), 0);
  agg.n_row = g.n_row;
  agg.n_col = g.n_col;
  for (const auto& e : events) {
    const int bank = e.bank_index(g);
    agg.rank_occupancy[static_cast<std::size_t>(e.rank_id)] = 1;
    agg.device_occupancy[static_cast<std::size_t>(e.device_id)] = 1;
    agg.bank_occupancy[static_cast<std::size_t>(bank)] = 1;
    auto& b = agg.banks[BankKey{e.rank_id, e.device_id, bank}];
    b.cells.emplace_back(e.row_id, e.column_id);
    b.bit_matrices.push_back(e.bit_matrix);
  }
  for (auto& [key, b] : agg.banks) {
    std::sort(b.cells.begin(), b.cells.end());
    b.cells.erase(std::unique(b.cells.begin(), b.cells.end()), b.cells.end());
  }
  return agg;
}

inline SparseBinaryMatrix to_sparse(const BitMatrix& bits) {
  std::vector<SparseBinaryMatrix::Coord> coords;
  for (int b = 0; b < bits.beats(); ++b) {
    for (int d = 0; d < bits.dqs(); ++d) {
      if (bits.test(b, d)) coords.emplace_back(b, d);
    }
  }
  return {bits.beats(), bits.dqs(), std::move(coords)};
}

/// Flattened 2d-BSFE of one DQ-Beat matrix over all rows (no occupancy
/// filtering), default pooling.
inline std::vector<double> bit_level_features(const BitMatrix& bits) {
  return bsfe_2d(to_sparse(bits), kDefaultPooling, /*occupied_only=*/false).flatten();
}

/// Memoises bit_level_features; real logs repeat a small set of masks.
class BitFeatureCache {
 public:
  const std::vector<double>& get(const BitMatrix& bits) {
    const Key key{bits.mask(), bits.beats() * 65 + bits.dqs()};
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(key, bit_level_features(bits)).first->second;
  }

 private:
  using Key = std::pair<std::uint64_t, int>;
  std::map<Key, std::vector<double>> cache_;
};

inline constexpr std::size_t kBitFeatureLength = 2 * kDescriptorCount * (kDefaultPooling.size() + 1);
// [bsfe_2d(bank matrix) | pooled bit features]
inline constexpr std::size_t kBankFeatureLength =
    kBitFeatureLength + kDefaultPooling.size() * kBitFeatureLength;
// [rank, device, bank occupancy descriptors | pooled bank features]
inline constexpr std::size_t kMultiBsfeLength =
    3 * kDescriptorCount + kDefaultPooling.size() * kBankFeatureLength;

/// Multi-level BSFE vector of one window's aggregates. An empty window yields
/// all zeros of the same length.
inline std::vector<double> multi_bsfe(const WindowAggregates& agg, BitFeatureCache* cache = nullptr) {
  std::vector<double> out;
  out.reserve(kMultiBsfeLength);
  for (const auto* occupancy : {&agg.rank_occupancy, &agg.device_occupancy, &agg.bank_occupancy}) {
    const auto v = bsfe_1d(*occupancy).values();
    out.insert(out.end(), v.begin(), v.end());
  }
  if (agg.banks.empty()) {
    out.resize(kMultiBsfeLength, 0.0);
    return out;
  }

  BitFeatureCache local;
  BitFeatureCache& bits_cache = cache ? *cache : local;
  std::vector<std::vector<double>> bank_features;
  bank_features.reserve(agg.banks.size());
  std::vector<std::vector<double>> bit_features;
  for (const auto& [key, bank] : agg.banks) {
    std::vector<double> f = bsfe_2d(SparseBinaryMatrix(agg.n_row, agg.n_col, bank.cells),
                                    kDefaultPooling, /*occupied_only=*/true)
                                .flatten();
    bit_features.clear();
    for (const auto& bits : bank.bit_matrices) bit_features.push_back(bits_cache.get(bits));
    for (PoolMethod method : kDefaultPooling) {
      const auto pooled = pool(bit_features, method);
      f.insert(f.end(), pooled.begin(), pooled.end());
    }
    bank_features.push_back(std::move(f));
  }
  for (PoolMethod method : kDefaultPooling) {
    const auto pooled = pool(bank_features, method);
    out.insert(out.end(), pooled.begin(), pooled.end());
  }
  return out;
}

inline std::vector<std::string> multi_bsfe_feature_names(std::string_view prefix) {
  std::vector<std::string> names;
  const std::string p(prefix);
  for (std::string_view level : {"rank_occ.", "device_occ.", "bank_occ."}) {
    for (auto& n : bsfe_1d_feature_names(p + std::string(level))) names.push_back(std::move(n));
  }
  for (PoolMethod dimm_pool : kDefaultPooling) {
    const std::string bank_prefix = p + "bank." + std::string(to_string(dimm_pool)) + ".";
    for (auto& n : bsfe_2d_feature_names(kDefaultPooling, bank_prefix + "cells.")) {
      names.push_back(std::move(n));
    }
    for (PoolMethod bit_pool : kDefaultPooling) {
      const std::string bit_prefix = bank_prefix + "bits." + std::string(to_string(bit_pool)) + ".";
      for (auto& n : bsfe_2d_feature_names(kDefaultPooling, bit_prefix)) names.push_back(std::move(n));
    }
  }
  return names;
}

struct CountingFeatures {
  std::int64_t ce_count = 0;
  std::int64_t theta_dq = 0;    // events with >= 2 faulty DQ columns
  std::int64_t theta_beat = 0;  // events with >= 2 faulty beat rows
  double ce_frequency = 0.0;    // events per hour

  bool operator==(const CountingFeatures&) const = default;
};

inline CountingFeatures counting_features(std::span<const CeEvent> events, Duration window) {
  if (window <= 0) fail(ErrorKind::Config, "counting_features: window must be positive");
  CountingFeatures out;
  out.ce_count = static_cast<std::int64_t>(events.size());
  for (const auto& e : events) {
    if (e.bit_matrix.faulty_dq_count() >= 2) ++out.theta_dq;
    if (e.bit_matrix.faulty_beat_count() >= 2) ++out.theta_beat;
  }
  out.ce_frequency = static_cast<double>(out.ce_count) * static_cast<double>(kHour) /
                     static_cast<double>(window);
  return out;
}

inline constexpr std::array<std::string_view, 3> kStaticNumericAttrs = {"Capacity", "FrequencyMHz",
                                                                        "MaxSpeedMHz"};

struct FeatureSchema {
  std::vector<std::string> names;

  std::string fingerprint() const {
    Fnv1a h;
    for (const auto& n : names) h.update(n).update("\n");
    return h.hex();
  }

  bool operator==(const FeatureSchema&) const = default;
};

/// Computes the time-patch feature vector of one DIMM at a sample time.
/// Only events with log_time <= t are ever read.
class TimePatchFeaturizer {
 public:
  TimePatchFeaturizer(Geometry geometry, ObservationWindowSet windows, bool include_static = false)
      : geometry_(std::move(geometry)), windows_(std::move(windows)), include_static_(include_static) {
    geometry_.validate();
    windows_.validate();
    for (Duration w : windows_.windows) {
      const std::string prefix = "w" + duration_label(w) + ".";
      for (auto& n : multi_bsfe_feature_names(prefix)) schema_.names.push_back(std::move(n));
      for (std::string_view c : {"ce_count", "theta_dq", "theta_beat", "ce_frequency"}) {
        schema_.names.push_back(prefix + "count." + std::string(c));
      }
    }
    if (include_static_) {
      for (auto a : kStaticNumericAttrs) schema_.names.push_back("static." + std::string(a));
    }
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const Geometry& geometry() const noexcept { return geometry_; }
  const ObservationWindowSet& windows() const noexcept { return windows_; }

  /// `history` holds one DIMM's events sorted by log_time.
  std::vector<double> features(std::span<const CeEvent> history, Timestamp t) {
    const auto visible_end = std::upper_bound(
        history.begin(), history.end(), t,
        [](Timestamp value, const CeEvent& e) { return value < e.log_time; });
    const std::span<const CeEvent> visible(history.begin(), visible_end);

    std::vector<double> out;
    out.reserve(schema_.names.size());
    for (Duration w : windows_.windows) {
      const auto begin = std::upper_bound(
          visible.begin(), visible.end(), t - w,
          [](Timestamp value, const CeEvent& e) { return value < e.log_time; });
      const std::span<const CeEvent> in_window(begin, visible.end());
      const auto multi = multi_bsfe(aggregate_window(in_window, geometry_), &cache_);
      out.insert(out.end(), multi.begin(), multi.end());
      const auto counts = counting_features(in_window, w);
      out.push_back(static_cast<double>(counts.ce_count));
      out.push_back(static_cast<double>(counts.theta_dq));
      out.push_back(static_cast<double>(counts.theta_beat));
      out.push_back(counts.ce_frequency);
    }
    if (include_static_) {
      for (auto a : kStaticNumericAttrs) {
        double v = 0.0;
        if (!visible.empty()) {
          auto it = visible.back().static_attrs.find(std::string(a));
          if (it != visible.back().static_attrs.end()) v = parse_double(it->second).value_or(0.0);
        }
        out.push_back(v);
      }
    }
    return out;
  }

 private:
  Geometry geometry_;
  ObservationWindowSet windows_;
  bool include_static_;
  FeatureSchema schema_;
  BitFeatureCache cache_;
};

inline Timestamp floor_div(Timestamp a, Duration b) {
  Timestamp q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// Grid points k * interval in [from, to) with at least one of the DIMM's
/// events inside (t - largest window, t]. `events` is sorted by log_time.
inline std::vector<Timestamp> sample_grid(std::span<const CeEvent> events,
                                          const ObservationWindowSet& windows,
                                          Timestamp from = std::numeric_limits<Timestamp>::min(),
                                          Timestamp to = std::numeric_limits<Timestamp>::max()) {
  const Duration step = windows.sample_interval;
  const Duration span = windows.largest();
  std::vector<Timestamp> out;
  for (const auto& e : events) {
    Timestamp t = -floor_div(-e.log_time, step) * step;  // first grid point >= log_time
    if (!out.empty()) t = std::max(t, out.back() + step);
    for (; t < e.log_time + span; t += step) {
      if (t >= to) break;
      if (t >= from) out.push_back(t);
    }
  }
  return out;
}

/// y(t) = 1 iff the failure falls inside [t + lead, t + lead + valid].
inline int label_at(Timestamp t, std::optional<Timestamp> failure, Duration lead, Duration valid) {
  if (!failure) return 0;
  return (*failure >= t + lead && *failure <= t + lead + valid) ? 1 : 0;
}

struct TimePatchSample {
  std::string dimm_uid;
  Timestamp sample_time = 0;
  int label = 0;
  std::vector<double> features;

  bool operator==(const TimePatchSample&) const = default;
};

struct SampleSet {
  FeatureSchema schema;
  std::vector<TimePatchSample> samples;
};

/// Splits events sorted by (dimm_uid, log_time) into per-DIMM spans.
inline std::vector<std::span<const CeEvent>> group_by_dimm(std::span<const CeEvent> events) {
  std::vector<std::span<const CeEvent>> groups;
  for (std::size_t i = 0; i < events.size();) {
    std::size_t j = i;
    while (j < events.size() && events[j].dimm_uid == events[i].dimm_uid) ++j;
    groups.push_back(events.subspan(i, j - i));
    i = j;
  }
  return groups;
}

struct SampleOptions {
  Duration lead = 15 * kMinute;
  Duration valid = 7 * kDay;
  Timestamp from = std::numeric_limits<Timestamp>::min();
  Timestamp to = std::numeric_limits<Timestamp>::max();
  bool include_static = false;

  void validate() const {
    if (lead < 0) fail(ErrorKind::Config, "lead time must be non-negative");
    if (valid <= 0) fail(ErrorKind::Config, "validity window must be positive");
  }
};

/// `events` must be sorted by (dimm_uid, log_time), as parse_ce_log returns
/// them. Samples at or after a DIMM's failure time are not emitted.
inline SampleSet generate_samples(std::span<const CeEvent> events,
                                  const std::vector<FailureRecord>& failures,
                                  const ObservationWindowSet& windows, const Geometry& geometry,
                                  const SampleOptions& options = {}) {
  options.validate();
  TimePatchFeaturizer featurizer(geometry, windows, options.include_static);
  const auto failure_at = failure_index(failures);
  SampleSet out;
  out.schema = featurizer.schema();
  for (auto dimm : group_by_dimm(events)) {
    const std::string& uid = dimm.front().dimm_uid;
    std::optional<Timestamp> failure;
    if (auto it = failure_at.find(uid); it != failure_at.end()) failure = it->second;
    for (Timestamp t : sample_grid(dimm, windows, options.from, options.to)) {
      if (failure && t >= *failure) break;
      out.samples.push_back({uid, t, label_at(t, failure, options.lead, options.valid),
                             featurizer.features(dimm, t)});
    }
  }
  return out;
}

inline void write_samples(std::ostream& out, const SampleSet& set, std::string_view stamp = "") {
  out << "# m2mfp " << kVersion << " time-patch samples schema=" << set.schema.fingerprint();
  if (!stamp.empty()) out << ' ' << stamp;
  out << '\n';
  out << "dimm_uid,sample_time,label";
  for (const auto& n : set.schema.names) out << ',' << n;
  out << '\n';
  for (const auto& s : set.samples) {
    out << csv_escape(s.dimm_uid) << ',' << s.sample_time << ',' << s.label;
    for (double v : s.features) out << ',' << format_number(v);
    out << '\n';
  }
}

inline SampleSet read_samples(std::istream& in) {
  if (!in) fail(ErrorKind::Data, "sample file is not readable");
  SampleSet set;
  std::string line;
  bool header = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (!header) {
      if (fields.size() < 3 || fields[0] != "dimm_uid") {
        fail(ErrorKind::Data, "sample file header must start with dimm_uid,sample_time,label");
      }
      set.schema.names.assign(fields.begin() + 3, fields.end());
      header = true;
      continue;
    }
    ++row;
    if (fields.size() != set.schema.names.size() + 3) {
      fail(ErrorKind::Data, "sample row " + std::to_string(row) + " has wrong column count");
    }
    TimePatchSample s;
    s.dimm_uid = fields[0];
    auto t = parse_int(fields[1]);
    auto y = parse_int(fields[2]);
    if (!t || !y) fail(ErrorKind::Data, "sample row " + std::to_string(row) + " is malformed");
    s.sample_time = *t;
    s.label = static_cast<int>(*y);
    s.features.reserve(set.schema.names.size());
    for (std::size_t i = 3; i < fields.size(); ++i) {
      auto v = parse_double(fields[i]);
      if (!v) fail(ErrorKind::Data, "sample row " + std::to_string(row) + " has a non-numeric feature");
      s.features.push_back(*v);
    }
    set.samples.push_back(std::move(s));
  }
  if (!header) fail(ErrorKind::Data, "sample file has no header");
  return set;
}

}  // namespace m2mfp
