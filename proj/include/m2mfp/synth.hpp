#pragma once

// Synthetic CE corpus with planted fault mechanisms.
//
// Healthy DIMMs emit a sparse trickle of single-bit CEs confined to one or
// two cells; a minority ("storm" DIMMs) also emit a dense burst on a single
// cell. Faulty DIMMs carry the same background noise plus bursts shaped by
// one mechanism:
//   row         many columns of one row in one bank
//   column      many rows of one column in one bank
//   multi_bank  scattered cells across several banks and devices
//   risky       a few cells hit by multi-DQ, multi-beat bit patterns
// and then fail shortly after the last burst. Each DIMM draws from its own
// stream seeded by (seed, index), so the corpus does not depend on
// generation order.

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include "m2mfp/ce_model.hpp"

namespace m2mfp {

enum class Mechanism { Healthy, HealthyStorm, Row, Column, MultiBank, Risky };

inline std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::Healthy: return "healthy";
    case Mechanism::HealthyStorm: return "healthy_storm";
    case Mechanism::Row: return "row";
    case Mechanism::Column: return "column";
    case Mechanism::MultiBank: return "multi_bank";
    case Mechanism::Risky: return "risky";
  }
  return "healthy";
}

struct MechanismWeights {
  double row = 0.30;
  double column = 0.25;
  double multi_bank = 0.20;
  double risky = 0.25;

  bool operator==(const MechanismWeights&) const = default;
};

struct SynthConfig {
  std::size_t n_dimms = 500;
  double fault_fraction = 0.2;
  int horizon_days = 90;
  Timestamp start = 1704067200;  // 2024-01-01 00:00:00 UTC
  MechanismWeights mechanisms;
  double noise_mean = 8.0;        // background CEs per DIMM over the horizon
  double storm_fraction = 0.10;   // share of healthy DIMMs with a single-cell burst
  Duration ttf_min = kHour;       // failure delay after onset
  Duration ttf_max = 7 * kDay;
  std::uint64_t seed = 20240101;
  Geometry geometry;

  void validate() const {
    geometry.validate();
    if (n_dimms == 0) fail(ErrorKind::Config, "synth: n_dimms must be positive");
    if (!(fault_fraction >= 0.0 && fault_fraction < 1.0)) {
      fail(ErrorKind::Config, "synth: fault_fraction must be in [0, 1)");
    }
    if (ttf_min <= 0 || ttf_max < ttf_min) fail(ErrorKind::Config, "synth: invalid time-to-failure range");
    if (static_cast<Duration>(horizon_days) * kDay < ttf_max + 2 * kDay) {
      fail(ErrorKind::Config, "synth: horizon too short for the time-to-failure range");
    }
    if (noise_mean < 0.0 || storm_fraction < 0.0 || storm_fraction > 1.0) {
      fail(ErrorKind::Config, "synth: invalid noise settings");
    }
    const auto& m = mechanisms;
    if (m.row < 0 || m.column < 0 || m.multi_bank < 0 || m.risky < 0 ||
        m.row + m.column + m.multi_bank + m.risky <= 0.0) {
      fail(ErrorKind::Config, "synth: mechanism weights must be non-negative with a positive sum");
    }
    if (fault_fraction > 0.0) {
      if (geometry.n_beat < 2 && geometry.n_dq < 2) {
        fail(ErrorKind::Config, "synth: geometry has no room for multi-bit patterns");
      }
      if (m.row > 0 && geometry.n_col < 10) fail(ErrorKind::Config, "synth: row faults need n_col >= 10");
      if (m.column > 0 && geometry.n_row < 10) {
        fail(ErrorKind::Config, "synth: column faults need n_row >= 10");
      }
      if (m.multi_bank > 0 && geometry.n_rank * geometry.n_device * geometry.n_bank < 3) {
        fail(ErrorKind::Config, "synth: multi-bank faults need at least 3 banks");
      }
      if (m.risky > 0 && (geometry.n_dq < 4 || geometry.n_beat < 2)) {
        fail(ErrorKind::Config, "synth: risky patterns need n_dq >= 4 and n_beat >= 2");
      }
    }
  }
};

struct TruthRecord {
  std::string dimm_uid;
  Mechanism mechanism = Mechanism::Healthy;
  std::optional<Timestamp> onset;
  std::optional<Timestamp> failure;
};

struct SynthCorpus {
  std::vector<CeEvent> events;  // sorted by (dimm_uid, log_time)
  std::vector<FailureRecord> failures;
  std::vector<TruthRecord> truth;
};

namespace detail {

struct Cell {
  int rank = 0;
  int device = 0;
  int bank = 0;  // flat bank index within the device
  std::int64_t row = 0;
  std::int64_t col = 0;
};

class DimmSynth {
 public:
  DimmSynth(const SynthConfig& cfg, std::size_t index, std::vector<CeEvent>& out)
      : cfg_(cfg), g_(cfg.geometry), rng_(splitmix64(cfg.seed + index)), out_(out) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "dimm-%05zu", index);
    uid_ = buf;
    cpu_ = static_cast<int>(index % 2);
    channel_ = static_cast<int>((index / 2) % 8);
    slot_ = static_cast<int>((index / 16) % 2);
    static constexpr std::array<std::string_view, 3> kVendors = {"A", "B", "C"};
    manufacturer_ = std::string(kVendors[index % kVendors.size()]);
  }

  const std::string& uid() const { return uid_; }
  Rng& rng() { return rng_; }

  Cell random_cell() {
    return {static_cast<int>(rng_.uniform_int(0, g_.n_rank - 1)),
            static_cast<int>(rng_.uniform_int(0, g_.n_device - 1)),
            static_cast<int>(rng_.uniform_int(0, g_.n_bank - 1)), rng_.uniform_int(0, g_.n_row - 1),
            rng_.uniform_int(0, g_.n_col - 1)};
  }

  BitMatrix single_bit() {
    BitMatrix b(g_.n_beat, g_.n_dq);
    b.set(static_cast<int>(rng_.uniform_int(0, g_.n_beat - 1)),
          static_cast<int>(rng_.uniform_int(0, g_.n_dq - 1)));
    return b;
  }

  // Two bits sharing a DQ (different beats) or sharing a beat with both DQs
  // in the same half, so neither risky_ce nor dq_beat_predict fires.
  BitMatrix two_bit() {
    BitMatrix b(g_.n_beat, g_.n_dq);
    const bool same_dq = g_.n_dq < 2 || (g_.n_beat >= 2 && rng_.bernoulli(0.5));
    if (same_dq) {
      const int dq = static_cast<int>(rng_.uniform_int(0, g_.n_dq - 1));
      const int b0 = static_cast<int>(rng_.uniform_int(0, g_.n_beat - 2));
      const int b1 = static_cast<int>(rng_.uniform_int(b0 + 1, g_.n_beat - 1));
      b.set(b0, dq);
      b.set(b1, dq);
    } else {
      const int beat = static_cast<int>(rng_.uniform_int(0, g_.n_beat - 1));
      const int half = g_.n_dq >= 4 ? static_cast<int>(rng_.uniform_int(0, 1)) * 2 : 0;
      b.set(beat, half);
      b.set(beat, half + 1);
    }
    return b;
  }

  BitMatrix faulty_bits() { return rng_.bernoulli(0.4) ? two_bit() : single_bit(); }

  // Bits on both DQ halves across at least two beats.
  BitMatrix risky_bits() {
    BitMatrix b(g_.n_beat, g_.n_dq);
    const int b0 = static_cast<int>(rng_.uniform_int(0, g_.n_beat - 2));
    const int b1 = static_cast<int>(rng_.uniform_int(b0 + 1, g_.n_beat - 1));
    b.set(b0, static_cast<int>(rng_.uniform_int(0, 1)));
    b.set(b1, static_cast<int>(rng_.uniform_int(2, 3)));
    const int extra = static_cast<int>(rng_.uniform_int(0, 2));
    for (int i = 0; i < extra; ++i) {
      b.set(static_cast<int>(rng_.uniform_int(0, g_.n_beat - 1)),
            static_cast<int>(rng_.uniform_int(0, g_.n_dq - 1)));
    }
    return b;
  }

  void emit(const Cell& c, Timestamp t, BitMatrix bits) {
    CeEvent e;
    e.dimm_uid = uid_;
    e.cpu_id = cpu_;
    e.channel_id = channel_;
    e.dimm_id = slot_;
    e.rank_id = c.rank;
    e.device_id = c.device;
    e.bankgroup_id = c.bank / g_.banks_per_group;
    e.bank_id = c.bank % g_.banks_per_group;
    e.row_id = c.row;
    e.column_id = c.col;
    e.error_type = rng_.bernoulli(0.2) ? ErrorType::Scrub : ErrorType::Read;
    e.log_time = t;
    e.bit_matrix = bits;
    e.static_attrs = {{"Capacity", "32768"}, {"FrequencyMHz", "3200"}, {"manufacturer", manufacturer_}};
    out_.push_back(std::move(e));
  }

  // Sparse single-bit CEs on one or two cells, spread over [from, to).
  void background(Timestamp from, Timestamp to) {
    if (to <= from) return;
    std::vector<Cell> cells{random_cell()};
    if (rng_.bernoulli(0.5)) cells.push_back(random_cell());
    const std::int64_t n = rng_.poisson(cfg_.noise_mean);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& c = cells[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))];
      emit(c, rng_.uniform_int(from, to - 1), single_bit());
    }
  }

  std::vector<Timestamp> burst_times(Timestamp end) {
    const auto n = rng_.uniform_int(15, 40);
    const Duration length = rng_.uniform_int(10 * kMinute, 2 * kHour);
    std::vector<Timestamp> times;
    for (std::int64_t i = 0; i < n; ++i) times.push_back(rng_.uniform_int(end - length, end));
    std::sort(times.begin(), times.end());
    return times;
  }

  void burst(Mechanism m, Timestamp end, const Cell& anchor, const std::vector<Cell>& spread) {
    const auto times = burst_times(end);
    switch (m) {
      case Mechanism::Row: {
        // The first ten CEs cover ten distinct columns.
        std::vector<std::int64_t> cols;
        while (cols.size() < 10 + static_cast<std::size_t>(rng_.uniform_int(0, 10))) {
          const auto c = rng_.uniform_int(0, g_.n_col - 1);
          if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
          if (static_cast<std::int64_t>(cols.size()) == g_.n_col) break;
        }
        for (std::size_t i = 0; i < times.size(); ++i) {
          Cell c = anchor;
          c.col = i < 10 ? cols[i] : cols[static_cast<std::size_t>(
                                         rng_.uniform_int(0, static_cast<std::int64_t>(cols.size()) - 1))];
          emit(c, times[i], faulty_bits());
        }
        break;
      }
      case Mechanism::Column: {
        std::vector<std::int64_t> rows;
        while (rows.size() < 10 + static_cast<std::size_t>(rng_.uniform_int(0, 10))) {
          const auto r = rng_.uniform_int(0, g_.n_row - 1);
          if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
          if (static_cast<std::int64_t>(rows.size()) == g_.n_row) break;
        }
        for (std::size_t i = 0; i < times.size(); ++i) {
          Cell c = anchor;
          c.row = i < 10 ? rows[i] : rows[static_cast<std::size_t>(
                                         rng_.uniform_int(0, static_cast<std::int64_t>(rows.size()) - 1))];
          emit(c, times[i], faulty_bits());
        }
        break;
      }
      case Mechanism::MultiBank:
        for (std::size_t i = 0; i < times.size(); ++i) {
          Cell c = spread[i % spread.size()];
          c.row = (c.row + rng_.uniform_int(0, 3)) % g_.n_row;
          c.col = (c.col + rng_.uniform_int(0, 3)) % g_.n_col;
          emit(c, times[i], faulty_bits());
        }
        break;
      case Mechanism::Risky:
        for (std::size_t i = 0; i < times.size(); ++i) {
          const Cell& c = spread[static_cast<std::size_t>(
              rng_.uniform_int(0, static_cast<std::int64_t>(spread.size()) - 1))];
          emit(c, times[i], rng_.bernoulli(0.7) ? risky_bits() : single_bit());
        }
        break;
      case Mechanism::HealthyStorm:
        for (Timestamp t : times) emit(anchor, t, single_bit());
        break;
      case Mechanism::Healthy:
        break;
    }
  }

  std::vector<Cell> spread_cells(Mechanism m) {
    std::vector<Cell> cells;
    if (m == Mechanism::MultiBank) {
      const auto want = std::min<std::int64_t>(rng_.uniform_int(3, 6),
                                               static_cast<std::int64_t>(g_.n_rank) * g_.n_device * g_.n_bank);
      while (static_cast<std::int64_t>(cells.size()) < want) {
        Cell c = random_cell();
        const bool seen = std::any_of(cells.begin(), cells.end(), [&](const Cell& o) {
          return o.rank == c.rank && o.device == c.device && o.bank == c.bank;
        });
        if (!seen) cells.push_back(c);
      }
    } else if (m == Mechanism::Risky) {
      const auto want = rng_.uniform_int(1, 3);
      for (std::int64_t i = 0; i < want; ++i) cells.push_back(random_cell());
    }
    return cells;
  }

 private:
  const SynthConfig& cfg_;
  const Geometry& g_;
  Rng rng_;
  std::vector<CeEvent>& out_;
  std::string uid_;
  std::string manufacturer_;
  int cpu_ = 0;
  int channel_ = 0;
  int slot_ = 0;
};

inline Mechanism draw_mechanism(Rng& rng, const MechanismWeights& w) {
  const double total = w.row + w.column + w.multi_bank + w.risky;
  double u = rng.uniform() * total;
  if ((u -= w.row) < 0) return Mechanism::Row;
  if ((u -= w.column) < 0) return Mechanism::Column;
  if ((u -= w.multi_bank) < 0) return Mechanism::MultiBank;
  return w.risky > 0 ? Mechanism::Risky : (w.multi_bank > 0 ? Mechanism::MultiBank
                                           : w.column > 0   ? Mechanism::Column
                                                            : Mechanism::Row);
}

}  // namespace detail

inline SynthCorpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  // Which DIMMs fail is drawn once from the master stream.
  const auto n_faulty = static_cast<std::size_t>(std::llround(cfg.fault_fraction * static_cast<double>(cfg.n_dimms)));
  std::vector<std::size_t> order(cfg.n_dimms);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng master(cfg.seed);
  master.shuffle(order);
  std::vector<std::uint8_t> faulty(cfg.n_dimms, 0);
  for (std::size_t i = 0; i < n_faulty; ++i) faulty[order[i]] = 1;

  const Timestamp end = cfg.start + static_cast<Duration>(cfg.horizon_days) * kDay;
  SynthCorpus corpus;
  for (std::size_t i = 0; i < cfg.n_dimms; ++i) {
    detail::DimmSynth dimm(cfg, i, corpus.events);
    Rng& rng = dimm.rng();
    TruthRecord truth{dimm.uid(), Mechanism::Healthy, std::nullopt, std::nullopt};
    if (!faulty[i]) {
      dimm.background(cfg.start, end);
      if (rng.bernoulli(cfg.storm_fraction)) {
        truth.mechanism = Mechanism::HealthyStorm;
        const Timestamp t = rng.uniform_int(cfg.start + 3 * kHour, end - 1);
        dimm.burst(Mechanism::HealthyStorm, t, dimm.random_cell(), {});
      }
    } else {
      const Mechanism m = detail::draw_mechanism(rng, cfg.mechanisms);
      const Duration ttf = rng.uniform_int(cfg.ttf_min, cfg.ttf_max);
      const Timestamp onset = rng.uniform_int(cfg.start + kDay, end - ttf - kDay);
      const Timestamp failure = onset + ttf;
      truth.mechanism = m;
      truth.onset = onset;
      truth.failure = failure;
      dimm.background(cfg.start, failure);

      const detail::Cell anchor = dimm.random_cell();
      const auto spread = dimm.spread_cells(m);
      // The last burst closes 20 to 60 minutes before the failure; earlier
      // bursts are scattered between onset and that point.
      const Timestamp last_end = failure - rng.uniform_int(20 * kMinute, 60 * kMinute);
      std::vector<Timestamp> ends{last_end};
      const auto extra = ttf > 6 * kHour ? rng.uniform_int(1, 3) : 0;
      for (std::int64_t k = 0; k < extra; ++k) {
        ends.push_back(rng.uniform_int(std::min(onset + 2 * kHour, last_end), last_end));
      }
      std::sort(ends.begin(), ends.end());
      for (Timestamp e : ends) dimm.burst(m, e, anchor, spread);
      corpus.failures.push_back({dimm.uid(), failure});
    }
    corpus.truth.push_back(std::move(truth));
  }
  detail::sort_events(corpus.events);
  return corpus;
}

inline void write_truth(std::ostream& out, const std::vector<TruthRecord>& truth) {
  out << "dimm_uid,mechanism,onset_time,failure_time\n";
  for (const auto& t : truth) {
    out << t.dimm_uid << ',' << to_string(t.mechanism) << ',';
    if (t.onset) out << *t.onset;
    out << ',';
    if (t.failure) out << *t.failure;
    out << '\n';
  }
}

}  // namespace m2mfp
