#pragma once

// Rule and lookup baselines that judge one CE at a time from its DQ-beat
// matrix, plus the time-point predictor interface they share with the rule
// base.

#include <map>
#include <memory>
#include <span>
#include <string>

#include "m2mfp/dimm_tree.hpp"
#include "m2mfp/eval.hpp"

namespace m2mfp {

struct LabeledBits {
  BitMatrix bits;
  int label = 0;
};

/// Occurrence counts of each bit pattern among positive and negative samples.
struct NaiveTable {
  std::map<std::uint64_t, std::pair<std::size_t, std::size_t>> counts;  // mask -> (n+, n-)

  bool operator==(const NaiveTable&) const = default;
};

inline NaiveTable naive_fit(std::span<const LabeledBits> samples) {
  NaiveTable t;
  for (const auto& s : samples) {
    auto& c = t.counts[s.bits.mask()];
    (s.label == 1 ? c.first : c.second) += 1;
  }
  return t;
}

inline bool naive_predict(const NaiveTable& table, const BitMatrix& bits) {
  auto it = table.counts.find(bits.mask());
  if (it == table.counts.end()) return false;
  return it->second.first > it->second.second;
}

namespace detail {

inline bool any_in_dq(const BitMatrix& bits, int dq) {
  if (dq >= bits.dqs()) return false;
  for (int b = 0; b < bits.beats(); ++b) {
    if (bits.test(b, dq)) return true;
  }
  return false;
}

}  // namespace detail

/// Errors in both the low DQ pair (0, 1) and the high DQ pair (2, 3).
inline bool risky_ce(const BitMatrix& bits) {
  using detail::any_in_dq;
  return (any_in_dq(bits, 0) || any_in_dq(bits, 1)) && (any_in_dq(bits, 2) || any_in_dq(bits, 3));
}

inline bool dq_beat_predict(const BitMatrix& bits) {
  return bits.faulty_dq_count() > 1 && bits.faulty_beat_count() > 1;
}

inline void write_naive_table(std::ostream& out, const NaiveTable& t, std::string_view stamp = "") {
  out << "# m2mfp " << kVersion << " naive table";
  if (!stamp.empty()) out << ' ' << stamp;
  out << '\n';
  out << "mask,n_pos,n_neg\n";
  for (const auto& [mask, c] : t.counts) out << mask << ',' << c.first << ',' << c.second << '\n';
}

inline NaiveTable read_naive_table(std::istream& in) {
  if (!in) fail(ErrorKind::Data, "naive table is not readable");
  NaiveTable t;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 3) fail(ErrorKind::Data, "malformed naive table row: " + line);
    const auto m = parse_int(f[0]);
    const auto p = parse_int(f[1]);
    const auto n = parse_int(f[2]);
    if (!m || !p || !n || *p < 0 || *n < 0) fail(ErrorKind::Data, "malformed naive table row: " + line);
    t.counts[static_cast<std::uint64_t>(*m)] = {static_cast<std::size_t>(*p), static_cast<std::size_t>(*n)};
  }
  return t;
}

/// A predictor that sees one CE at a time.
class TimePointPredictor {
 public:
  virtual ~TimePointPredictor() = default;
  virtual std::string name() const = 0;
  virtual bool fires(const CeEvent& event) = 0;
};

class RuleBasePredictor final : public TimePointPredictor {
 public:
  explicit RuleBasePredictor(RuleBase rules)
      : rules_(std::move(rules)), fingerprint_(rules_.schema.fingerprint()) {}
  std::string name() const override { return std::string(kSourceTimePoint); }
  bool fires(const CeEvent& event) override {
    return match_event(rules_, fingerprint_, time_point_features(event, cache_));
  }

 private:
  RuleBase rules_;
  std::string fingerprint_;
  BitFeatureCache cache_;
};

class NaivePredictor final : public TimePointPredictor {
 public:
  explicit NaivePredictor(NaiveTable table) : table_(std::move(table)) {}
  std::string name() const override { return "naive"; }
  bool fires(const CeEvent& event) override { return naive_predict(table_, event.bit_matrix); }

 private:
  NaiveTable table_;
};

class RiskyCePredictor final : public TimePointPredictor {
 public:
  std::string name() const override { return "risky_ce"; }
  bool fires(const CeEvent& event) override { return risky_ce(event.bit_matrix); }
};

class DqBeatPredictor final : public TimePointPredictor {
 public:
  std::string name() const override { return "dq_beat"; }
  bool fires(const CeEvent& event) override { return dq_beat_predict(event.bit_matrix); }
};

}  // namespace m2mfp
