#pragma once

// DIMM-level streaming evaluation.
//
// A prediction issued for DIMM s at time t is credited when s fails inside
// [t + lead, t + lead + valid]. Precision is |credited DIMMs| over DIMMs with
// at least one alarm; recall is |credited DIMMs| over DIMMs failing in the
// test period.

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "m2mfp/ce_model.hpp"

namespace m2mfp {

inline constexpr std::string_view kSourceTimePatch = "time_patch";
inline constexpr std::string_view kSourceTimePoint = "time_point";
inline constexpr std::string_view kSourceCombined = "combined";

struct PredictionEntry {
  std::string dimm_uid;
  Timestamp time = 0;            // when the prediction was issued
  Timestamp observed_until = 0;  // latest log_time the predictor had consumed
  bool positive = true;

  bool operator==(const PredictionEntry&) const = default;
};

/// Append-only list of predictions from one source.
class PredictionLog {
 public:
  explicit PredictionLog(std::string source = std::string(kSourceCombined))
      : source_(std::move(source)) {}

  void append(PredictionEntry entry) { entries_.push_back(std::move(entry)); }

  const std::string& source() const noexcept { return source_; }
  const std::vector<PredictionEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  bool operator==(const PredictionLog&) const = default;

 private:
  std::string source_;
  std::vector<PredictionEntry> entries_;
};

struct EvalConfig {
  Duration lead = 15 * kMinute;
  Duration valid = 7 * kDay;
  Timestamp test_start = std::numeric_limits<Timestamp>::min();
  Timestamp test_end = std::numeric_limits<Timestamp>::max();  // exclusive

  void validate() const {
    if (lead < 0) fail(ErrorKind::Config, "lead time must be non-negative");
    if (valid <= 0) fail(ErrorKind::Config, "validity window must be positive");
    if (test_end <= test_start) fail(ErrorKind::Config, "test period is empty");
  }

  bool in_period(Timestamp t) const { return t >= test_start && t < test_end; }
  bool credits(Timestamp prediction, Timestamp failure) const {
    return failure >= prediction + lead && failure <= prediction + lead + valid;
  }
};

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t n_pred = 0;
  std::size_t n_true = 0;
  std::size_t n_failures = 0;
  bool precision_degenerate = false;  // no predicted DIMMs
  bool recall_degenerate = false;     // no failures in the period
  bool f1_degenerate = false;         // precision + recall == 0

  bool operator==(const EvalResult&) const = default;
};

inline EvalResult metrics_from_counts(std::size_t n_pred, std::size_t n_true, std::size_t n_failures) {
  EvalResult r;
  r.n_pred = n_pred;
  r.n_true = n_true;
  r.n_failures = n_failures;
  r.precision_degenerate = n_pred == 0;
  r.recall_degenerate = n_failures == 0;
  r.precision = n_pred == 0 ? 0.0 : static_cast<double>(n_true) / static_cast<double>(n_pred);
  r.recall = n_failures == 0 ? 0.0 : static_cast<double>(n_true) / static_cast<double>(n_failures);
  r.f1_degenerate = r.precision + r.recall == 0.0;
  r.f1 = r.f1_degenerate ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline EvalResult evaluate(const PredictionLog& log, const std::vector<FailureRecord>& failures,
                           const EvalConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::vector<Timestamp>> alarms;
  for (const auto& e : log.entries()) {
    if (e.time < e.observed_until) {
      fail(ErrorKind::Data, "prediction for " + e.dimm_uid + " at " + std::to_string(e.time) +
                                " precedes consumed data at " + std::to_string(e.observed_until));
    }
    if (!e.positive || !cfg.in_period(e.time)) continue;
    alarms[e.dimm_uid].push_back(e.time);
  }
  for (auto& [uid, times] : alarms) std::sort(times.begin(), times.end());

  std::size_t n_failures = 0;
  std::size_t n_true = 0;
  for (const auto& [uid, t_fail] : failure_index(failures)) {
    if (!cfg.in_period(t_fail)) continue;
    ++n_failures;
    auto it = alarms.find(uid);
    if (it == alarms.end()) continue;
    // Need an alarm t with t_fail - lead - valid <= t <= t_fail - lead.
    const auto& times = it->second;
    auto lo = std::lower_bound(times.begin(), times.end(), t_fail - cfg.lead - cfg.valid);
    if (lo != times.end() && *lo <= t_fail - cfg.lead) ++n_true;
  }
  return metrics_from_counts(alarms.size(), n_true, n_failures);
}

/// Union of the positive entries of both logs, deduplicated by
/// (dimm_uid, time) and sorted.
inline PredictionLog combine(const PredictionLog& a, const PredictionLog& b) {
  std::map<std::pair<std::string, Timestamp>, Timestamp> merged;
  for (const auto* log : {&a, &b}) {
    for (const auto& e : log->entries()) {
      if (!e.positive) continue;
      auto [it, inserted] = merged.emplace(std::make_pair(e.dimm_uid, e.time), e.observed_until);
      if (!inserted) it->second = std::max(it->second, e.observed_until);
    }
  }
  PredictionLog out{std::string(kSourceCombined)};
  for (const auto& [key, observed] : merged) out.append({key.first, key.second, observed, true});
  return out;
}

/// The lead grid used for lead-time sensitivity reporting.
inline const std::vector<Duration>& default_lead_grid() {
  static const std::vector<Duration> kGrid = {1, kMinute, 5 * kMinute, 15 * kMinute, 30 * kMinute,
                                              60 * kMinute};
  return kGrid;
}

struct SweepRow {
  std::string source;
  Duration lead = 0;
  EvalResult result;
};

inline std::vector<SweepRow> lead_time_sweep(std::span<const PredictionLog> logs,
                                             const std::vector<FailureRecord>& failures,
                                             std::span<const Duration> leads, EvalConfig cfg) {
  std::vector<SweepRow> rows;
  for (const auto& log : logs) {
    for (Duration lead : leads) {
      cfg.lead = lead;
      rows.push_back({log.source(), lead, evaluate(log, failures, cfg)});
    }
  }
  return rows;
}

/// F1 as a function of a score threshold: thresholding scored predictions at
/// tau (positive iff score >= tau) and calling evaluate() gives the same
/// numbers, without materialising a log per threshold.
class ThresholdCurve {
 public:
  struct Scored {
    std::string dimm_uid;
    Timestamp time = 0;
    double score = 0.0;
  };

  ThresholdCurve(std::span<const Scored> predictions, const std::vector<FailureRecord>& failures,
                 const EvalConfig& cfg) {
    cfg.validate();
    const auto failure_at = failure_index(failures);
    std::map<std::string, double> best;
    std::map<std::string, double> credited;
    for (const auto& p : predictions) {
      if (!cfg.in_period(p.time)) continue;
      auto [it, inserted] = best.emplace(p.dimm_uid, p.score);
      if (!inserted) it->second = std::max(it->second, p.score);
      auto f = failure_at.find(p.dimm_uid);
      if (f != failure_at.end() && cfg.in_period(f->second) && cfg.credits(p.time, f->second)) {
        auto [c, fresh] = credited.emplace(p.dimm_uid, p.score);
        if (!fresh) c->second = std::max(c->second, p.score);
      }
    }
    for (const auto& [uid, t] : failure_at) {
      if (cfg.in_period(t)) ++n_failures_;
    }
    for (const auto& [uid, s] : best) dimm_max_.push_back(s);
    for (const auto& [uid, s] : credited) credited_max_.push_back(s);
    std::sort(dimm_max_.begin(), dimm_max_.end());
    std::sort(credited_max_.begin(), credited_max_.end());
  }

  EvalResult at(double tau) const {
    auto count_at_least = [tau](const std::vector<double>& v) {
      return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), tau));
    };
    return metrics_from_counts(count_at_least(dimm_max_), count_at_least(credited_max_), n_failures_);
  }

 private:
  std::vector<double> dimm_max_;
  std::vector<double> credited_max_;
  std::size_t n_failures_ = 0;
};

inline void write_prediction_log(std::ostream& out, const PredictionLog& log,
                                 std::string_view stamp = "") {
  out << "# m2mfp " << kVersion << " predictions source=" << log.source();
  if (!stamp.empty()) out << ' ' << stamp;
  out << '\n';
  out << "dimm_uid,prediction_time,observed_until,positive,source\n";
  for (const auto& e : log.entries()) {
    out << csv_escape(e.dimm_uid) << ',' << e.time << ',' << e.observed_until << ','
        << (e.positive ? 1 : 0) << ',' << log.source() << '\n';
  }
}

inline PredictionLog read_prediction_log(std::istream& in, std::string source) {
  if (!in) fail(ErrorKind::Data, "prediction log is not readable");
  PredictionLog log(std::move(source));
  std::string line;
  bool header = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    ++row;
    const auto f = split_csv_line(line);
    if (f.size() < 4) fail(ErrorKind::Data, "prediction log row " + std::to_string(row) + " is malformed");
    auto t = parse_int(f[1]);
    auto o = parse_int(f[2]);
    auto p = parse_int(f[3]);
    if (!t || !o || !p) {
      fail(ErrorKind::Data, "prediction log row " + std::to_string(row) + " is malformed");
    }
    log.append({f[0], *t, *o, *p != 0});
  }
  return log;
}

inline std::string metrics_csv_header() {
  return "source,lead_s,precision,recall,f1,n_pred,n_true,n_failures,degenerate";
}

inline std::string metrics_csv_row(std::string_view source, Duration lead, const EvalResult& r) {
  std::string flags;
  if (r.precision_degenerate) flags += "P";
  if (r.recall_degenerate) flags += "R";
  if (r.f1_degenerate) flags += "F";
  return std::string(source) + ',' + std::to_string(lead) + ',' + format_number(r.precision) + ',' +
         format_number(r.recall) + ',' + format_number(r.f1) + ',' + std::to_string(r.n_pred) + ',' +
         std::to_string(r.n_true) + ',' + std::to_string(r.n_failures) + ',' +
         (flags.empty() ? "-" : flags);
}

}  // namespace m2mfp
