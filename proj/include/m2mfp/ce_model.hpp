#pragma once

// Correctable-error (CE) domain types and log ingestion.
//
// Two input encodings are accepted: canonical JSON lines (one record per
// line, mcelog field names or the CamelCase names seen in exported samples)
// and a 23-column CSV with the mcelog header. Rows that violate the schema
// or the configured geometry are dropped with a warning; the rest are sorted
// by (dimm_uid, log_time).

#include <cctype>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "m2mfp/common.hpp"

namespace m2mfp {

struct Geometry {
  int n_rank = 2;
  int n_device = 18;
  int n_bank = 16;  // total banks per device, bankgroups x banks_per_group
  int banks_per_group = 4;
  std::int64_t n_row = 131072;
  std::int64_t n_col = 1024;
  int n_beat = 8;
  int n_dq = 4;

  int n_bankgroup() const { return n_bank / banks_per_group; }

  void validate() const {
    if (n_rank <= 0 || n_device <= 0 || n_bank <= 0 || banks_per_group <= 0 || n_row <= 0 ||
        n_col <= 0 || n_beat <= 0 || n_dq <= 0) {
      fail(ErrorKind::Config, "geometry: all dimensions must be strictly positive");
    }
    if (n_bank % banks_per_group != 0) {
      fail(ErrorKind::Config, "geometry: n_bank must be a multiple of banks_per_group");
    }
    if (n_beat * n_dq > 64) {
      fail(ErrorKind::Config, "geometry: n_beat * n_dq must not exceed 64");
    }
  }

  bool operator==(const Geometry&) const = default;
};

/// N_beat x N_dq error-bit grid of one access. Cell (beat, dq) lives at bit
/// index beat * n_dq + dq of the canonical mask (beat-major).
class BitMatrix {
 public:
  BitMatrix() : BitMatrix(8, 4) {}
  BitMatrix(int n_beat, int n_dq, std::uint64_t mask = 0) : beats_(n_beat), dqs_(n_dq) {
    const int cells = n_beat * n_dq;
    const std::uint64_t valid = cells >= 64 ? ~0ULL : ((1ULL << cells) - 1);
    mask_ = mask & valid;
  }

  int beats() const noexcept { return beats_; }
  int dqs() const noexcept { return dqs_; }
  std::uint64_t mask() const noexcept { return mask_; }
  bool empty() const noexcept { return mask_ == 0; }
  int popcount() const noexcept { return std::popcount(mask_); }

  bool test(int beat, int dq) const noexcept { return (mask_ >> index(beat, dq)) & 1ULL; }
  void set(int beat, int dq, bool on = true) noexcept {
    const std::uint64_t bit = 1ULL << index(beat, dq);
    mask_ = on ? (mask_ | bit) : (mask_ & ~bit);
  }

  /// Number of DQ columns with at least one error bit.
  int faulty_dq_count() const noexcept {
    int n = 0;
    for (int d = 0; d < dqs_; ++d) {
      for (int b = 0; b < beats_; ++b) {
        if (test(b, d)) {
          ++n;
          break;
        }
      }
    }
    return n;
  }

  /// Number of beat rows with at least one error bit.
  int faulty_beat_count() const noexcept {
    int n = 0;
    for (int b = 0; b < beats_; ++b) {
      for (int d = 0; d < dqs_; ++d) {
        if (test(b, d)) {
          ++n;
          break;
        }
      }
    }
    return n;
  }

  bool operator==(const BitMatrix&) const = default;

 private:
  int index(int beat, int dq) const noexcept { return beat * dqs_ + dq; }

  int beats_;
  int dqs_;
  std::uint64_t mask_ = 0;
};

/// beat -> list of DQ indices, as exported by some mcelog decoders.
using BeatMap = std::map<std::int64_t, std::vector<std::int64_t>>;

struct DecodedBits {
  BitMatrix bits;
  bool bitinfo_missing = false;
  int dropped_entries = 0;  // out-of-range mask bits or map entries
};

/// Decodes either encoding (or their union when both are given). A missing
/// or all-zero payload yields an empty matrix flagged bitinfo_missing.
inline DecodedBits decode_bit_matrix(const std::optional<std::uint64_t>& mask,
                                     const std::optional<BeatMap>& beats,
                                     const Geometry& geometry) {
  DecodedBits out{BitMatrix(geometry.n_beat, geometry.n_dq), false, 0};
  if (mask) {
    const int cells = geometry.n_beat * geometry.n_dq;
    for (int i = 0; i < 64; ++i) {
      if (((*mask >> i) & 1ULL) == 0) continue;
      if (i >= cells) {
        ++out.dropped_entries;
        continue;
      }
      out.bits.set(i / geometry.n_dq, i % geometry.n_dq);
    }
  }
  if (beats) {
    for (const auto& [beat, dqs] : *beats) {
      for (std::int64_t dq : dqs) {
        if (beat < 0 || beat >= geometry.n_beat || dq < 0 || dq >= geometry.n_dq) {
          ++out.dropped_entries;
          continue;
        }
        out.bits.set(static_cast<int>(beat), static_cast<int>(dq));
      }
    }
  }
  out.bitinfo_missing = out.bits.empty();
  return out;
}

inline BeatMap encode_beat_map(const BitMatrix& bits) {
  BeatMap out;
  for (int b = 0; b < bits.beats(); ++b) {
    auto& dqs = out[b];
    for (int d = 0; d < bits.dqs(); ++d) {
      if (bits.test(b, d)) dqs.push_back(d);
    }
  }
  return out;
}

enum class ErrorType { Read, Scrub };

inline std::string_view to_string(ErrorType type) {
  return type == ErrorType::Read ? "Read" : "Scrub";
}

struct CeEvent {
  std::string dimm_uid;
  int cpu_id = 0;
  int channel_id = 0;
  int dimm_id = 0;
  int rank_id = 0;
  int device_id = 0;
  int bankgroup_id = 0;
  int bank_id = 0;
  std::int64_t row_id = 0;
  std::int64_t column_id = 0;
  ErrorType error_type = ErrorType::Read;
  Timestamp log_time = 0;
  BitMatrix bit_matrix;
  bool bitinfo_missing = false;
  std::map<std::string, std::string> static_attrs;

  /// Bank index within the device: bankgroup * banks_per_group + bank.
  int bank_index(const Geometry& g) const { return bankgroup_id * g.banks_per_group + bank_id; }

  bool operator==(const CeEvent&) const = default;
};

struct FailureRecord {
  std::string dimm_uid;
  Timestamp failure_time = 0;

  bool operator==(const FailureRecord&) const = default;
};

struct IngestWarning {
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string reason;
  bool dropped = false;

  bool operator==(const IngestWarning&) const = default;
};

struct IngestResult {
  std::vector<CeEvent> events;
  std::vector<IngestWarning> warnings;
  std::size_t dropped_rows = 0;
};

enum class LogFormat { CanonicalJsonl, Csv23 };

inline LogFormat parse_log_format(std::string_view tag) {
  std::string lower;
  for (char c : tag) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "jsonl" || lower == "canonicaljsonl" || lower == "canonical_jsonl") {
    return LogFormat::CanonicalJsonl;
  }
  if (lower == "csv" || lower == "csv23") return LogFormat::Csv23;
  fail(ErrorKind::Config, "unknown log format '" + std::string(tag) + "' (expected jsonl or csv23)");
}

namespace detail {

enum class Field {
  CpuId,
  ChannelId,
  DimmId,
  RankId,
  DeviceId,
  BankgroupId,
  BankId,
  RowId,
  ColumnId,
  RetryRdErrLogParity,
  RetryRdErrLog,
  BeatInfo,
  ErrorType,
  LogTime,
  Manufacturer,
  Model,
  PartNumber,
  Capacity,
  FrequencyMhz,
  MaxSpeedMhz,
  McaBank,
  MemoryType,
  Region,
  // Not part of the 23 mcelog columns.
  Beats,
  DimmUid,
  ProcessorArchitecture,
  Count,
};

inline constexpr std::size_t kFieldCount = static_cast<std::size_t>(Field::Count);

/// The 23 mcelog column names in table order.
inline constexpr std::array<std::string_view, 23> kCsv23Columns = {
    "cpuid",         "channelid",   "dimmid",       "rankid",       "deviceid",
    "bankgroupid",   "bankid",      "rowid",        "columnid",     "retryrderrlogparity",
    "retryrderrlog", "beat_info",   "error_type",   "log_time",     "manufacturter",
    "model",         "PN",          "Capacity",     "FrequencyMHz", "MaxSpeedMHz",
    "McaBank",       "memory_type", "region"};

inline std::string normalize_key(std::string_view key) {
  std::string out;
  for (char c : key) {
    if (c == '_' || c == ' ' || c == '-') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

inline std::optional<Field> field_for(std::string_view key) {
  static const std::map<std::string, Field> kAliases = {
      {"cpuid", Field::CpuId},
      {"channelid", Field::ChannelId},
      {"dimmid", Field::DimmId},
      {"rankid", Field::RankId},
      {"deviceid", Field::DeviceId},
      {"chipid", Field::DeviceId},
      {"bankgroupid", Field::BankgroupId},
      {"bankid", Field::BankId},
      {"rowid", Field::RowId},
      {"columnid", Field::ColumnId},
      {"retryrderrlogparity", Field::RetryRdErrLogParity},
      {"retryrderrlog", Field::RetryRdErrLog},
      {"beatinfo", Field::BeatInfo},
      {"errortype", Field::ErrorType},
      {"logtime", Field::LogTime},
      {"manufacturter", Field::Manufacturer},
      {"manufacturer", Field::Manufacturer},
      {"model", Field::Model},
      {"pn", Field::PartNumber},
      {"capacity", Field::Capacity},
      {"frequencymhz", Field::FrequencyMhz},
      {"maxspeedmhz", Field::MaxSpeedMhz},
      {"mcabank", Field::McaBank},
      {"memorytype", Field::MemoryType},
      {"region", Field::Region},
      {"beats", Field::Beats},
      {"dimmuid", Field::DimmUid},
      {"processorarchitecture", Field::ProcessorArchitecture},
  };
  auto it = kAliases.find(normalize_key(key));
  if (it == kAliases.end()) return std::nullopt;
  return it->second;
}

struct StaticAttr {
  Field field;
  std::string_view name;
};

inline constexpr std::array<StaticAttr, 12> kStaticAttrs = {{
    {Field::Manufacturer, "manufacturer"},
    {Field::Model, "model"},
    {Field::PartNumber, "PN"},
    {Field::Capacity, "Capacity"},
    {Field::FrequencyMhz, "FrequencyMHz"},
    {Field::MaxSpeedMhz, "MaxSpeedMHz"},
    {Field::McaBank, "McaBank"},
    {Field::MemoryType, "memory_type"},
    {Field::Region, "region"},
    {Field::ProcessorArchitecture, "ProcessorArchitecture"},
    {Field::RetryRdErrLog, "retryrderrlog"},
    {Field::RetryRdErrLogParity, "retryrderrlogparity"},
}};

struct RawRecord {
  std::array<std::optional<std::string>, kFieldCount> scalars;
  std::optional<BeatMap> beats;

  const std::optional<std::string>& get(Field f) const {
    return scalars[static_cast<std::size_t>(f)];
  }
  std::optional<std::string>& get(Field f) { return scalars[static_cast<std::size_t>(f)]; }
};

inline bool parse_beat_map_json(const nlohmann::json& j, BeatMap& out) {
  if (!j.is_object()) return false;
  for (const auto& [key, value] : j.items()) {
    auto beat = parse_int(key);
    if (!beat || !value.is_array()) return false;
    auto& dqs = out[*beat];
    for (const auto& dq : value) {
      if (!dq.is_number_integer()) return false;
      dqs.push_back(dq.get<std::int64_t>());
    }
  }
  return true;
}

inline std::optional<Timestamp> parse_timestamp(std::string_view text) {
  if (auto v = parse_int(text)) return *v;
  // "YYYY-MM-DD HH:MM:SS" (or with 'T'), interpreted as UTC.
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  std::string buf(text);
  for (char& c : buf) {
    if (c == 'T') c = ' ';
  }
  if (std::sscanf(buf.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6) {
    return std::nullopt;
  }
  // Days from civil (proleptic Gregorian).
  y -= mo <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  const std::int64_t days = static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
  return days * kDay + h * kHour + mi * kMinute + s;
}

inline std::optional<ErrorType> parse_error_type(std::string_view text) {
  const std::string key = normalize_key(text);
  if (key == "1" || key == "read" || key == "readce") return ErrorType::Read;
  if (key == "2" || key == "scrub" || key == "scrubce" || key == "scrubbing") return ErrorType::Scrub;
  return std::nullopt;
}

/// Validates one raw record and converts it into an event. Returns nullopt
/// (after recording a dropping warning) on schema or bounds violations.
inline std::optional<CeEvent> build_event(const RawRecord& raw, std::size_t row,
                                          const Geometry& g,
                                          std::vector<IngestWarning>& warnings) {
  auto drop = [&](std::string reason) -> std::optional<CeEvent> {
    warnings.push_back({row, std::move(reason), true});
    return std::nullopt;
  };

  struct Coord {
    Field field;
    std::string_view name;
    std::int64_t upper;  // exclusive; <= 0 means unbounded
    bool required;
  };
  const std::array<Coord, 9> coords = {{
      {Field::CpuId, "cpuid", 0, true},
      {Field::ChannelId, "channelid", 0, true},
      {Field::DimmId, "dimmid", 0, true},
      {Field::RankId, "rankid", g.n_rank, true},
      {Field::DeviceId, "deviceid", g.n_device, true},
      {Field::BankgroupId, "bankgroupid", g.n_bankgroup(), false},
      {Field::BankId, "bankid", g.banks_per_group, true},
      {Field::RowId, "rowid", g.n_row, true},
      {Field::ColumnId, "columnid", g.n_col, true},
  }};
  std::array<std::int64_t, 9> values{};
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& c = coords[i];
    const auto& text = raw.get(c.field);
    if (!text || text->empty()) {
      if (c.required) return drop("missing field " + std::string(c.name));
      values[i] = 0;
      continue;
    }
    auto v = parse_int(*text);
    if (!v) return drop("non-integer " + std::string(c.name) + " '" + *text + "'");
    if (*v < 0 || (c.upper > 0 && *v >= c.upper)) {
      return drop(std::string(c.name) + " " + std::to_string(*v) + " outside [0, " +
                  (c.upper > 0 ? std::to_string(c.upper) : std::string("inf")) + ")");
    }
    values[i] = *v;
  }

  CeEvent e;
  e.cpu_id = static_cast<int>(values[0]);
  e.channel_id = static_cast<int>(values[1]);
  e.dimm_id = static_cast<int>(values[2]);
  e.rank_id = static_cast<int>(values[3]);
  e.device_id = static_cast<int>(values[4]);
  e.bankgroup_id = static_cast<int>(values[5]);
  e.bank_id = static_cast<int>(values[6]);
  e.row_id = values[7];
  e.column_id = values[8];

  const auto& time_text = raw.get(Field::LogTime);
  if (!time_text) return drop("missing field log_time");
  auto t = parse_timestamp(*time_text);
  if (!t) return drop("unparseable log_time '" + *time_text + "'");
  e.log_time = *t;

  if (const auto& type_text = raw.get(Field::ErrorType); type_text && !type_text->empty()) {
    auto type = parse_error_type(*type_text);
    if (!type) return drop("unknown error_type '" + *type_text + "'");
    e.error_type = *type;
  }

  std::optional<std::uint64_t> mask;
  std::optional<BeatMap> beats = raw.beats;
  if (const auto& info = raw.get(Field::BeatInfo); info && !info->empty()) {
    if (auto v = parse_int(*info); v && *v >= 0) {
      mask = static_cast<std::uint64_t>(*v);
    } else {
      BeatMap parsed;
      auto j = nlohmann::json::parse(*info, nullptr, false);
      if (j.is_discarded() || !parse_beat_map_json(j, parsed)) {
        return drop("unparseable beat_info '" + *info + "'");
      }
      beats = std::move(parsed);
    }
  }
  DecodedBits decoded = decode_bit_matrix(mask, beats, g);
  if (decoded.dropped_entries > 0) {
    warnings.push_back({row,
                        "bit payload has " + std::to_string(decoded.dropped_entries) +
                            " entries outside the " + std::to_string(g.n_beat) + "x" +
                            std::to_string(g.n_dq) + " grid",
                        false});
  }
  e.bit_matrix = decoded.bits;
  e.bitinfo_missing = decoded.bitinfo_missing;

  for (const auto& attr : kStaticAttrs) {
    if (const auto& v = raw.get(attr.field); v && !v->empty()) {
      e.static_attrs.emplace(std::string(attr.name), *v);
    }
  }

  if (const auto& uid = raw.get(Field::DimmUid); uid && !uid->empty()) {
    e.dimm_uid = *uid;
  } else {
    auto part = [&](Field f) { return raw.get(f).value_or(""); };
    e.dimm_uid = part(Field::Region) + ":" + part(Field::Manufacturer) + ":" +
                 std::to_string(e.cpu_id) + ":" + std::to_string(e.channel_id) + ":" +
                 std::to_string(e.dimm_id);
  }
  return e;
}

inline std::string json_scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_float()) return format_number(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_null()) return "";
  return v.dump();
}

inline void sort_events(std::vector<CeEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const CeEvent& a, const CeEvent& b) {
    if (a.dimm_uid != b.dimm_uid) return a.dimm_uid < b.dimm_uid;
    return a.log_time < b.log_time;
  });
}

inline IngestResult parse_jsonl(std::istream& in, const Geometry& g) {
  IngestResult result;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      result.warnings.push_back({row, "malformed JSON record", true});
      ++result.dropped_rows;
      continue;
    }
    RawRecord raw;
    bool bad_beats = false;
    for (const auto& [key, value] : j.items()) {
      auto field = field_for(key);
      if (!field) continue;
      if (*field == Field::Beats || (*field == Field::BeatInfo && value.is_object())) {
        BeatMap map;
        if (!parse_beat_map_json(value, map)) {
          bad_beats = true;
          continue;
        }
        raw.beats = std::move(map);
        continue;
      }
      raw.get(*field) = json_scalar_text(value);
    }
    if (bad_beats) {
      result.warnings.push_back({row, "malformed beats map", true});
      ++result.dropped_rows;
      continue;
    }
    if (auto e = build_event(raw, row, g, result.warnings)) {
      result.events.push_back(std::move(*e));
    } else {
      ++result.dropped_rows;
    }
  }
  if (in.bad()) fail(ErrorKind::Data, "read error while parsing CE log");
  return result;
}

inline IngestResult parse_csv23(std::istream& in, const Geometry& g) {
  IngestResult result;
  std::string line;
  if (!std::getline(in, line)) return result;  // empty source
  const auto header = split_csv_line(line);
  std::vector<std::optional<Field>> columns;
  std::array<bool, kFieldCount> seen{};
  for (const auto& name : header) {
    auto f = field_for(name);
    columns.push_back(f);
    if (f) seen[static_cast<std::size_t>(*f)] = true;
  }
  for (std::string_view name : kCsv23Columns) {
    if (!seen[static_cast<std::size_t>(*field_for(name))]) {
      fail(ErrorKind::Data, "CSV header is missing mcelog column '" + std::string(name) + "'");
    }
  }
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      result.warnings.push_back({row,
                                 "expected " + std::to_string(header.size()) + " columns, got " +
                                     std::to_string(fields.size()),
                                 true});
      ++result.dropped_rows;
      continue;
    }
    RawRecord raw;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (columns[i]) raw.get(*columns[i]) = fields[i];
    }
    if (auto e = build_event(raw, row, g, result.warnings)) {
      result.events.push_back(std::move(*e));
    } else {
      ++result.dropped_rows;
    }
  }
  if (in.bad()) fail(ErrorKind::Data, "read error while parsing CE log");
  return result;
}

}  // namespace detail

inline IngestResult parse_ce_log(std::istream& in, LogFormat format, const Geometry& geometry) {
  geometry.validate();
  if (!in) fail(ErrorKind::Data, "CE log source is not readable");
  IngestResult result = format == LogFormat::CanonicalJsonl ? detail::parse_jsonl(in, geometry)
                                                            : detail::parse_csv23(in, geometry);
  detail::sort_events(result.events);
  return result;
}

inline IngestResult parse_ce_log(std::string_view text, LogFormat format, const Geometry& geometry) {
  std::istringstream in{std::string(text)};
  return parse_ce_log(in, format, geometry);
}

/// Writes events as canonical JSON lines that parse_ce_log reads back.
inline void write_canonical_jsonl(std::ostream& out, const std::vector<CeEvent>& events) {
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["dimm_uid"] = e.dimm_uid;
    j["cpuid"] = e.cpu_id;
    j["channelid"] = e.channel_id;
    j["dimmid"] = e.dimm_id;
    j["rankid"] = e.rank_id;
    j["deviceid"] = e.device_id;
    j["bankgroupid"] = e.bankgroup_id;
    j["bankid"] = e.bank_id;
    j["rowid"] = e.row_id;
    j["columnid"] = e.column_id;
    j["beat_info"] = e.bit_matrix.mask();
    j["error_type"] = e.error_type == ErrorType::Read ? 1 : 2;
    j["log_time"] = e.log_time;
    for (const auto& [key, value] : e.static_attrs) j[key] = value;
    out << j.dump() << '\n';
  }
}

/// Two-column failure file: dimm_uid,failure_time_epoch_s. Only the earliest
/// failure per DIMM is kept; output is sorted by dimm_uid.
inline std::vector<FailureRecord> parse_failures(std::istream& in) {
  if (!in) fail(ErrorKind::Data, "failure file is not readable");
  std::map<std::string, Timestamp> earliest;
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() >= 2 && detail::normalize_key(fields[0]) == "dimmuid") continue;
    }
    ++row;
    if (fields.size() != 2) {
      fail(ErrorKind::Data, "failure file row " + std::to_string(row) + ": expected 2 columns");
    }
    auto t = detail::parse_timestamp(fields[1]);
    if (!t || fields[0].empty()) {
      fail(ErrorKind::Data, "failure file row " + std::to_string(row) + ": malformed record");
    }
    auto [it, inserted] = earliest.emplace(fields[0], *t);
    if (!inserted) it->second = std::min(it->second, *t);
  }
  std::vector<FailureRecord> out;
  out.reserve(earliest.size());
  for (const auto& [uid, t] : earliest) out.push_back({uid, t});
  return out;
}

inline void write_failures(std::ostream& out, const std::vector<FailureRecord>& failures) {
  out << "dimm_uid,failure_time_epoch_s\n";
  for (const auto& f : failures) out << csv_escape(f.dimm_uid) << ',' << f.failure_time << '\n';
}

/// dimm_uid -> failure time lookup.
inline std::map<std::string, Timestamp> failure_index(const std::vector<FailureRecord>& failures) {
  std::map<std::string, Timestamp> out;
  for (const auto& f : failures) {
    auto [it, inserted] = out.emplace(f.dimm_uid, f.failure_time);
    if (!inserted) it->second = std::min(it->second, f.failure_time);
  }
  return out;
}

}  // namespace m2mfp
