#pragma once

// Stage orchestration behind the command-line tool. Every stage reads its
// inputs from, and writes its artifacts plus a `<stage>.manifest.json` to, one
// flat output directory. A manifest records the effective configuration, the
// fingerprint of the configuration sections the stage depends on, and content
// hashes of its inputs and outputs; downstream stages refuse stale or
// missing upstream artifacts.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2mfp/baselines.hpp"
#include "m2mfp/dimm_tree.hpp"
#include "m2mfp/eval.hpp"
#include "m2mfp/gbdt.hpp"
#include "m2mfp/hierarchy.hpp"
#include "m2mfp/synth.hpp"

namespace m2mfp {

using ojson = nlohmann::ordered_json;

struct EvalSettings {
  Duration lead = 15 * kMinute;
  Duration valid = 7 * kDay;
  std::optional<Timestamp> test_start;  // default: the split time
  std::optional<Timestamp> test_end;    // default: just past the last event or failure
  std::vector<Duration> sweep_leads = default_lead_grid();
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::string ce_log;    // empty: <out_dir>/ce_log.jsonl from gen-synth
  std::string failures;  // empty: <out_dir>/failures.csv from gen-synth
  std::string out_dir = "m2mfp_out";
  LogFormat format = LogFormat::CanonicalJsonl;
  Geometry geometry;
  ObservationWindowSet windows;
  Duration label_lead = 15 * kMinute;
  Duration label_valid = 7 * kDay;
  EvalSettings eval;
  std::optional<Timestamp> split_time;  // default: 5/9 of the way through the data
  TrainConfig train;
  int cv_folds = 5;
  DimmTreeConfig point;
  SynthConfig synth;
  bool include_static_attrs = false;

  void validate() const {
    geometry.validate();
    windows.validate();
    if (label_lead < 0 || eval.lead < 0) fail(ErrorKind::Config, "lead time must be non-negative");
    if (label_valid <= 0 || eval.valid <= 0) fail(ErrorKind::Config, "validity window must be positive");
    for (Duration d : eval.sweep_leads) {
      if (d < 0) fail(ErrorKind::Config, "sweep leads must be non-negative");
    }
    if (cv_folds < 2) fail(ErrorKind::Config, "cv_folds must be at least 2");
    if (out_dir.empty()) fail(ErrorKind::Config, "output directory must not be empty");
    train.validate();
    point.validate();
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view section) {
  if (!j.is_object()) fail(ErrorKind::Config, "config section '" + std::string(section) + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(ErrorKind::Config, "unknown config key '" + std::string(section) + (section.empty() ? "" : ".") + key + "'");
    }
  }
}

template <typename T>
T get_or(const nlohmann::json& j, std::string_view key, T fallback, std::string_view section) {
  const std::string k(key);
  if (!j.contains(k) || j.at(k).is_null()) return fallback;
  try {
    return j.at(k).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::Config, "config key '" + std::string(section) + "." + k + "' has the wrong type");
  }
}

inline std::optional<Timestamp> get_time(const nlohmann::json& j, std::string_view key, std::string_view section) {
  const std::string k(key);
  if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
  const auto& v = j.at(k);
  if (v.is_number_integer()) return v.get<Timestamp>();
  if (v.is_string()) {
    if (auto t = parse_timestamp(v.get<std::string>())) return t;
  }
  fail(ErrorKind::Config, "config key '" + std::string(section) + "." + k +
                              "' must be epoch seconds or \"YYYY-MM-DD HH:MM:SS\"");
}

inline ojson optional_json(const std::optional<Timestamp>& t) { return t ? ojson(*t) : ojson(); }

}  // namespace detail

inline std::string_view to_string(LogFormat f) { return f == LogFormat::Csv23 ? "csv23" : "jsonl"; }

inline ojson geometry_to_json(const Geometry& g) {
  return {{"n_rank", g.n_rank},       {"n_device", g.n_device}, {"n_bank", g.n_bank},
          {"banks_per_group", g.banks_per_group}, {"n_row", g.n_row}, {"n_col", g.n_col},
          {"n_beat", g.n_beat},       {"n_dq", g.n_dq}};
}

inline ojson config_section(const PipelineConfig& c, std::string_view name) {
  if (name == "seed") return c.seed;
  if (name == "paths") return {{"ce_log", c.ce_log}, {"failures", c.failures}, {"out_dir", c.out_dir}};
  if (name == "format") return std::string(to_string(c.format));
  if (name == "geometry") return geometry_to_json(c.geometry);
  if (name == "windows") {
    return {{"durations_s", c.windows.windows}, {"sample_interval_s", c.windows.sample_interval}};
  }
  if (name == "labels") return {{"lead_s", c.label_lead}, {"valid_s", c.label_valid}};
  if (name == "eval") {
    return {{"lead_s", c.eval.lead},
            {"valid_s", c.eval.valid},
            {"test_start", detail::optional_json(c.eval.test_start)},
            {"test_end", detail::optional_json(c.eval.test_end)},
            {"sweep_leads_s", c.eval.sweep_leads}};
  }
  if (name == "split_time") return detail::optional_json(c.split_time);
  if (name == "train") {
    ojson j = train_config_to_json(c.train);
    j.erase("seed");
    j["cv_folds"] = c.cv_folds;
    return j;
  }
  if (name == "point") {
    return {{"theta", c.point.theta}, {"max_depth", c.point.max_depth}, {"max_candidates", c.point.max_candidates}};
  }
  if (name == "synth") {
    const auto& s = c.synth;
    return {{"n_dimms", s.n_dimms},
            {"fault_fraction", s.fault_fraction},
            {"horizon_days", s.horizon_days},
            {"start", s.start},
            {"mechanisms",
             {{"row", s.mechanisms.row}, {"column", s.mechanisms.column},
              {"multi_bank", s.mechanisms.multi_bank}, {"risky", s.mechanisms.risky}}},
            {"noise_mean", s.noise_mean},
            {"storm_fraction", s.storm_fraction},
            {"ttf_min_s", s.ttf_min},
            {"ttf_max_s", s.ttf_max}};
  }
  if (name == "include_static_attrs") return c.include_static_attrs;
  fail(ErrorKind::Config, "unknown config section '" + std::string(name) + "'");
}

inline constexpr std::array<std::string_view, 13> kConfigSections = {
    "seed",   "paths",      "format", "geometry", "windows", "labels",
    "eval",   "split_time", "train",  "point",    "synth",   "include_static_attrs",
    "public_dataset"};

inline ojson config_to_json(const PipelineConfig& c) {
  ojson j;
  for (auto name : kConfigSections) {
    if (name != "public_dataset") j[std::string(name)] = config_section(c, name);
  }
  return j;
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get_or;
  PipelineConfig c;
  if (!j.is_object()) fail(ErrorKind::Config, "configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(kConfigSections.begin(), kConfigSections.end(), key) == kConfigSections.end()) {
      fail(ErrorKind::Config, "unknown config key '" + key + "'");
    }
  }
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed, "");
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_keys(p, {"ce_log", "failures", "out_dir"}, "paths");
    c.ce_log = get_or<std::string>(p, "ce_log", c.ce_log, "paths");
    c.failures = get_or<std::string>(p, "failures", c.failures, "paths");
    c.out_dir = get_or<std::string>(p, "out_dir", c.out_dir, "paths");
  }
  if (j.contains("format")) c.format = parse_log_format(get_or<std::string>(j, "format", "jsonl", ""));
  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    check_keys(g, {"n_rank", "n_device", "n_bank", "banks_per_group", "n_row", "n_col", "n_beat", "n_dq"},
               "geometry");
    c.geometry.n_rank = get_or(g, "n_rank", c.geometry.n_rank, "geometry");
    c.geometry.n_device = get_or(g, "n_device", c.geometry.n_device, "geometry");
    c.geometry.n_bank = get_or(g, "n_bank", c.geometry.n_bank, "geometry");
    c.geometry.banks_per_group = get_or(g, "banks_per_group", c.geometry.banks_per_group, "geometry");
    c.geometry.n_row = get_or(g, "n_row", c.geometry.n_row, "geometry");
    c.geometry.n_col = get_or(g, "n_col", c.geometry.n_col, "geometry");
    c.geometry.n_beat = get_or(g, "n_beat", c.geometry.n_beat, "geometry");
    c.geometry.n_dq = get_or(g, "n_dq", c.geometry.n_dq, "geometry");
  }
  if (j.contains("windows")) {
    const auto& w = j.at("windows");
    check_keys(w, {"durations_s", "sample_interval_s"}, "windows");
    c.windows.windows = get_or(w, "durations_s", c.windows.windows, "windows");
    c.windows.sample_interval = get_or(w, "sample_interval_s", c.windows.sample_interval, "windows");
  }
  if (j.contains("labels")) {
    const auto& l = j.at("labels");
    check_keys(l, {"lead_s", "valid_s"}, "labels");
    c.label_lead = get_or(l, "lead_s", c.label_lead, "labels");
    c.label_valid = get_or(l, "valid_s", c.label_valid, "labels");
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"lead_s", "valid_s", "test_start", "test_end", "sweep_leads_s"}, "eval");
    c.eval.lead = get_or(e, "lead_s", c.eval.lead, "eval");
    c.eval.valid = get_or(e, "valid_s", c.eval.valid, "eval");
    c.eval.test_start = detail::get_time(e, "test_start", "eval");
    c.eval.test_end = detail::get_time(e, "test_end", "eval");
    c.eval.sweep_leads = get_or(e, "sweep_leads_s", c.eval.sweep_leads, "eval");
  }
  c.split_time = detail::get_time(j, "split_time", "");
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t, {"n_trees", "max_depth", "learning_rate", "min_samples_leaf", "l2_regularization",
                   "positive_weight", "max_bins", "cv_folds"},
               "train");
    try {
      c.train = train_config_from_json(t);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::Config, "config section 'train' has a value of the wrong type");
    }
    if (t.contains("positive_weight") && !t.at("positive_weight").is_number() &&
        !(t.at("positive_weight").is_string() && t.at("positive_weight") == "auto") &&
        !t.at("positive_weight").is_null()) {
      fail(ErrorKind::Config, "train.positive_weight must be a number or \"auto\"");
    }
    c.cv_folds = get_or(t, "cv_folds", c.cv_folds, "train");
  }
  if (j.contains("point")) {
    const auto& p = j.at("point");
    check_keys(p, {"theta", "max_depth", "max_candidates"}, "point");
    c.point.theta = get_or(p, "theta", c.point.theta, "point");
    c.point.max_depth = get_or(p, "max_depth", c.point.max_depth, "point");
    c.point.max_candidates = get_or(p, "max_candidates", c.point.max_candidates, "point");
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    check_keys(s, {"n_dimms", "fault_fraction", "horizon_days", "start", "mechanisms", "noise_mean",
                   "storm_fraction", "ttf_min_s", "ttf_max_s"},
               "synth");
    auto& y = c.synth;
    y.n_dimms = get_or(s, "n_dimms", y.n_dimms, "synth");
    y.fault_fraction = get_or(s, "fault_fraction", y.fault_fraction, "synth");
    y.horizon_days = get_or(s, "horizon_days", y.horizon_days, "synth");
    y.start = detail::get_time(s, "start", "synth").value_or(y.start);
    if (s.contains("mechanisms")) {
      const auto& m = s.at("mechanisms");
      check_keys(m, {"row", "column", "multi_bank", "risky"}, "synth.mechanisms");
      y.mechanisms.row = get_or(m, "row", y.mechanisms.row, "synth.mechanisms");
      y.mechanisms.column = get_or(m, "column", y.mechanisms.column, "synth.mechanisms");
      y.mechanisms.multi_bank = get_or(m, "multi_bank", y.mechanisms.multi_bank, "synth.mechanisms");
      y.mechanisms.risky = get_or(m, "risky", y.mechanisms.risky, "synth.mechanisms");
    }
    y.noise_mean = get_or(s, "noise_mean", y.noise_mean, "synth");
    y.storm_fraction = get_or(s, "storm_fraction", y.storm_fraction, "synth");
    y.ttf_min = get_or(s, "ttf_min_s", y.ttf_min, "synth");
    y.ttf_max = get_or(s, "ttf_max_s", y.ttf_max, "synth");
  }
  c.include_static_attrs = get_or(j, "include_static_attrs", c.include_static_attrs, "");
  // Optional shorthand for a real corpus: {"ce_log": ..., "failures": ..., "format": ...}.
  if (j.contains("public_dataset") && !j.at("public_dataset").is_null()) {
    const auto& p = j.at("public_dataset");
    check_keys(p, {"ce_log", "failures", "format"}, "public_dataset");
    c.ce_log = get_or<std::string>(p, "ce_log", c.ce_log, "public_dataset");
    c.failures = get_or<std::string>(p, "failures", c.failures, "public_dataset");
    if (p.contains("format")) c.format = parse_log_format(get_or<std::string>(p, "format", "csv23", "public_dataset"));
  }
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  c.synth.geometry = c.geometry;
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config file " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::Config, "config file " + path + " is not valid JSON");
  return config_from_json(j);
}

/// Re-derives seeds that follow the top-level seed after an override.
inline void sync_derived(PipelineConfig& c) {
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  c.synth.geometry = c.geometry;
}

// ---------------------------------------------------------------------------
// Artifacts and manifests

struct StageInfo {
  std::string_view name;
  std::vector<std::string_view> sections;  // config sections the stage reads
  std::vector<std::string_view> outputs;
};

inline const std::vector<StageInfo>& stage_table() {
  static const std::vector<StageInfo> kStages = {
      {"gen-synth", {"seed", "synth", "geometry"}, {"ce_log.jsonl", "failures.csv", "truth.csv"}},
      {"ingest", {"format", "geometry", "paths"}, {"events.jsonl", "failures_ingested.csv", "warnings.csv"}},
      {"featurize", {"windows", "labels", "split_time", "include_static_attrs"}, {"train_samples.csv"}},
      {"train-patch", {"seed", "train", "labels"}, {"patch_model.json", "feature_importance.csv"}},
      {"train-point", {"point", "labels", "split_time"}, {"point_tree.json", "rules.txt", "naive_table.csv"}},
      {"predict",
       {"windows", "split_time", "eval.test_period", "include_static_attrs"},
       {"predictions_time_patch.csv", "predictions_time_point.csv", "predictions_combined.csv",
        "predictions_naive.csv", "predictions_risky_ce.csv", "predictions_dq_beat.csv"}},
      {"evaluate", {"eval"}, {"metrics.csv"}},
      {"sweep-lead", {"eval.sweep"}, {"lead_sweep.csv"}},
      {"report", {}, {"report.txt"}},
  };
  return kStages;
}

inline const StageInfo& stage_info(std::string_view name) {
  for (const auto& s : stage_table()) {
    if (s.name == name) return s;
  }
  fail(ErrorKind::Config, "unknown stage '" + std::string(name) + "'");
}

/// Fingerprint of the configuration sections one stage depends on.
inline std::string stage_config_fingerprint(const PipelineConfig& c, std::string_view stage) {
  ojson j;
  for (auto section : stage_info(stage).sections) {
    if (section == "eval.test_period") {
      j["eval.test_period"] = {detail::optional_json(c.eval.test_start), detail::optional_json(c.eval.test_end)};
    } else if (section == "eval.sweep") {
      j["eval.sweep"] = {c.eval.valid, detail::optional_json(c.eval.test_start),
                         detail::optional_json(c.eval.test_end), c.eval.sweep_leads};
    } else if (section == "paths") {
      j["paths"] = {{"ce_log", c.ce_log}, {"failures", c.failures}};
    } else {
      j[std::string(section)] = config_section(c, section);
    }
  }
  return fingerprint(j.dump());
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::MissingDependency, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Config, "cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorKind::Data, "write failed for " + p.string());
}

class Workspace {
 public:
  explicit Workspace(PipelineConfig cfg, std::ostream* log = &std::cerr)
      : cfg_(std::move(cfg)), dir_(cfg_.out_dir), log_(log) {
    cfg_.validate();
  }

  const PipelineConfig& config() const noexcept { return cfg_; }
  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path path(std::string_view name) const { return dir_ / std::string(name); }

  void ensure_dir() const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::Config, "cannot create output directory " + dir_.string());
  }

  std::string stamp(std::string_view stage) const {
    return "stage=" + std::string(stage) + " config=" + stage_config_fingerprint(cfg_, stage);
  }

  /// Loads an upstream artifact after checking the producer's manifest.
  std::string require(std::string_view producer, std::string_view artifact) {
    const auto manifest_path = path(std::string(producer) + ".manifest.json");
    const auto artifact_path = path(artifact);
    if (!std::filesystem::exists(artifact_path) || !std::filesystem::exists(manifest_path)) {
      fail(ErrorKind::MissingDependency, "missing " + artifact_path.string() + "; run `m2mfp " +
                                             std::string(producer) + "` first");
    }
    const auto manifest = nlohmann::json::parse(read_file(manifest_path), nullptr, false);
    if (manifest.is_discarded()) {
      fail(ErrorKind::Data, "corrupt manifest " + manifest_path.string() + "; rerun `m2mfp " +
                                std::string(producer) + "`");
    }
    if (manifest.value("config_fingerprint", "") != stage_config_fingerprint(cfg_, producer)) {
      fail(ErrorKind::Config, "configuration changed since `m2mfp " + std::string(producer) +
                                  "` produced " + std::string(artifact) + "; rerun it");
    }
    std::string content = read_file(artifact_path);
    const auto& outputs = manifest.at("outputs");
    if (!outputs.contains(std::string(artifact)) ||
        outputs.at(std::string(artifact)).get<std::string>() != fingerprint(content)) {
      fail(ErrorKind::Config, std::string(artifact) + " does not match the manifest of `m2mfp " +
                                  std::string(producer) + "`; rerun it");
    }
    inputs_[std::string(artifact)] = fingerprint(content);
    upstream_[std::string(producer)] = manifest.value("stage_fingerprint", "");
    return content;
  }

  /// Reads an input file given by path (not produced by a stage).
  std::string read_external(const std::string& file, std::string_view producer_hint) {
    if (!std::filesystem::exists(file)) {
      if (!producer_hint.empty()) {
        fail(ErrorKind::MissingDependency, "missing " + file + "; run `m2mfp " + std::string(producer_hint) + "` first");
      }
      fail(ErrorKind::MissingDependency, "missing input file " + file);
    }
    std::string content = read_file(file);
    inputs_[file] = fingerprint(content);
    return content;
  }

  void put(std::string_view name, std::string content) { outputs_.emplace_back(std::string(name), std::move(content)); }

  void begin(std::string_view stage) {
    stage_ = std::string(stage);
    inputs_.clear();
    upstream_.clear();
    outputs_.clear();
    extra_ = ojson::object();
    started_ = std::chrono::steady_clock::now();
    if (log_) *log_ << "m2mfp: stage=" << stage_ << " status=start\n";
  }

  ojson& extra() { return extra_; }

  void commit() {
    ensure_dir();
    ojson manifest;
    manifest["stage"] = stage_;
    manifest["version"] = std::string(kVersion);
    manifest["config_fingerprint"] = stage_config_fingerprint(cfg_, stage_);
    Fnv1a h;
    h.update(manifest["config_fingerprint"].get<std::string>());
    ojson upstream = ojson::object();
    for (const auto& [k, v] : upstream_) {
      upstream[k] = v;
      h.update(k);
      h.update(v);
    }
    ojson inputs = ojson::object();
    for (const auto& [k, v] : inputs_) {
      inputs[k] = v;
      h.update(k);
      h.update(v);
    }
    manifest["stage_fingerprint"] = h.hex();
    manifest["upstream"] = upstream;
    manifest["inputs"] = inputs;
    ojson outputs = ojson::object();
    for (const auto& [name, content] : outputs_) {
      write_file(path(name), content);
      outputs[name] = fingerprint(content);
    }
    manifest["outputs"] = outputs;
    if (!extra_.empty()) manifest["summary"] = extra_;
    // The output location is not part of the echo, so runs into different
    // directories produce identical manifests.
    ojson echo = config_to_json(cfg_);
    echo["paths"].erase("out_dir");
    manifest["config"] = echo;
    write_file(path(stage_ + ".manifest.json"), manifest.dump(2) + "\n");
    if (log_) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started_);
      *log_ << "m2mfp: stage=" << stage_ << " status=done outputs=" << outputs_.size()
            << " elapsed_ms=" << ms.count() << '\n';
    }
  }

  std::ostream* log() const { return log_; }

 private:
  PipelineConfig cfg_;
  std::filesystem::path dir_;
  std::ostream* log_;
  std::string stage_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> upstream_;
  std::vector<std::pair<std::string, std::string>> outputs_;
  ojson extra_ = ojson::object();
  std::chrono::steady_clock::time_point started_;
};

// ---------------------------------------------------------------------------
// Shared loaders

struct DataSpan {
  Timestamp first = 0;
  Timestamp last = 0;
  Timestamp last_failure = 0;
};

struct Periods {
  Timestamp split = 0;
  Timestamp test_start = 0;
  Timestamp test_end = 0;
};

inline Periods resolve_periods(const PipelineConfig& c, const DataSpan& span) {
  Periods p;
  if (c.split_time) {
    p.split = *c.split_time;
  } else {
    const Timestamp raw = span.first + (span.last - span.first) * 5 / 9;
    p.split = floor_div(raw, c.windows.sample_interval) * c.windows.sample_interval;
  }
  if (p.split <= span.first || p.split > span.last) {
    fail(ErrorKind::Config, "split time " + std::to_string(p.split) + " lies outside the data horizon [" +
                                std::to_string(span.first) + ", " + std::to_string(span.last) + "]");
  }
  p.test_start = c.eval.test_start.value_or(p.split);
  p.test_end = c.eval.test_end.value_or(std::max(span.last, span.last_failure) + 1);
  if (p.test_end <= p.test_start) fail(ErrorKind::Config, "test period is empty");
  return p;
}

struct IngestedData {
  std::vector<CeEvent> events;
  std::vector<FailureRecord> failures;
  DataSpan span;
};

inline IngestedData load_ingested(Workspace& ws) {
  IngestedData d;
  std::istringstream events(ws.require("ingest", "events.jsonl"));
  auto parsed = parse_ce_log(events, LogFormat::CanonicalJsonl, ws.config().geometry);
  if (!parsed.warnings.empty()) fail(ErrorKind::Data, "events.jsonl does not round-trip; rerun `m2mfp ingest`");
  d.events = std::move(parsed.events);
  std::istringstream failures(ws.require("ingest", "failures_ingested.csv"));
  d.failures = parse_failures(failures);
  if (d.events.empty()) fail(ErrorKind::Data, "no CE events were ingested");
  d.span.first = d.span.last = d.events.front().log_time;
  for (const auto& e : d.events) {
    d.span.first = std::min(d.span.first, e.log_time);
    d.span.last = std::max(d.span.last, e.log_time);
  }
  d.span.last_failure = d.span.first;
  for (const auto& f : d.failures) d.span.last_failure = std::max(d.span.last_failure, f.failure_time);
  return d;
}

template <typename Writer>
std::string to_text(Writer&& w) {
  std::ostringstream out;
  w(out);
  return out.str();
}

// ---------------------------------------------------------------------------
// Stages

inline void run_gen_synth(Workspace& ws) {
  ws.begin("gen-synth");
  const auto corpus = generate_corpus(ws.config().synth);
  ws.put("ce_log.jsonl", to_text([&](std::ostream& o) { write_canonical_jsonl(o, corpus.events); }));
  ws.put("failures.csv", to_text([&](std::ostream& o) { write_failures(o, corpus.failures); }));
  ws.put("truth.csv", to_text([&](std::ostream& o) { write_truth(o, corpus.truth); }));
  ws.extra()["n_dimms"] = corpus.truth.size();
  ws.extra()["n_events"] = corpus.events.size();
  ws.extra()["n_failures"] = corpus.failures.size();
  ws.commit();
}

inline void run_ingest(Workspace& ws) {
  ws.begin("ingest");
  const auto& c = ws.config();
  const bool synthetic_log = c.ce_log.empty();
  const bool synthetic_failures = c.failures.empty();
  std::string log_text = synthetic_log ? ws.require("gen-synth", "ce_log.jsonl") : ws.read_external(c.ce_log, "");
  std::string failure_text =
      synthetic_failures ? ws.require("gen-synth", "failures.csv") : ws.read_external(c.failures, "");
  std::istringstream log_in(log_text);
  auto result = parse_ce_log(log_in, c.format, c.geometry);
  log_text.clear();
  std::istringstream failure_in(failure_text);
  const auto failures = parse_failures(failure_in);
  if (result.events.empty()) fail(ErrorKind::Data, "CE log contains no usable events");

  ws.put("events.jsonl", to_text([&](std::ostream& o) { write_canonical_jsonl(o, result.events); }));
  ws.put("failures_ingested.csv", to_text([&](std::ostream& o) { write_failures(o, failures); }));
  ws.put("warnings.csv", to_text([&](std::ostream& o) {
           o << "row,reason,dropped\n";
           for (const auto& w : result.warnings) o << w.row << ',' << csv_escape(w.reason) << ',' << (w.dropped ? 1 : 0) << '\n';
         }));
  ws.extra()["n_events"] = result.events.size();
  ws.extra()["n_dropped_rows"] = result.dropped_rows;
  ws.extra()["n_warnings"] = result.warnings.size();
  ws.extra()["n_failures"] = failures.size();
  if (ws.log() && result.dropped_rows > 0) {
    *ws.log() << "m2mfp: stage=ingest dropped_rows=" << result.dropped_rows << '\n';
  }
  ws.commit();
}

inline void run_featurize(Workspace& ws) {
  ws.begin("featurize");
  const auto& c = ws.config();
  const auto data = load_ingested(ws);
  const auto periods = resolve_periods(c, data.span);
  SampleOptions options;
  options.lead = c.label_lead;
  options.valid = c.label_valid;
  options.to = periods.split;
  options.include_static = c.include_static_attrs;
  const auto set = generate_samples(data.events, data.failures, c.windows, c.geometry, options);
  std::size_t positives = 0;
  for (const auto& s : set.samples) positives += s.label == 1 ? 1 : 0;
  ws.put("train_samples.csv", to_text([&](std::ostream& o) { write_samples(o, set, ws.stamp("featurize")); }));
  ws.extra()["split_time"] = periods.split;
  ws.extra()["n_samples"] = set.samples.size();
  ws.extra()["n_positive"] = positives;
  ws.commit();
}

inline void run_train_patch(Workspace& ws) {
  ws.begin("train-patch");
  const auto& c = ws.config();
  std::istringstream samples_in(ws.require("featurize", "train_samples.csv"));
  const auto set = read_samples(samples_in);
  const auto data_failures = [&] {
    std::istringstream in(ws.require("ingest", "failures_ingested.csv"));
    return parse_failures(in);
  }();
  EvalConfig cv;
  cv.lead = c.label_lead;
  cv.valid = c.label_valid;
  const auto selection = select_threshold(set, data_failures, c.train, cv, c.cv_folds);
  GbdtModel model = train(set, c.train);
  model.threshold = selection.threshold;
  ojson extra;
  extra["stamp"] = ws.stamp("train-patch");
  extra["cv_mean_f1"] = selection.mean_f1;
  ws.put("patch_model.json", to_text([&](std::ostream& o) { save_model(o, model, extra); }));
  ws.put("feature_importance.csv", to_text([&](std::ostream& o) {
           o << "# m2mfp " << kVersion << " feature importance " << ws.stamp("train-patch") << '\n';
           o << "feature,gain\n";
           for (const auto& [name, gain] : feature_importance(model)) o << name << ',' << format_number(gain) << '\n';
         }));
  ws.extra()["threshold"] = selection.threshold;
  ws.extra()["cv_mean_f1"] = selection.mean_f1;
  ws.extra()["n_trees"] = model.trees.size();
  ws.commit();
}

/// Training events before the split, each labelled by whether its DIMM fails
/// before split + validity window.
inline std::vector<TimePointSample> time_point_training(const IngestedData& data, Timestamp split, Duration valid) {
  const auto failure_at = failure_index(data.failures);
  BitFeatureCache cache;
  std::vector<TimePointSample> out;
  for (const auto& e : data.events) {
    if (e.log_time >= split) continue;
    auto it = failure_at.find(e.dimm_uid);
    const int label = it != failure_at.end() && it->second < split + valid ? 1 : 0;
    out.push_back({e.dimm_uid, time_point_features(e, cache), label});
  }
  return out;
}

inline void run_train_point(Workspace& ws) {
  ws.begin("train-point");
  const auto& c = ws.config();
  const auto data = load_ingested(ws);
  const auto periods = resolve_periods(c, data.span);
  const auto samples = time_point_training(data, periods.split, c.label_valid);
  if (samples.empty()) fail(ErrorKind::Data, "no CE events before the split time");
  const auto tree = build_tree(samples, c.point);
  const auto rules = extract_rules(tree);

  std::vector<LabeledBits> labeled;
  std::size_t k = 0;
  for (const auto& e : data.events) {
    if (e.log_time >= periods.split) continue;
    labeled.push_back({e.bit_matrix, samples[k++].dimm_label});
  }
  const auto table = naive_fit(labeled);

  ojson tree_doc;
  tree_doc["format"] = "m2mfp.dimm_tree";
  tree_doc["version"] = 1;
  tree_doc["generator"] = std::string(kVersion);
  tree_doc["stamp"] = ws.stamp("train-point");
  tree_doc["schema_fingerprint"] = tree.schema.fingerprint();
  tree_doc["theta"] = c.point.theta;
  tree_doc["max_depth"] = c.point.max_depth;
  tree_doc["root"] = tree_to_json(tree);
  ws.put("point_tree.json", tree_doc.dump(2) + "\n");
  ws.put("rules.txt", to_text([&](std::ostream& o) { write_rule_base(o, rules, ws.stamp("train-point")); }));
  ws.put("naive_table.csv", to_text([&](std::ostream& o) { write_naive_table(o, table, ws.stamp("train-point")); }));
  ws.extra()["n_rules"] = rules.rules.size();
  ws.extra()["tree_depth"] = tree.depth();
  ws.extra()["n_training_events"] = samples.size();
  ws.commit();
}

/// Replays the test period in time order. Events become visible to the
/// predictors only once the clock reaches their log_time; time-point
/// predictors judge each arriving event, and the time-patch model is scored
/// on the sample grid from the events visible so far.
struct ReplayResult {
  PredictionLog patch{std::string(kSourceTimePatch)};
  std::vector<PredictionLog> point;  // rules first, then baselines
};

inline ReplayResult replay(std::span<const CeEvent> events, const Periods& periods, const GbdtModel& model,
                           TimePatchFeaturizer& featurizer, std::vector<std::unique_ptr<TimePointPredictor>>& predictors) {
  if (!model.threshold) fail(ErrorKind::Data, "time-patch model has no decision threshold");
  const std::string fp = featurizer.schema().fingerprint();
  const auto dimms = group_by_dimm(events);

  struct Tick {
    Timestamp time;
    int kind;  // 0: event arrives, 1: grid point
    std::size_t dimm;
    std::size_t index;
    auto operator<=>(const Tick&) const = default;
  };
  std::vector<Tick> ticks;
  for (std::size_t d = 0; d < dimms.size(); ++d) {
    for (std::size_t i = 0; i < dimms[d].size(); ++i) ticks.push_back({dimms[d][i].log_time, 0, d, i});
    for (Timestamp t : sample_grid(dimms[d], featurizer.windows(), periods.test_start, periods.test_end)) {
      ticks.push_back({t, 1, d, 0});
    }
  }
  std::sort(ticks.begin(), ticks.end());

  ReplayResult out;
  for (const auto& p : predictors) out.point.emplace_back(p->name());
  std::vector<std::size_t> visible(dimms.size(), 0);
  for (const auto& tick : ticks) {
    const auto& dimm = dimms[tick.dimm];
    if (tick.kind == 0) {
      ++visible[tick.dimm];
      const CeEvent& e = dimm[tick.index];
      if (e.log_time < periods.test_start || e.log_time >= periods.test_end) continue;
      for (std::size_t p = 0; p < predictors.size(); ++p) {
        if (predictors[p]->fires(e)) out.point[p].append({e.dimm_uid, e.log_time, e.log_time, true});
      }
      continue;
    }
    const auto seen = dimm.first(visible[tick.dimm]);
    if (seen.empty()) continue;
    const auto x = featurizer.features(seen, tick.time);
    if (predict_score(model, fp, x) >= *model.threshold) {
      out.patch.append({seen.front().dimm_uid, tick.time, seen.back().log_time, true});
    }
  }
  return out;
}

inline void run_predict(Workspace& ws) {
  ws.begin("predict");
  const auto& c = ws.config();
  const auto data = load_ingested(ws);
  const auto periods = resolve_periods(c, data.span);
  std::istringstream model_in(ws.require("train-patch", "patch_model.json"));
  const auto model = load_model(model_in);
  std::istringstream rules_in(ws.require("train-point", "rules.txt"));
  auto rules = read_rule_base(rules_in);
  std::istringstream naive_in(ws.require("train-point", "naive_table.csv"));
  auto naive = read_naive_table(naive_in);
  if (rules.schema != time_point_schema()) {
    fail(ErrorKind::Config, "rule base schema does not match the time-point featurizer; rerun `m2mfp train-point`");
  }

  TimePatchFeaturizer featurizer(c.geometry, c.windows, c.include_static_attrs);
  if (featurizer.schema().fingerprint() != model.schema.fingerprint()) {
    fail(ErrorKind::Config, "time-patch model schema does not match the featurizer; rerun `m2mfp featurize`");
  }
  std::vector<std::unique_ptr<TimePointPredictor>> predictors;
  predictors.push_back(std::make_unique<RuleBasePredictor>(std::move(rules)));
  predictors.push_back(std::make_unique<NaivePredictor>(std::move(naive)));
  predictors.push_back(std::make_unique<RiskyCePredictor>());
  predictors.push_back(std::make_unique<DqBeatPredictor>());
  auto result = replay(data.events, periods, model, featurizer, predictors);
  const auto combined = combine(result.patch, result.point[0]);

  const std::string stamp = ws.stamp("predict");
  auto put_log = [&](const PredictionLog& log) {
    ws.put("predictions_" + log.source() + ".csv", to_text([&](std::ostream& o) { write_prediction_log(o, log, stamp); }));
    ws.extra()["n_alarms_" + log.source()] = log.size();
  };
  put_log(result.patch);
  put_log(result.point[0]);
  put_log(combined);
  for (std::size_t i = 1; i < result.point.size(); ++i) put_log(result.point[i]);
  ws.extra()["split_time"] = periods.split;
  ws.extra()["test_start"] = periods.test_start;
  ws.extra()["test_end"] = periods.test_end;
  ws.commit();
}

inline constexpr std::array<std::string_view, 6> kReportedSources = {"time_patch", "time_point", "combined",
                                                                     "naive",      "risky_ce",   "dq_beat"};

inline std::vector<PredictionLog> load_prediction_logs(Workspace& ws) {
  std::vector<PredictionLog> logs;
  for (auto source : kReportedSources) {
    std::istringstream in(ws.require("predict", "predictions_" + std::string(source) + ".csv"));
    logs.push_back(read_prediction_log(in, std::string(source)));
  }
  return logs;
}

inline EvalConfig eval_config(const PipelineConfig& c, const DataSpan& span) {
  const auto periods = resolve_periods(c, span);
  EvalConfig e;
  e.lead = c.eval.lead;
  e.valid = c.eval.valid;
  e.test_start = periods.test_start;
  e.test_end = periods.test_end;
  return e;
}

inline void run_evaluate(Workspace& ws) {
  ws.begin("evaluate");
  const auto logs = load_prediction_logs(ws);
  const auto data = load_ingested(ws);
  const auto cfg = eval_config(ws.config(), data.span);
  std::ostringstream out;
  out << "# m2mfp " << kVersion << " metrics " << ws.stamp("evaluate") << '\n';
  out << metrics_csv_header() << '\n';
  for (const auto& log : logs) {
    const auto r = evaluate(log, data.failures, cfg);
    out << metrics_csv_row(log.source(), cfg.lead, r) << '\n';
    ws.extra()["f1_" + log.source()] = r.f1;
  }
  ws.put("metrics.csv", out.str());
  ws.commit();
}

inline void run_sweep_lead(Workspace& ws) {
  ws.begin("sweep-lead");
  const auto logs = load_prediction_logs(ws);
  const auto data = load_ingested(ws);
  const auto cfg = eval_config(ws.config(), data.span);
  const auto rows = lead_time_sweep(logs, data.failures, ws.config().eval.sweep_leads, cfg);
  std::ostringstream out;
  out << "# m2mfp " << kVersion << " lead-time sweep " << ws.stamp("sweep-lead") << '\n';
  out << metrics_csv_header() << '\n';
  for (const auto& r : rows) out << metrics_csv_row(r.source, r.lead, r.result) << '\n';
  ws.put("lead_sweep.csv", out.str());
  ws.commit();
}

namespace detail {

inline std::vector<std::vector<std::string>> read_table(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

inline std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline void run_report(Workspace& ws) {
  ws.begin("report");
  const auto metrics = detail::read_table(ws.require("evaluate", "metrics.csv"));
  const auto sweep = detail::read_table(ws.require("sweep-lead", "lead_sweep.csv"));
  const auto importance = detail::read_table(ws.require("train-patch", "feature_importance.csv"));
  const std::string rules = ws.require("train-point", "rules.txt");

  std::ostringstream out;
  out << "m2mfp " << kVersion << " report\n";
  out << ws.stamp("report") << "\n\n";

  out << "Method comparison (lead " << ws.config().eval.lead << " s, validity " << ws.config().eval.valid << " s)\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %8s %8s %10s\n", "method", "precision", "recall", "f1",
                "|S_pred|", "|S_true|", "|failures|");
  out << line;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    const auto& r = metrics[i];
    if (r.size() < 9) continue;
    std::snprintf(line, sizeof line, "%-12s %9s %9s %9s %8s %8s %10s\n", r[0].c_str(),
                  detail::fixed(parse_double(r[2]).value_or(0)).c_str(),
                  detail::fixed(parse_double(r[3]).value_or(0)).c_str(),
                  detail::fixed(parse_double(r[4]).value_or(0)).c_str(), r[5].c_str(), r[6].c_str(), r[7].c_str());
    out << line;
  }

  out << "\nLead-time sweep (recall / f1)\n";
  std::map<std::string, std::vector<std::string>> by_source;
  std::vector<std::string> sources;
  std::vector<std::string> leads;
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    const auto& r = sweep[i];
    if (r.size() < 9) continue;
    if (!by_source.count(r[0])) sources.push_back(r[0]);
    if (sources.size() == 1) leads.push_back(duration_label(parse_int(r[1]).value_or(0)));
    by_source[r[0]].push_back(detail::fixed(parse_double(r[3]).value_or(0), 3) + "/" +
                              detail::fixed(parse_double(r[4]).value_or(0), 3));
  }
  std::snprintf(line, sizeof line, "%-12s", "method");
  out << line;
  for (const auto& l : leads) {
    std::snprintf(line, sizeof line, " %12s", l.c_str());
    out << line;
  }
  out << '\n';
  for (const auto& s : sources) {
    std::snprintf(line, sizeof line, "%-12s", s.c_str());
    out << line;
    for (const auto& cell : by_source[s]) {
      std::snprintf(line, sizeof line, " %12s", cell.c_str());
      out << line;
    }
    out << '\n';
  }

  out << "\nTime-patch feature importance (top 20 by total split gain)\n";
  double total = 0.0;
  for (std::size_t i = 1; i < importance.size(); ++i) total += parse_double(importance[i][1]).value_or(0);
  for (std::size_t i = 1; i < importance.size() && i <= 20; ++i) {
    const double g = parse_double(importance[i][1]).value_or(0);
    std::snprintf(line, sizeof line, "%3zu. %-48s %6.2f%%\n", i, importance[i][0].c_str(),
                  total > 0 ? 100.0 * g / total : 0.0);
    out << line;
  }

  out << "\nTime-point rule base\n";
  std::istringstream rule_lines(rules);
  std::string l;
  std::size_t n_rules = 0;
  while (std::getline(rule_lines, l)) {
    if (l.rfind("rule ", 0) == 0) {
      out << "  " << l << '\n';
      ++n_rules;
    }
  }
  if (n_rules == 0) out << "  (empty)\n";
  ws.put("report.txt", out.str());
  ws.commit();
}

inline void run_stage(Workspace& ws, std::string_view stage) {
  if (stage == "gen-synth") return run_gen_synth(ws);
  if (stage == "ingest") return run_ingest(ws);
  if (stage == "featurize") return run_featurize(ws);
  if (stage == "train-patch") return run_train_patch(ws);
  if (stage == "train-point") return run_train_point(ws);
  if (stage == "predict") return run_predict(ws);
  if (stage == "evaluate") return run_evaluate(ws);
  if (stage == "sweep-lead") return run_sweep_lead(ws);
  if (stage == "report") return run_report(ws);
  fail(ErrorKind::Config, "unknown stage '" + std::string(stage) + "'");
}

/// Every stage in order; gen-synth is skipped when a CE log path is configured.
inline void run_all(Workspace& ws) {
  for (const auto& s : stage_table()) {
    if (s.name == "gen-synth" && !ws.config().ce_log.empty()) continue;
    run_stage(ws, s.name);
  }
}

}  // namespace m2mfp
