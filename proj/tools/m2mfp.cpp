// m2mfp: memory failure prediction pipeline driver.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "m2mfp/m2mfp.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<m2mfp::Duration> lead;
  std::optional<m2mfp::Duration> valid;
  std::string split;
};

m2mfp::PipelineConfig effective_config(const Overrides& o) {
  auto cfg = o.config.empty() ? m2mfp::config_from_json(nlohmann::json::object()) : m2mfp::load_config(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.lead) cfg.eval.lead = *o.lead;
  if (o.valid) cfg.eval.valid = *o.valid;
  if (!o.split.empty()) {
    auto t = m2mfp::detail::parse_timestamp(o.split);
    if (!t) m2mfp::fail(m2mfp::ErrorKind::Config, "--split must be epoch seconds or \"YYYY-MM-DD HH:MM:SS\"");
    cfg.split_time = *t;
  }
  m2mfp::sync_derived(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory failure prediction from correctable-error logs"};
  app.set_version_flag("--version", std::string(m2mfp::kVersion));
  app.require_subcommand(1, 1);
  app.fallthrough();

  Overrides o;
  app.add_option("-c,--config", o.config, "JSON configuration file");
  app.add_option("-o,--out", o.out, "Output directory (overrides paths.out_dir)");
  app.add_option("--seed", o.seed, "Random seed (overrides seed)");
  app.add_option("--lead", o.lead, "Evaluation lead time in seconds (overrides eval.lead_s)");
  app.add_option("--valid", o.valid, "Evaluation validity window in seconds (overrides eval.valid_s)");
  app.add_option("--split", o.split, "Train/test split time (overrides split_time)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-synth", "Generate a synthetic CE corpus with planted faults"},
      {"ingest", "Parse and validate the CE log and failure file"},
      {"featurize", "Build time-patch training samples"},
      {"train-patch", "Train the time-patch classifier and select its threshold"},
      {"train-point", "Build the DIMM-centric tree, rule base and naive table"},
      {"predict", "Replay the test period and write prediction logs"},
      {"evaluate", "Score prediction logs against failures"},
      {"sweep-lead", "Evaluate every prediction log across lead times"},
      {"report", "Summarise metrics, feature importance and rules"},
      {"all", "Run every stage in order"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(m2mfp::ErrorKind::Config);
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    m2mfp::Workspace ws(effective_config(o));
    if (stage == "all") {
      m2mfp::run_all(ws);
    } else {
      m2mfp::run_stage(ws, stage);
    }
  } catch (const m2mfp::Error& e) {
    std::cerr << "m2mfp: stage=" << stage << " status=error code=" << e.exit_code() << '\n';
    std::cerr << "m2mfp: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "m2mfp: stage=" << stage << " status=error code=1\n";
    std::cerr << "m2mfp: internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
