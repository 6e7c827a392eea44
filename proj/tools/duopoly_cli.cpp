// Command-line front end: run, resume, verify, export, presets.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "duopoly/config.hpp"
#include "duopoly/engine.hpp"
#include "duopoly/errors.hpp"
#include "duopoly/runlog.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace duopoly;

namespace {

fs::path preset_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DUOPOLY_PRESET_DIR"); env != nullptr && *env != '\0') return env;
  return DUOPOLY_PRESET_DIR;
}

int report_error(ErrorCode code, std::optional<ErrorCode> cause, const std::string& message) {
  json j{{"error", std::string(to_string(code))}, {"message", message}};
  j["cause"] = cause ? json(std::string(to_string(*cause))) : json(nullptr);
  std::cerr << j.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repeated Bertrand duopoly simulator"};
  app.require_subcommand(1);

  std::string config_path, preset, out_dir = "runs", io, cassette, resume_path, dir_flag, export_out;
  int row = 1;
  std::optional<int> rounds;
  std::optional<std::uint64_t> seed;
  int checkpoint_every = 0;

  auto* run_cmd = app.add_subcommand("run", "Run an experiment from a config file or preset");
  auto* cfg_opt = run_cmd->add_option("--config", config_path, "Run configuration (JSON)");
  auto* preset_opt = run_cmd->add_option("--preset", preset, "Bundled preset name");
  cfg_opt->excludes(preset_opt);
  run_cmd->add_option("--row", row, "Preset row (1-based)")->needs(preset_opt);
  run_cmd->add_option("--out-dir", out_dir, "Parent directory for the run directory");
  run_cmd->add_option("--rounds", rounds, "Override the round count");
  run_cmd->add_option("--seed", seed, "Override the master seed");
  run_cmd->add_option("--io", io, "live | record | replay");
  run_cmd->add_option("--cassette", cassette, "Cassette file for record/replay");
  run_cmd->add_option("--checkpoint-every", checkpoint_every, "Checkpoint every n rounds");
  run_cmd->add_option("--preset-dir", dir_flag, "Preset directory");

  auto* resume_cmd = app.add_subcommand("resume", "Continue a checkpointed run");
  resume_cmd->add_option("--resume", resume_path, "Checkpoint file")->required();
  resume_cmd->add_option("--config", config_path, "Config with updated schedules");
  resume_cmd->add_option("--rounds", rounds, "New total round count");
  resume_cmd->add_option("--io", io, "live | record | replay");
  resume_cmd->add_option("--cassette", cassette, "Cassette file for record/replay");
  resume_cmd->add_option("--checkpoint-every", checkpoint_every, "Checkpoint every n rounds");

  std::string verify_path;
  auto* verify_cmd = app.add_subcommand("verify", "Re-check a run directory or log");
  verify_cmd->add_option("path", verify_path, "Run directory or round log")->required();

  std::string export_path;
  auto* export_cmd = app.add_subcommand("export", "Write plot-ready CSV and summary JSON");
  export_cmd->add_option("path", export_path, "Run directory or round log")->required();
  export_cmd->add_option("--out", export_out, "Output directory (default: the run directory)");

  auto* presets_cmd = app.add_subcommand("presets", "List bundled presets");
  presets_cmd->add_option("--preset-dir", dir_flag, "Preset directory");

  CLI11_PARSE(app, argc, argv);

  try {
    EngineOptions opts;
    opts.out_dir = out_dir;
    opts.checkpoint_every = checkpoint_every;

    if (*run_cmd) {
      RunConfig cfg;
      if (!config_path.empty()) cfg = load_config(config_path);
      else if (!preset.empty()) cfg = load_preset(preset_dir(dir_flag), preset, row);
      else throw Error(ErrorCode::ConfigError, "run needs --config or --preset");
      if (rounds) cfg.max_rounds = *rounds;
      if (seed) cfg.seed = *seed;
      if (!io.empty()) cfg.io.mode = parse_io_mode(io);
      if (!cassette.empty()) cfg.io.cassette = cassette;
      const auto res = run(cfg, opts);
      std::cout << result_to_json(res).dump(2) << "\n";
      return 0;
    }
    if (*resume_cmd) {
      ResumeOverrides ov;
      if (!config_path.empty()) ov.config = load_config(config_path);
      ov.rounds = rounds;
      if (!io.empty()) ov.io_mode = parse_io_mode(io);
      if (!cassette.empty()) ov.cassette = cassette;
      const auto res = resume(resume_path, ov, opts);
      std::cout << result_to_json(res).dump(2) << "\n";
      return 0;
    }
    if (*verify_cmd) {
      const auto report = verify_run(verify_path);
      std::cout << report.to_json().dump(2) << "\n";
      return report.ok() ? 0 : 1;
    }
    if (*export_cmd) {
      const fs::path out = export_out.empty() ? resolve_run_dir(export_path) : fs::path(export_out);
      const auto files = export_series(export_path, out);
      std::cout << json{{"csv", files.csv.string()}, {"summary", files.summary.string()}}.dump(2) << "\n";
      return 0;
    }
    if (*presets_cmd) {
      const auto dir = preset_dir(dir_flag);
      for (const auto& name : list_presets(dir)) {
        const auto group = load_preset_group(dir, name);
        std::cout << name << "\t" << group.rows.size() << " row(s)\t" << group.title << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    return report_error(e.code(), e.cause(), e.what());
  } catch (const std::exception& e) {
    return report_error(ErrorCode::IoError, std::nullopt, e.what());
  }
  return 0;
}
