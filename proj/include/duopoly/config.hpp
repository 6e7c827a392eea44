#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "duopoly/detect.hpp"
#include "duopoly/llm_client.hpp"
#include "duopoly/llm_prompts.hpp"
#include "duopoly/market.hpp"
#include "duopoly/memory.hpp"
#include "duopoly/policy.hpp"
#include "duopoly/schedule.hpp"

namespace duopoly {

/// Unset epsilon / bound fall back to default_detector_params().
struct DetectorSettings {
  std::optional<double> epsilon;
  double theta = 0.01;
  int convergence_window = 400;
  std::optional<double> oscillation_bound;
  int oscillation_window = 800;

  friend bool operator==(const DetectorSettings&, const DetectorSettings&) = default;
};

/// Online: stop as soon as both firms are stationary. ExPost: always run to
/// `max_rounds` and classify at the end.
enum class StoppingMode { Online, ExPost };

struct ModelSettings {
  std::string model_id = "gpt-4-0314";
  double temperature = 0.7;
  int max_tokens = 128;
  int parse_retries = 3;
  int word_budget = 6000;
  std::string endpoint = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";

  friend bool operator==(const ModelSettings&, const ModelSettings&) = default;
};

struct IoSettings {
  IoMode mode = IoMode::Live;
  std::string cassette;

  friend bool operator==(const IoSettings&, const IoSettings&) = default;
};

struct RunConfig {
  std::string run_id = "run";
  MarketParams market;
  std::array<PolicySpec, 2> policies{PolicySpec{LlmSpec{}, std::nullopt}, PolicySpec{LlmSpec{}, std::nullopt}};
  PricePair initial_prices{2.0, 2.0};
  PhaseSchedule planning{true};
  PhaseSchedule conversation{false};
  std::array<Persona, 2> persona{Persona::Active, Persona::Active};
  std::array<std::string, 2> firm_names{"Ed", "Gill"};
  int max_rounds = 2000;
  MemoryConfig memory;
  DetectorSettings detectors;
  StoppingMode stopping = StoppingMode::Online;
  std::uint64_t seed = 0;
  IoSettings io;
  ModelSettings model;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline constexpr int kMaxRounds = 2000;

/// Throws Error(ConfigError) with the offending field name.
void validate(const RunConfig& cfg);

/// Detector parameters for this run, defaults filled in from the market.
DetectorParams detector_params(const RunConfig& cfg);

/// LLM settings for one firm.
LlmAgentConfig llm_agent_config(const RunConfig& cfg, int firm);

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

/// A relative cassette path is taken relative to the config file.
RunConfig load_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Digest of every setting a resumed run must keep unchanged (everything but
/// the phase schedules, round count and I/O mode/cassette).
std::string config_identity_digest(const RunConfig& cfg);

/// Names of settings outside the resume whitelist that differ.
std::vector<std::string> non_resumable_differences(const RunConfig& before, const RunConfig& after);

/// Accepts a number or an "n/m" fraction string.
double parse_number(const nlohmann::json& value, const std::string& field);

PolicySpec policy_from_json(const nlohmann::json& j, const std::string& field);
nlohmann::json policy_to_json(const PolicySpec& spec);

/// Bundled experiment presets, one file per experiment group with one entry
/// per table row.
struct PresetGroup {
  std::string name;
  std::string title;
  std::vector<RunConfig> rows;
};

PresetGroup load_preset_group(const std::filesystem::path& preset_dir, const std::string& name);
/// `row` is 1-based.
RunConfig load_preset(const std::filesystem::path& preset_dir, const std::string& name, int row = 1);
std::vector<std::string> list_presets(const std::filesystem::path& preset_dir);

}  // namespace duopoly
