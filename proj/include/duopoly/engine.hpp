#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "duopoly/config.hpp"
#include "duopoly/detect.hpp"
#include "duopoly/llm_client.hpp"
#include "duopoly/observation.hpp"
#include "duopoly/policy.hpp"

namespace duopoly {

struct EngineOptions {
  /// Parent directory; the run writes into out_dir / run_id.
  std::filesystem::path out_dir = ".";
  /// Call firm 2's decide_price before firm 1's.
  bool reverse_decision_order = false;
  /// Overrides the HTTP transport used in Live and Record modes.
  std::shared_ptr<Transport> transport;
  /// Also checkpoint every n rounds (0: only when the run ends or fails).
  int checkpoint_every = 0;
};

enum class StopReason { Stationary, MaxRounds };

std::string_view to_string(StopReason reason);

struct RunResult {
  std::string run_id;
  int rounds_executed = 0;
  StopReason stop_reason = StopReason::MaxRounds;
  std::array<StationarityVerdict, 2> verdicts{};
  CollusionFormation collusion;
  bool collusion_defined = true;  // false for perfect substitutes
  std::filesystem::path run_dir;
  std::filesystem::path log_path;
  std::filesystem::path checkpoint_path;
};

nlohmann::json result_to_json(const RunResult& result);

/// Settings a resumed run may change. Anything in `config` outside the
/// schedules, round count and I/O settings must match the checkpoint.
struct ResumeOverrides {
  std::optional<RunConfig> config;
  std::optional<int> rounds;
  std::optional<IoMode> io_mode;
  std::optional<std::string> cassette;
};

/// Executes rounds 1..n. Throws Error(ConfigError) for an invalid config,
/// Error(RunDirLocked) if another run holds the directory, and rethrows a
/// policy's Error after checkpointing the last completed round.
RunResult run(const RunConfig& config, const EngineOptions& options = {});

/// Continues a checkpointed run in the checkpoint's directory. Throws
/// ChecksumMismatch, VersionMismatch or ConfigError.
RunResult resume(const std::filesystem::path& checkpoint, const ResumeOverrides& overrides = {},
                 const EngineOptions& options = {});

/// Round-r conversation between two policies. The initiator is firm 1 on odd
/// rounds and firm 2 on even rounds; speakers alternate for at most
/// `max_pairs` exchanges and the phase ends as soon as a speaker declines.
/// `base` holds each firm's pre-round observation.
Transcript conversation_phase(std::array<Policy*, 2> agents, const std::array<Observation, 2>& base,
                              int round, int max_pairs = 3);

}  // namespace duopoly
