#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "duopoly/detect.hpp"

namespace duopoly {

struct LoggedMessage {
  int order = 0;     // position in the round's transcript, from 1
  int exchange = 1;  // 1-based pair number
  std::string text;

  friend bool operator==(const LoggedMessage&, const LoggedMessage&) = default;
};

/// One firm in one round.
struct RunLogLine {
  std::string run_id;
  int round = 0;
  int firm = 1;  // 1 or 2
  double price = 0.0;
  double demand = 0.0;
  double profit = 0.0;
  double rival_price = 0.0;
  bool reflected = false;
  bool conversed = false;
  std::optional<std::string> strategy_digest;  // set when the strategy changed this round
  std::optional<std::string> strategy;
  std::vector<LoggedMessage> messages;  // sent by this firm

  friend bool operator==(const RunLogLine&, const RunLogLine&) = default;
};

inline constexpr const char* kRoundLogFile = "round_log.jsonl";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kConfigFile = "config.json";

/// Single line, no trailing newline. Key order is fixed.
std::string format_log_line(const RunLogLine& line);

/// Throws Error(MalformedLog).
RunLogLine parse_log_line(const std::string& text, std::size_t line_number = 0);

/// Throws Error(MalformedLog) or Error(IoError).
std::vector<RunLogLine> read_run_log(const std::filesystem::path& path);

nlohmann::json verdict_to_json(const StationarityVerdict& v);
StationarityVerdict verdict_from_json(const nlohmann::json& j);
std::string_view to_string(VerdictKind kind);

/// Accepts a run directory or a path to a log inside one.
std::filesystem::path resolve_run_dir(const std::filesystem::path& path);

struct Discrepancy {
  std::string check;
  int round = 0;  // 0 when not tied to a round
  int firm = 0;   // 1 or 2; 0 when not tied to a firm
  std::string message;
};

struct VerifyReport {
  std::vector<std::pair<std::string, bool>> checks;
  std::vector<Discrepancy> discrepancies;

  bool ok() const { return discrepancies.empty(); }
  nlohmann::json to_json() const;
};

/// Re-reads a finished run: log structure, rival prices, demand and profit
/// recomputed from logged prices (1e-9), stopping behaviour and detector
/// verdicts against summary.json.
VerifyReport verify_run(const std::filesystem::path& path);

struct ExportFiles {
  std::filesystem::path csv;
  std::filesystem::path summary;
};

/// Writes `series.csv` (round, price1, price2, pB, pM, pB2, pM2) and
/// `series_summary.json` into `out_dir`. pM columns are empty when the
/// cartel price is undefined.
ExportFiles export_series(const std::filesystem::path& run_path, const std::filesystem::path& out_dir);

}  // namespace duopoly
