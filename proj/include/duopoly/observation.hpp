#pragma once

#include <optional>
#include <string>
#include <vector>

#include "duopoly/memory.hpp"

namespace duopoly {

struct TranscriptMessage {
  int speaker = 0;   // firm index, 0 or 1
  int exchange = 1;  // 1-based pair number within the round
  std::string text;

  friend bool operator==(const TranscriptMessage&, const TranscriptMessage&) = default;
};

/// Messages exchanged in one round's conversation phase, in speaking order.
struct Transcript {
  int round = 0;
  std::vector<TranscriptMessage> messages;

  bool empty() const { return messages.empty(); }
  friend bool operator==(const Transcript&, const Transcript&) = default;
};

/// What an agent sees when asked to act. Built by the engine from pre-round
/// state only; the rival's current-round price is never included.
struct Observation {
  int round = 1;
  int firm = 0;
  double own_cost = 0.0;
  bool conversation_enabled = false;
  std::vector<RoundRecord> window;
  std::vector<HistogramBin> bins;                 // reflection only
  std::vector<StrategyEntry> prior_strategies;    // reflection only
  std::optional<std::string> current_strategy;
  std::optional<Transcript> transcript;
};

}  // namespace duopoly
