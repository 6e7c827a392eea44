#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <vector>

namespace duopoly {

/// One round seen from one firm's side. Round 0 is the pseudo-record built
/// from the configured initial prices.
struct RoundRecord {
  int round = 0;
  double price = 0.0;
  double demand = 0.0;
  double profit = 0.0;
  double rival_price = 0.0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct HistogramBin {
  std::size_t bin_index = 0;  // position in the full partition, from the first round
  int first_round = 0;
  int last_round = 0;
  std::size_t rounds_covered = 0;
  bool partial = false;
  double avg_price = 0.0;
  double avg_demand = 0.0;
  double avg_profit = 0.0;
  double avg_rival_price = 0.0;
};

struct MemoryConfig {
  int window_k = 20;
  int bin_size = 20;
  int max_bins = 20;
  int reflection_period = 20;

  friend bool operator==(const MemoryConfig&, const MemoryConfig&) = default;
};

/// Throws Error(InvalidParams) unless every field is positive.
void validate(const MemoryConfig& cfg);

struct StrategyEntry {
  int round = 0;
  std::string text;

  friend bool operator==(const StrategyEntry&, const StrategyEntry&) = default;
};

/// Bounded log of revised strategies; the oldest entry is evicted first.
class StrategyLog {
 public:
  static constexpr std::size_t kCapacity = 20;

  StrategyLog() = default;

  /// Throws Error(EmptyStrategy) on empty text.
  void add(int round, std::string text);

  const std::deque<StrategyEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  friend bool operator==(const StrategyLog&, const StrategyLog&) = default;

 private:
  std::deque<StrategyEntry> entries_;
};

/// Last min(k, size) records, chronological.
std::vector<RoundRecord> window_view(std::span<const RoundRecord> history, const MemoryConfig& cfg);

/// Partitions history into bin_size-round bins from its first record and
/// returns the newest max_bins of them. The newest bin may be partial.
std::vector<HistogramBin> summarize_history(std::span<const RoundRecord> history,
                                            const MemoryConfig& cfg);

bool reflection_due(int round, const MemoryConfig& cfg);

StrategyLog record_strategy(StrategyLog log, int round, std::string text);

}  // namespace duopoly
