#include "duopoly/memory.hpp"

#include <algorithm>

#include "duopoly/errors.hpp"

namespace duopoly {

void validate(const MemoryConfig& cfg) {
  if (cfg.window_k <= 0 || cfg.bin_size <= 0 || cfg.max_bins <= 0 || cfg.reflection_period <= 0) {
    throw Error(ErrorCode::InvalidParams, "memory settings must be strictly positive");
  }
}

void StrategyLog::add(int round, std::string text) {
  if (text.empty()) throw Error(ErrorCode::EmptyStrategy, "strategy text is empty");
  entries_.push_back(StrategyEntry{round, std::move(text)});
  while (entries_.size() > kCapacity) entries_.pop_front();
}

std::vector<RoundRecord> window_view(std::span<const RoundRecord> history, const MemoryConfig& cfg) {
  const auto k = static_cast<std::size_t>(std::max(cfg.window_k, 0));
  const auto n = std::min(k, history.size());
  return {history.end() - static_cast<std::ptrdiff_t>(n), history.end()};
}

std::vector<HistogramBin> summarize_history(std::span<const RoundRecord> history,
                                            const MemoryConfig& cfg) {
  validate(cfg);
  const auto size = static_cast<std::size_t>(cfg.bin_size);
  const std::size_t total_bins = (history.size() + size - 1) / size;
  const std::size_t keep = std::min(total_bins, static_cast<std::size_t>(cfg.max_bins));

  std::vector<HistogramBin> bins;
  bins.reserve(keep);
  for (std::size_t index = total_bins - keep; index < total_bins; ++index) {
    const std::size_t begin = index * size;
    const std::size_t end = std::min(begin + size, history.size());
    HistogramBin bin;
    bin.bin_index = index;
    bin.first_round = history[begin].round;
    bin.last_round = history[end - 1].round;
    bin.rounds_covered = end - begin;
    bin.partial = bin.rounds_covered < size;
    for (std::size_t i = begin; i < end; ++i) {
      bin.avg_price += history[i].price;
      bin.avg_demand += history[i].demand;
      bin.avg_profit += history[i].profit;
      bin.avg_rival_price += history[i].rival_price;
    }
    const double n = static_cast<double>(bin.rounds_covered);
    bin.avg_price /= n;
    bin.avg_demand /= n;
    bin.avg_profit /= n;
    bin.avg_rival_price /= n;
    bins.push_back(bin);
  }
  return bins;
}

bool reflection_due(int round, const MemoryConfig& cfg) {
  return round >= 1 && round % cfg.reflection_period == 0;
}

StrategyLog record_strategy(StrategyLog log, int round, std::string text) {
  log.add(round, std::move(text));
  return log;
}

}  // namespace duopoly
