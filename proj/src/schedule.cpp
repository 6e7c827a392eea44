#include "duopoly/schedule.hpp"

#include <string>

#include "duopoly/errors.hpp"

namespace duopoly {

PhaseSchedule::PhaseSchedule(bool enabled) : segments_{ScheduleSegment{1, 0, enabled}} {}

PhaseSchedule::PhaseSchedule(std::vector<ScheduleSegment> segments) : segments_(std::move(segments)) {}

bool PhaseSchedule::enabled_at(int round) const {
  for (const auto& s : segments_) {
    if (round >= s.from_round && (s.to_round == 0 || round <= s.to_round)) return s.enabled;
  }
  return false;
}

bool PhaseSchedule::is_constant() const {
  return segments_.size() == 1 && segments_[0].from_round == 1 && segments_[0].to_round == 0;
}

void PhaseSchedule::validate(int max_rounds, const char* field) const {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ConfigError, std::string(field) + ": " + what);
  };
  if (segments_.empty()) fail("schedule has no segments");
  int next = 1;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (s.from_round != next) {
      fail("segment " + std::to_string(i + 1) + " starts at round " + std::to_string(s.from_round) +
           ", expected " + std::to_string(next));
    }
    if (s.to_round == 0) {
      if (i + 1 != segments_.size()) fail("only the last segment may be open-ended");
      return;
    }
    if (s.to_round < s.from_round) fail("segment " + std::to_string(i + 1) + " ends before it starts");
    next = s.to_round + 1;
  }
  if (next - 1 != max_rounds) {
    fail("segments cover rounds 1-" + std::to_string(next - 1) + " but the run has " +
         std::to_string(max_rounds) + " rounds");
  }
}

}  // namespace duopoly
