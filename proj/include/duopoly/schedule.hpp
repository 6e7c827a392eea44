#pragma once

#include <vector>

namespace duopoly {

struct ScheduleSegment {
  int from_round = 1;
  int to_round = 0;  // 0: open-ended, runs to the last round
  bool enabled = false;

  friend bool operator==(const ScheduleSegment&, const ScheduleSegment&) = default;
};

/// On/off switch for a phase (planning, conversation) over the rounds of a
/// run, as contiguous segments starting at round 1.
class PhaseSchedule {
 public:
  PhaseSchedule() : PhaseSchedule(false) {}
  /// Single open-ended segment.
  explicit PhaseSchedule(bool enabled);
  explicit PhaseSchedule(std::vector<ScheduleSegment> segments);

  bool enabled_at(int round) const;

  /// Single open-ended segment, i.e. written in a config as a plain boolean.
  bool is_constant() const;

  const std::vector<ScheduleSegment>& segments() const { return segments_; }

  /// Segments must be contiguous from round 1, non-overlapping and cover
  /// [1, max_rounds] exactly (an open-ended last segment covers any length).
  /// Throws Error(ConfigError) naming `field`.
  void validate(int max_rounds, const char* field) const;

  friend bool operator==(const PhaseSchedule&, const PhaseSchedule&) = default;

 private:
  std::vector<ScheduleSegment> segments_;
};

}  // namespace duopoly
