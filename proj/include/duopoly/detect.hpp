#pragma once

#include <array>
#include <optional>
#include <span>
#include <utility>

#include "duopoly/market.hpp"

namespace duopoly {

/// Absolute slack applied to every price comparison so that decimal prices
/// such as 2.1 - 2.0 are not misclassified by binary rounding.
inline constexpr double kPriceSlack = 1e-9;

struct ConvergenceParams {
  double epsilon = 0.1;
  double theta = 0.01;
  int window = 400;
};

struct OscillationParams {
  double bound = 2.0;
  int window = 800;
};

struct CollusionParams {
  int window = 100;
  double max_mean_change = 0.5;
};

/// Per-firm detector settings plus the hard round cap.
struct DetectorParams {
  std::array<ConvergenceParams, 2> convergence{};
  std::array<OscillationParams, 2> oscillation{};
  int hard_cap = 2000;
};

/// epsilon = 0.05 * (upper - bertrand), bound = upper - bertrand, where
/// upper is upper_reference_price(). When the two references coincide
/// (d = 0) both fall back to one price tick, 0.01.
DetectorParams default_detector_params(const DerivedMarket& market);

void validate(const ConvergenceParams& params);
void validate(const OscillationParams& params);

enum class VerdictKind { Converged, BoundedOscillation, NotStationary };

struct StationarityVerdict {
  VerdictKind kind = VerdictKind::NotStationary;
  double center = 0.0;  // Converged
  double lo = 0.0;      // BoundedOscillation
  double hi = 0.0;
  int evaluated_at = 0;
};

struct CollusionFormation {
  std::optional<int> formed_at;  // 1-based round closing the first qualifying window
};

/// Trailing-window convergence test. The center is the window median; the
/// window passes when at most floor(theta * window) prices sit farther than
/// epsilon from it. Throws Error(InsufficientHistory) on short series.
std::optional<double> check_convergence(std::span<const double> series,
                                        const ConvergenceParams& params);

/// Trailing-window (min, max) when max - min <= bound.
std::optional<std::pair<double, double>> check_bounded_oscillation(
    std::span<const double> series, const OscillationParams& params);

/// First round r >= window at which, for both firms over rounds r-window+1..r,
/// the mean absolute successive change is below max_mean_change and every
/// price lies in [bertrand_i, cartel_i]. Throws Error(UndefinedRange) when
/// the cartel prices are absent.
CollusionFormation detect_collusion_formation(std::span<const double> series1,
                                              std::span<const double> series2,
                                              const ReferencePrices& refs,
                                              const CollusionParams& params = {});

enum class StopDecision { Continue, Stop, HardStop };

struct StoppingOutcome {
  StopDecision decision = StopDecision::Continue;
  std::array<StationarityVerdict, 2> verdicts{};
};

/// Stop when both firms converge, or both oscillate within bounds; HardStop
/// once `round` reaches the hard cap; Continue otherwise.
StoppingOutcome stopping_check(std::span<const double> series1, std::span<const double> series2,
                               const DetectorParams& params, int round);

/// Best available verdict for one firm at the end of a series: Converged if
/// the convergence window passes, else BoundedOscillation, else NotStationary.
StationarityVerdict evaluate_stationarity(std::span<const double> series,
                                          const ConvergenceParams& convergence,
                                          const OscillationParams& oscillation);

}  // namespace duopoly
