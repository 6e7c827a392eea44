#include "duopoly/detect.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "duopoly/errors.hpp"

namespace duopoly {

namespace {

std::span<const double> trailing(std::span<const double> series, int window) {
  if (window < 1 || series.size() < static_cast<std::size_t>(window)) {
    throw Error(ErrorCode::InsufficientHistory,
                "need " + std::to_string(window) + " rounds, have " + std::to_string(series.size()));
  }
  return series.last(static_cast<std::size_t>(window));
}

double median(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

}  // namespace

DetectorParams default_detector_params(const DerivedMarket& market) {
  const auto bertrand = bertrand_prices(market);
  DetectorParams params;
  for (std::size_t firm = 0; firm < 2; ++firm) {
    const double spread = upper_reference_price(market, firm) - bertrand[firm];
    params.convergence[firm] = ConvergenceParams{spread > kPriceSlack ? 0.05 * spread : kPriceTick, 0.01, 400};
    params.oscillation[firm] = OscillationParams{spread > kPriceSlack ? spread : kPriceTick, 800};
  }
  return params;
}

void validate(const ConvergenceParams& params) {
  if (!(params.epsilon > 0.0) || !(params.theta > 0.0 && params.theta < 1.0) || params.window < 1) {
    throw Error(ErrorCode::InvalidParams, "convergence needs epsilon > 0, theta in (0,1), window >= 1");
  }
}

void validate(const OscillationParams& params) {
  if (!(params.bound >= 0.0) || params.window < 1) {
    throw Error(ErrorCode::InvalidParams, "oscillation needs bound >= 0 and window >= 1");
  }
}

std::optional<double> check_convergence(std::span<const double> series,
                                        const ConvergenceParams& params) {
  validate(params);
  const auto window = trailing(series, params.window);
  const double center = median(window);
  const auto allowed = static_cast<std::size_t>(
      std::floor(params.theta * static_cast<double>(params.window) + 1e-9));
  const auto outliers = static_cast<std::size_t>(std::count_if(
      window.begin(), window.end(),
      [&](double p) { return std::abs(p - center) > params.epsilon + kPriceSlack; }));
  if (outliers > allowed) return std::nullopt;
  return center;
}

std::optional<std::pair<double, double>> check_bounded_oscillation(
    std::span<const double> series, const OscillationParams& params) {
  validate(params);
  const auto window = trailing(series, params.window);
  const auto [lo, hi] = std::minmax_element(window.begin(), window.end());
  if (*hi - *lo > params.bound + kPriceSlack) return std::nullopt;
  return std::make_pair(*lo, *hi);
}

CollusionFormation detect_collusion_formation(std::span<const double> series1,
                                              std::span<const double> series2,
                                              const ReferencePrices& refs,
                                              const CollusionParams& params) {
  if (series1.size() != series2.size()) {
    throw Error(ErrorCode::InvalidParams, "price series must have equal length");
  }
  if (!refs.cartel) {
    throw Error(ErrorCode::UndefinedRange, "collusion range needs cartel prices");
  }
  const std::array<std::span<const double>, 2> series{series1, series2};
  const auto n = series1.size();
  const auto w = static_cast<std::size_t>(params.window);
  if (w < 2 || n < w) return {};

  auto window_ok = [&](std::size_t firm, std::size_t last) {
    const auto& s = series[firm];
    const double lo = refs.bertrand[firm] - kPriceSlack;
    const double hi = (*refs.cartel)[firm] + kPriceSlack;
    double change = 0.0;
    for (std::size_t t = last + 1 - w; t <= last; ++t) {
      if (s[t] < lo || s[t] > hi) return false;
      if (t > last + 1 - w) change += std::abs(s[t] - s[t - 1]);
    }
    return change / static_cast<double>(w - 1) < params.max_mean_change;
  };
  for (std::size_t last = w - 1; last < n; ++last) {
    if (window_ok(0, last) && window_ok(1, last)) return {static_cast<int>(last + 1)};
  }
  return {};
}

StationarityVerdict evaluate_stationarity(std::span<const double> series,
                                          const ConvergenceParams& convergence,
                                          const OscillationParams& oscillation) {
  StationarityVerdict verdict;
  verdict.evaluated_at = static_cast<int>(series.size());
  if (series.size() >= static_cast<std::size_t>(convergence.window)) {
    if (auto center = check_convergence(series, convergence)) {
      verdict.kind = VerdictKind::Converged;
      verdict.center = *center;
      return verdict;
    }
  }
  if (series.size() >= static_cast<std::size_t>(oscillation.window)) {
    if (auto band = check_bounded_oscillation(series, oscillation)) {
      verdict.kind = VerdictKind::BoundedOscillation;
      verdict.lo = band->first;
      verdict.hi = band->second;
    }
  }
  return verdict;
}

StoppingOutcome stopping_check(std::span<const double> series1, std::span<const double> series2,
                               const DetectorParams& params, int round) {
  const std::array<std::span<const double>, 2> series{series1, series2};
  StoppingOutcome out;
  std::array<std::optional<double>, 2> centers;
  std::array<std::optional<std::pair<double, double>>, 2> bands;
  for (std::size_t f = 0; f < 2; ++f) {
    out.verdicts[f].evaluated_at = round;
    const auto& conv = params.convergence[f];
    const auto& osc = params.oscillation[f];
    if (series[f].size() >= static_cast<std::size_t>(conv.window)) {
      centers[f] = check_convergence(series[f], conv);
    }
    if (series[f].size() >= static_cast<std::size_t>(osc.window)) {
      bands[f] = check_bounded_oscillation(series[f], osc);
    }
  }
  if (centers[0] && centers[1]) {
    out.decision = StopDecision::Stop;
    for (std::size_t f = 0; f < 2; ++f) {
      out.verdicts[f].kind = VerdictKind::Converged;
      out.verdicts[f].center = *centers[f];
    }
    return out;
  }
  if (bands[0] && bands[1]) {
    out.decision = StopDecision::Stop;
    for (std::size_t f = 0; f < 2; ++f) {
      out.verdicts[f].kind = VerdictKind::BoundedOscillation;
      out.verdicts[f].lo = bands[f]->first;
      out.verdicts[f].hi = bands[f]->second;
    }
    return out;
  }
  if (round >= params.hard_cap) out.decision = StopDecision::HardStop;
  return out;
}

}  // namespace duopoly
