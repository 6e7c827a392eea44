#pragma once

#include <array>
#include <cstddef>
#include <optional>

namespace duopoly {

/// Prices are accepted on a continuous scale and recorded on this tick.
inline constexpr double kPriceTick = 0.01;

/// Rounds a price to the nearest tick (two decimals).
double quantize_price(double price);

/// Two prices or quantities indexed by firm (0 = firm 1, 1 = firm 2).
using PricePair = std::array<double, 2>;

/// Linear inverse demand p_i = a - beta*q_i - d*q_j with constant marginal
/// costs. d/beta in [0, 1] controls substitutability: 0 gives two independent
/// monopolies, 1 gives perfect substitutes.
struct MarketParams {
  double a = 14.0;
  double beta = 1.0 / 150.0;
  double d = 1.0 / 300.0;
  double c1 = 2.0;
  double c2 = 2.0;

  double cost(std::size_t firm) const { return firm == 0 ? c1 : c2; }

  friend bool operator==(const MarketParams&, const MarketParams&) = default;
};

enum class MarketMode { Differentiated, Homogeneous };

struct DerivedMarket {
  MarketParams params;
  double b = 0.0;      // beta^2 - d^2
  double alpha = 0.0;  // a*beta - a*d
  MarketMode mode = MarketMode::Differentiated;
};

struct ReferencePrices {
  PricePair bertrand{};
  std::optional<PricePair> cartel;  // absent for perfect substitutes
};

struct MarketOutcome {
  PricePair quantity{};
  PricePair profit{};
};

/// Throws Error(InvalidParams) when beta <= 0, d outside [0, beta], a cost is
/// negative, or a <= max(c1, c2).
DerivedMarket derive_market(const MarketParams& params);

/// Quantities demanded at (p1, p2), clamped at zero.
/// Perfect substitutes: the cheaper firm takes (a - p)/beta, ties split
/// (a - p)/(beta + d) each.
PricePair demand(const DerivedMarket& market, double p1, double p2);

/// Quantities plus profits (p_i - c_i) * q_i. Profits go negative below cost.
MarketOutcome profit(const DerivedMarket& market, double p1, double p2);

/// One-shot Nash equilibrium in prices. For perfect substitutes only the
/// equal-cost case is defined (both price at cost); otherwise throws
/// Error(UndefinedEquilibrium).
PricePair bertrand_prices(const DerivedMarket& market);

/// Joint-profit maximizing prices. Throws Error(UndefinedCartel) when d == beta.
PricePair cartel_prices(const DerivedMarket& market);

/// Unconstrained first-order-condition price for `firm` against a fixed rival
/// price. Throws Error(UnsupportedMode) for perfect substitutes.
double best_response(const DerivedMarket& market, std::size_t firm, double rival_price);

ReferencePrices reference_prices(const DerivedMarket& market);

/// Upper reference price used to scale tolerances: the cartel price when it
/// exists, otherwise the single-seller monopoly price (a + c_i) / 2, which is
/// the cartel price's limit as d approaches beta.
double upper_reference_price(const DerivedMarket& market, std::size_t firm);

}  // namespace duopoly
