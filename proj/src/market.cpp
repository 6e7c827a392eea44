#include "duopoly/market.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "duopoly/errors.hpp"

namespace duopoly {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidParams, what);
}

}  // namespace

double quantize_price(double price) { return std::round(price * 100.0) / 100.0; }

DerivedMarket derive_market(const MarketParams& params) {
  const auto& p = params;
  require(std::isfinite(p.a) && std::isfinite(p.beta) && std::isfinite(p.d) &&
              std::isfinite(p.c1) && std::isfinite(p.c2),
          "market parameters must be finite");
  require(p.beta > 0.0, "beta must be positive");
  require(p.d >= 0.0 && p.d <= p.beta, "d must lie in [0, beta]");
  require(p.c1 >= 0.0 && p.c2 >= 0.0, "costs must be non-negative");
  require(p.a > std::max(p.c1, p.c2), "a must exceed both marginal costs");

  DerivedMarket m;
  m.params = params;
  m.b = p.beta * p.beta - p.d * p.d;
  m.alpha = p.a * p.beta - p.a * p.d;
  m.mode = p.d == p.beta ? MarketMode::Homogeneous : MarketMode::Differentiated;
  return m;
}

PricePair demand(const DerivedMarket& market, double p1, double p2) {
  const auto& p = market.params;
  if (market.mode == MarketMode::Homogeneous) {
    if (p1 == p2) {
      const double q = std::max(0.0, (p.a - p1) / (p.beta + p.d));
      return {q, q};
    }
    if (p1 < p2) return {std::max(0.0, (p.a - p1) / p.beta), 0.0};
    return {0.0, std::max(0.0, (p.a - p2) / p.beta)};
  }
  const double q1 = (market.alpha - p.beta * p1 + p.d * p2) / market.b;
  const double q2 = (market.alpha - p.beta * p2 + p.d * p1) / market.b;
  return {std::max(0.0, q1), std::max(0.0, q2)};
}

MarketOutcome profit(const DerivedMarket& market, double p1, double p2) {
  MarketOutcome out;
  out.quantity = demand(market, p1, p2);
  out.profit[0] = (p1 - market.params.c1) * out.quantity[0];
  out.profit[1] = (p2 - market.params.c2) * out.quantity[1];
  return out;
}

PricePair bertrand_prices(const DerivedMarket& market) {
  const auto& p = market.params;
  if (market.mode == MarketMode::Homogeneous) {
    if (p.c1 != p.c2) {
      throw Error(ErrorCode::UndefinedEquilibrium,
                  "perfect substitutes with unequal costs have no closed-form equilibrium");
    }
    return {p.c1, p.c2};
  }
  const double beta = p.beta;
  const double d = p.d;
  const double alpha = market.alpha;
  const double denominator = 4.0 * beta * beta - d * d;
  const double n1 = d * alpha + beta * d * p.c2 + 2.0 * beta * alpha + 2.0 * beta * beta * p.c1;
  const double n2 = d * alpha + beta * d * p.c1 + 2.0 * beta * alpha + 2.0 * beta * beta * p.c2;
  return {n1 / denominator, n2 / denominator};
}

PricePair cartel_prices(const DerivedMarket& market) {
  const auto& p = market.params;
  if (market.mode == MarketMode::Homogeneous) {
    throw Error(ErrorCode::UndefinedCartel, "cartel prices require d != beta");
  }
  const double base = market.alpha / (2.0 * (p.beta - p.d));
  return {base + p.c1 / 2.0, base + p.c2 / 2.0};
}

double best_response(const DerivedMarket& market, std::size_t firm, double rival_price) {
  if (market.mode == MarketMode::Homogeneous) {
    throw Error(ErrorCode::UnsupportedMode,
                "best response is discontinuous for perfect substitutes");
  }
  const auto& p = market.params;
  const double numerator = market.alpha + p.d * rival_price + p.beta * p.cost(firm);
  return numerator / (2.0 * p.beta);
}

ReferencePrices reference_prices(const DerivedMarket& market) {
  ReferencePrices refs;
  refs.bertrand = bertrand_prices(market);
  if (market.mode == MarketMode::Differentiated) refs.cartel = cartel_prices(market);
  return refs;
}

double upper_reference_price(const DerivedMarket& market, std::size_t firm) {
  if (market.mode == MarketMode::Differentiated) return cartel_prices(market)[firm];
  return (market.params.a + market.params.cost(firm)) / 2.0;
}

}  // namespace duopoly
