#include "duopoly/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "duopoly/errors.hpp"

namespace duopoly {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void state_version_check(const json& state) {
  const int version = state.value("version", 0);
  if (version != Policy::kStateVersion) {
    throw Error(ErrorCode::VersionMismatch, "policy state version " + std::to_string(version) +
                                                ", expected " + std::to_string(Policy::kStateVersion));
  }
}

std::vector<double> default_grid(const DerivedMarket& market, int firm, int points) {
  const double lo = bertrand_prices(market)[static_cast<std::size_t>(firm)] - 0.5;
  const double hi = upper_reference_price(market, static_cast<std::size_t>(firm)) + 0.5;
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    grid[static_cast<std::size_t>(i)] = quantize_price(lo + (hi - lo) * i / (points - 1));
  }
  return grid;
}

}  // namespace

std::string_view kind_name(const PolicySpec& spec) {
  return std::visit(overloaded{
                        [](const ConstantSpec&) { return std::string_view("constant"); },
                        [](const MyopicBestResponseSpec&) { return std::string_view("myopic"); },
                        [](const GrimTriggerSpec&) { return std::string_view("grim_trigger"); },
                        [](const QLearningConfig&) { return std::string_view("qlearning"); },
                        [](const LlmSpec&) { return std::string_view("llm"); },
                        [](const EchoSpec&) { return std::string_view("echo"); },
                    },
                    spec.kind);
}

void validate(const PolicySpec& spec) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidParams, what); };
  std::visit(overloaded{
                 [&](const ConstantSpec& s) {
                   if (!(s.price >= 0.0)) fail("constant: price must be >= 0");
                 },
                 [](const MyopicBestResponseSpec&) {},
                 [&](const GrimTriggerSpec& s) {
                   if (s.punish_price > s.collusive_price) fail("grim_trigger: punish_price must not exceed collusive_price");
                   if (!(s.tolerance > 0.0)) fail("grim_trigger: tolerance must be positive");
                   if (s.punish_length < 1) fail("grim_trigger: punish_length must be >= 1");
                 },
                 [&](const QLearningConfig& c) {
                   if (c.grid.empty() && c.grid_points < 2) fail("qlearning: grid_points must be >= 2");
                   for (std::size_t i = 1; i < c.grid.size(); ++i) {
                     if (!(c.grid[i] > c.grid[i - 1])) fail("qlearning: grid must be strictly increasing");
                   }
                   if (!c.grid.empty() && c.grid.size() < 2) fail("qlearning: grid needs two points");
                   if (!(c.learning_rate > 0.0 && c.learning_rate <= 1.0)) fail("qlearning: learning_rate must be in (0, 1]");
                   if (!(c.discount >= 0.0 && c.discount < 1.0)) fail("qlearning: discount must be in [0, 1)");
                   if (!(c.exploration_decay >= 0.0)) fail("qlearning: exploration_decay must be >= 0");
                 },
                 [](const LlmSpec&) {},
                 [&](const EchoSpec& s) {
                   if (!(s.price >= 0.0)) fail("echo: price must be >= 0");
                 },
             },
             spec.kind);
}

std::optional<std::string> Policy::converse(const Observation&, const std::optional<std::string>&) {
  return std::nullopt;
}

std::optional<std::string> Policy::reflect(const Observation&) { return std::nullopt; }

json Policy::save_state() const { return json{{"version", kStateVersion}}; }

void Policy::load_state(const json& state) { state_version_check(state); }

MyopicBestResponsePolicy::MyopicBestResponsePolicy(DerivedMarket market, int firm)
    : market_(std::move(market)), firm_(firm) {
  if (market_.mode == MarketMode::Homogeneous) {
    throw Error(ErrorCode::UnsupportedMode, "myopic best response needs differentiated goods");
  }
}

double MyopicBestResponsePolicy::decide_price(const Observation& obs) {
  if (obs.window.empty()) throw Error(ErrorCode::PolicyFailure, "myopic: empty history window");
  return best_response(market_, static_cast<std::size_t>(firm_), obs.window.back().rival_price);
}

GrimTriggerPolicy::GrimTriggerPolicy(GrimTriggerSpec spec) : spec_(spec) {}

double GrimTriggerPolicy::decide_price(const Observation& obs) {
  for (const auto& r : obs.window) {
    if (r.round < 1 || r.round <= last_seen_round_) continue;
    last_seen_round_ = r.round;
    if (r.rival_price < spec_.collusive_price - spec_.tolerance) {
      punish_remaining_ = spec_.punish_length;
    }
  }
  if (punish_remaining_ > 0) {
    --punish_remaining_;
    return spec_.punish_price;
  }
  return spec_.collusive_price;
}

json GrimTriggerPolicy::save_state() const {
  return json{{"version", kStateVersion},
              {"punish_remaining", punish_remaining_},
              {"last_seen_round", last_seen_round_}};
}

void GrimTriggerPolicy::load_state(const json& state) {
  state_version_check(state);
  punish_remaining_ = state.at("punish_remaining").get<int>();
  last_seen_round_ = state.at("last_seen_round").get<int>();
}

QLearningPolicy::QLearningPolicy(QLearningConfig cfg, const DerivedMarket& market, int firm,
                                 std::uint64_t seed)
    : cfg_(std::move(cfg)), rng_(seed) {
  grid_ = cfg_.grid.empty() ? default_grid(market, firm, cfg_.grid_points) : cfg_.grid;
  const std::size_t n = grid_.size();
  q_.assign(n * n, 0.0);
  // Start from the discounted payoff against a rival pricing uniformly on the grid.
  for (std::size_t a = 0; a < n; ++a) {
    double mean = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const auto out = firm == 0 ? profit(market, grid_[a], grid_[b]) : profit(market, grid_[b], grid_[a]);
      mean += out.profit[static_cast<std::size_t>(firm)];
    }
    mean /= static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) q(s, a) = mean / (1.0 - cfg_.discount);
  }
}

double QLearningPolicy::uniform01() {
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

std::size_t QLearningPolicy::nearest(double price) const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid_.size(); ++i) {
    if (std::abs(grid_[i] - price) < std::abs(grid_[best] - price)) best = i;
  }
  return best;
}

std::size_t QLearningPolicy::greedy_action(std::size_t state) const {
  std::size_t best = 0;
  for (std::size_t a = 1; a < grid_.size(); ++a) {
    if (q(state, a) > q(state, best)) best = a;
  }
  return best;
}

double QLearningPolicy::decide_price(const Observation& obs) {
  if (obs.window.empty()) throw Error(ErrorCode::PolicyFailure, "qlearning: empty history window");
  const auto& last = obs.window.back();
  const std::size_t state = nearest(last.rival_price);
  if (last_state_ && last_action_ && last.round >= 1) {
    double best_next = q(state, 0);
    for (std::size_t a = 1; a < grid_.size(); ++a) best_next = std::max(best_next, q(state, a));
    double& entry = q(*last_state_, *last_action_);
    entry = (1.0 - cfg_.learning_rate) * entry +
            cfg_.learning_rate * (last.profit + cfg_.discount * best_next);
  }
  const double epsilon = std::exp(-cfg_.exploration_decay * obs.round);
  std::size_t action;
  if (uniform01() < epsilon) {
    action = static_cast<std::size_t>(rng_() % grid_.size());
  } else {
    action = greedy_action(state);
  }
  last_state_ = state;
  last_action_ = action;
  return grid_[action];
}

std::optional<std::string> QLearningPolicy::reflect(const Observation&) {
  std::string out = "Greedy price by rival's previous price:";
  char line[64];
  for (std::size_t s = 0; s < grid_.size(); ++s) {
    std::snprintf(line, sizeof line, "\n%.2f -> %.2f", grid_[s], grid_[greedy_action(s)]);
    out += line;
  }
  return out;
}

json QLearningPolicy::save_state() const {
  std::ostringstream rng;
  rng << rng_;
  json state{{"version", kStateVersion}, {"grid", grid_}, {"q", q_}, {"rng", rng.str()}};
  state["last_state"] = last_state_ ? json(*last_state_) : json(nullptr);
  state["last_action"] = last_action_ ? json(*last_action_) : json(nullptr);
  return state;
}

void QLearningPolicy::load_state(const json& state) {
  state_version_check(state);
  auto grid = state.at("grid").get<std::vector<double>>();
  auto q = state.at("q").get<std::vector<double>>();
  if (grid != grid_ || q.size() != grid_.size() * grid_.size()) {
    throw Error(ErrorCode::VersionMismatch, "qlearning state does not match the configured grid");
  }
  q_ = std::move(q);
  std::istringstream rng(state.at("rng").get<std::string>());
  rng >> rng_;
  last_state_.reset();
  last_action_.reset();
  if (!state.at("last_state").is_null()) last_state_ = state.at("last_state").get<std::size_t>();
  if (!state.at("last_action").is_null()) last_action_ = state.at("last_action").get<std::size_t>();
}

std::optional<std::string> EchoPolicy::converse(const Observation&,
                                                const std::optional<std::string>& inbound) {
  return inbound ? *inbound : spec_.seed_message;
}

std::optional<std::string> LlmPolicy::converse(const Observation& obs,
                                               const std::optional<std::string>&) {
  return agent_.converse(obs);
}

std::optional<std::string> LlmPolicy::reflect(const Observation& obs) {
  std::string text = agent_.reflect(obs);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
  return text;
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const PolicyContext& ctx) {
  validate(spec);
  try {
    return std::visit(
        overloaded{
            [](const ConstantSpec& s) -> std::unique_ptr<Policy> {
              return std::make_unique<ConstantPolicy>(s.price);
            },
            [&](const MyopicBestResponseSpec&) -> std::unique_ptr<Policy> {
              return std::make_unique<MyopicBestResponsePolicy>(ctx.market, ctx.firm);
            },
            [](const GrimTriggerSpec& s) -> std::unique_ptr<Policy> {
              return std::make_unique<GrimTriggerPolicy>(s);
            },
            [&](const QLearningConfig& c) -> std::unique_ptr<Policy> {
              return std::make_unique<QLearningPolicy>(c, ctx.market, ctx.firm, ctx.seed);
            },
            [&](const LlmSpec&) -> std::unique_ptr<Policy> {
              if (!ctx.client) throw Error(ErrorCode::ConfigError, "llm policy needs a chat client");
              return std::make_unique<LlmPolicy>(LlmAgent(ctx.llm, ctx.client, ctx.market.params.a));
            },
            [](const EchoSpec& s) -> std::unique_ptr<Policy> { return std::make_unique<EchoPolicy>(s); },
        },
        spec.kind);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, "policy" + std::to_string(ctx.firm + 1) + ": " + e.what(), e.code());
  }
}

}  // namespace duopoly
