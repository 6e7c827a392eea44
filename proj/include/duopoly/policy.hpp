#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "duopoly/llm_agent.hpp"
#include "duopoly/market.hpp"
#include "duopoly/observation.hpp"

namespace duopoly {

struct ConstantSpec {
  double price = 7.0;
  friend bool operator==(const ConstantSpec&, const ConstantSpec&) = default;
};

struct MyopicBestResponseSpec {
  friend bool operator==(const MyopicBestResponseSpec&, const MyopicBestResponseSpec&) = default;
};

struct GrimTriggerSpec {
  double collusive_price = 8.0;
  double punish_price = 6.0;
  double tolerance = 0.2;
  int punish_length = 20;
  friend bool operator==(const GrimTriggerSpec&, const GrimTriggerSpec&) = default;
};

/// Tabular Q-learning over a price grid; the state is the rival's previous
/// price snapped to the grid. All defaults are configuration choices.
struct QLearningConfig {
  std::vector<double> grid;  // empty: grid_points evenly over [p_B - 0.5, p_M + 0.5]
  int grid_points = 15;
  double learning_rate = 0.15;
  double discount = 0.95;
  double exploration_decay = 2e-3;  // epsilon_t = exp(-decay * t), about 0.02 by round 2000
  friend bool operator==(const QLearningConfig&, const QLearningConfig&) = default;
};

struct LlmSpec {
  friend bool operator==(const LlmSpec&, const LlmSpec&) = default;
};

/// Test fixture: fixed price, repeats whatever it hears (or its seed message
/// when it speaks first).
struct EchoSpec {
  std::string seed_message = "hello";
  double price = 7.0;
  friend bool operator==(const EchoSpec&, const EchoSpec&) = default;
};

using PolicyKind =
    std::variant<ConstantSpec, MyopicBestResponseSpec, GrimTriggerSpec, QLearningConfig, LlmSpec, EchoSpec>;

struct PolicySpec {
  PolicyKind kind = ConstantSpec{};
  std::optional<std::uint64_t> seed;  // falls back to a seed derived from the run seed
  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

std::string_view kind_name(const PolicySpec& spec);

/// Throws Error(InvalidParams) on a malformed spec.
void validate(const PolicySpec& spec);

/// Everything a policy may know about its environment at construction.
struct PolicyContext {
  DerivedMarket market;
  int firm = 0;
  std::uint64_t seed = 0;
  LlmAgentConfig llm;                  // Llm policies only
  std::shared_ptr<ChatClient> client;  // Llm policies only
};

class Policy {
 public:
  static constexpr int kStateVersion = 1;

  virtual ~Policy() = default;

  virtual std::string_view name() const = 0;

  virtual double decide_price(const Observation& obs) = 0;

  /// Conversation-phase message; nullopt declines to speak.
  virtual std::optional<std::string> converse(const Observation& obs,
                                              const std::optional<std::string>& inbound);

  /// Revised strategy text; nullopt when the policy has nothing to report.
  virtual std::optional<std::string> reflect(const Observation& obs);

  /// Opaque internal state for checkpoints.
  virtual nlohmann::json save_state() const;
  virtual void load_state(const nlohmann::json& state);
};

class ConstantPolicy : public Policy {
 public:
  explicit ConstantPolicy(double price) : price_(price) {}
  std::string_view name() const override { return "constant"; }
  double decide_price(const Observation&) override { return price_; }

 private:
  double price_;
};

class MyopicBestResponsePolicy : public Policy {
 public:
  MyopicBestResponsePolicy(DerivedMarket market, int firm);
  std::string_view name() const override { return "myopic"; }
  double decide_price(const Observation& obs) override;

 private:
  DerivedMarket market_;
  int firm_;
};

/// Holds the collusive price until a rival price below
/// collusive - tolerance appears in the window, then punishes for
/// punish_length rounds; each newly observed defection restarts the count.
/// The round-0 seed record never triggers.
class GrimTriggerPolicy : public Policy {
 public:
  explicit GrimTriggerPolicy(GrimTriggerSpec spec);
  std::string_view name() const override { return "grim_trigger"; }
  double decide_price(const Observation& obs) override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  bool punishing() const { return punish_remaining_ > 0; }

 private:
  GrimTriggerSpec spec_;
  int punish_remaining_ = 0;
  int last_seen_round_ = 0;
};

class QLearningPolicy : public Policy {
 public:
  QLearningPolicy(QLearningConfig cfg, const DerivedMarket& market, int firm, std::uint64_t seed);
  std::string_view name() const override { return "qlearning"; }
  double decide_price(const Observation& obs) override;
  std::optional<std::string> reflect(const Observation& obs) override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;

  const std::vector<double>& grid() const { return grid_; }
  std::size_t greedy_action(std::size_t state) const;

 private:
  std::size_t nearest(double price) const;
  double& q(std::size_t state, std::size_t action) { return q_[state * grid_.size() + action]; }
  double q(std::size_t state, std::size_t action) const { return q_[state * grid_.size() + action]; }
  double uniform01();

  QLearningConfig cfg_;
  std::vector<double> grid_;
  std::vector<double> q_;
  std::mt19937_64 rng_;
  std::optional<std::size_t> last_state_;
  std::optional<std::size_t> last_action_;
};

class EchoPolicy : public Policy {
 public:
  explicit EchoPolicy(EchoSpec spec) : spec_(std::move(spec)) {}
  std::string_view name() const override { return "echo"; }
  double decide_price(const Observation&) override { return spec_.price; }
  std::optional<std::string> converse(const Observation& obs,
                                      const std::optional<std::string>& inbound) override;

 private:
  EchoSpec spec_;
};

class LlmPolicy : public Policy {
 public:
  explicit LlmPolicy(LlmAgent agent) : agent_(std::move(agent)) {}
  std::string_view name() const override { return "llm"; }
  double decide_price(const Observation& obs) override { return agent_.decide_price(obs); }
  std::optional<std::string> converse(const Observation& obs,
                                      const std::optional<std::string>& inbound) override;
  std::optional<std::string> reflect(const Observation& obs) override;

 private:
  LlmAgent agent_;
};

/// Throws Error(ConfigError) when the spec cannot run in this market, e.g. a
/// myopic best responder facing perfect substitutes.
std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const PolicyContext& ctx);

}  // namespace duopoly
