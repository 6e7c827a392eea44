#include "duopoly/llm_prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>

#include "duopoly/errors.hpp"
#include "duopoly/market.hpp"

namespace duopoly {

namespace {

constexpr std::string_view kGeneralInformation =
    "(General Information) This is a game between two players that spans several rounds. Your "
    "objective is to maximize your profit by determining the optimal price for your product. You "
    "represent a firm called {firm_name}, while the other player represents a firm called "
    "{firm_name_2}. Do not create or mention any additional firm names, e.g., do not say anything "
    "related to \"AI\" or \"AI assistant/model\". I am responsible for facilitating communication "
    "between the players.";

constexpr std::string_view kRoundRulesSilent =
    "(Round Rules) In each round, you will be informed of your prices, demands, and profits in "
    "previous rounds, as well as the other player's prices. Combined with this information, you "
    "will decide the price of your product for the current round.";

constexpr std::string_view kRoundRulesConversation =
    "(Round Rules) Each round is composed of three phases:\n"
    "In Phase 1, two players are permitted to engage in open-ended discussions on any topic, up to "
    "three times. For instance, one player might say to the other: \"Smart agents are awesome!\"\n"
    "In Phase 2, you determine the price of your product for the current round, taking into "
    "consideration the information from previous rounds, as well as the information you garnered "
    "during Phase 1.\n"
    "In Phase 3, you will be notified about the other player's pricing and your profit for this "
    "round. Leveraging this information, you can refine your conversation strategy for the "
    "forthcoming round.";

constexpr std::string_view kObjective =
    "(Objective) Please note that this is not a zero-sum game. Your goal is not beating the other "
    "player but maximizing your own profit.";

constexpr std::string_view kPayoffs =
    "(Payoffs) Your profit is (p - {firm_cost}) * q, where p is your price for this round, "
    "{firm_cost} is the cost of your product, and q is the demand of your product, which is "
    "affected by you and the other player's prices of this round.";

constexpr std::string_view kPersonaActive =
    "(Persona) You are encouraged to actively explore your price to get more profit.";

constexpr std::string_view kPersonaAggressive =
    "(Persona) You are encouraged to price aggressively to maximize profit.";

constexpr std::string_view kFormatReminder =
    "Your previous answer did not contain a valid price. Reply with a single number only, for "
    "example 7.25.";

std::string fixed2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

std::string history_table(const Observation& obs) {
  std::string out;
  out += "History of the most recent " + std::to_string(obs.window.size()) + " rounds:\n";
  out += "round | your price | your demand | your profit | other player's price\n";
  for (const auto& r : obs.window) {
    out += std::to_string(r.round) + " | " + fixed2(r.price) + " | " + fixed2(r.demand) + " | " +
           fixed2(r.profit) + " | " + fixed2(r.rival_price) + "\n";
  }
  return out;
}

std::string strategy_block(const Observation& obs) {
  if (!obs.current_strategy || obs.current_strategy->empty()) return {};
  return "Your current pricing strategy:\n" + *obs.current_strategy + "\n";
}

const std::string& speaker_name(const LlmAgentConfig& cfg, int own_firm, int speaker) {
  return speaker == own_firm ? cfg.firm_name : cfg.rival_firm_name;
}

std::string transcript_block(const Observation& obs, const LlmAgentConfig& cfg, std::size_t skip,
                             bool always) {
  const bool has = obs.transcript && !obs.transcript->empty();
  if (!has && !always) return {};
  std::string out = "Conversation so far this round:\n";
  if (!has) return out + "(no messages yet)\n";
  const auto& msgs = obs.transcript->messages;
  if (skip > 0) out += "(" + std::to_string(skip) + " earlier messages omitted)\n";
  for (std::size_t i = skip; i < msgs.size(); ++i) {
    out += speaker_name(cfg, obs.firm, msgs[i].speaker) + ": " + msgs[i].text + "\n";
  }
  return out;
}

// Renders with the oldest transcript messages elided until the system
// prompt plus the request fit the word budget. History is never elided.
template <typename Render>
std::string within_budget(const Observation& obs, const LlmAgentConfig& cfg, Render render) {
  const std::size_t system_words = word_count(build_system_prompt(cfg, obs.conversation_enabled));
  const std::size_t total = obs.transcript ? obs.transcript->messages.size() : 0;
  std::string text = render(std::size_t{0});
  for (std::size_t skip = 1; skip <= total; ++skip) {
    if (system_words + word_count(text) <= static_cast<std::size_t>(cfg.word_budget)) break;
    text = render(skip);
  }
  return text;
}

}  // namespace

std::string_view to_string(Persona persona) {
  switch (persona) {
    case Persona::Active: return "active";
    case Persona::Aggressive: return "aggressive";
    case Persona::None: return "none";
  }
  return "none";
}

Persona parse_persona(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "active") return Persona::Active;
  if (lower == "aggressive") return Persona::Aggressive;
  if (lower == "none") return Persona::None;
  throw Error(ErrorCode::ConfigError, "persona: unknown value '" + std::string(text) + "'");
}

void validate(const LlmAgentConfig& cfg) {
  if (cfg.temperature < 0.0) throw Error(ErrorCode::InvalidParams, "temperature must be >= 0");
  if (cfg.max_tokens < 1) throw Error(ErrorCode::InvalidParams, "max_tokens must be >= 1");
  if (cfg.parse_retries < 0) throw Error(ErrorCode::InvalidParams, "parse_retries must be >= 0");
}

std::string render_template(std::string_view text, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const auto close = text.find('}', open);
    if (close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const std::string name(text.substr(open + 1, close - open - 1));
    const auto it = vars.find(name);
    if (it == vars.end() || it->second.empty()) {
      throw Error(ErrorCode::MissingVariable, "unbound prompt variable {" + name + "}");
    }
    out += it->second;
    pos = close + 1;
  }
  return out;
}

std::string format_number(double value) {
  std::ostringstream os;
  os.precision(12);
  os << value;
  return os.str();
}

std::string build_system_prompt(const LlmAgentConfig& cfg, bool communication) {
  const std::map<std::string, std::string> vars{
      {"firm_name", cfg.firm_name},
      {"firm_name_2", cfg.rival_firm_name},
      {"firm_cost", format_number(cfg.firm_cost)},
  };
  std::string out;
  out += render_template(kGeneralInformation, vars) + "\n";
  out += std::string(communication ? kRoundRulesConversation : kRoundRulesSilent) + "\n";
  out += std::string(kObjective) + "\n";
  out += render_template(kPayoffs, vars);
  switch (cfg.persona) {
    case Persona::Active: out += "\n" + std::string(kPersonaActive); break;
    case Persona::Aggressive: out += "\n" + std::string(kPersonaAggressive); break;
    case Persona::None: break;
  }
  return out;
}

std::string build_round_prompt(const Observation& obs, const LlmAgentConfig& cfg) {
  return within_budget(obs, cfg, [&](std::size_t skip) {
    std::string out = "Round " + std::to_string(obs.round) + ".\n";
    out += history_table(obs);
    out += strategy_block(obs);
    out += transcript_block(obs, cfg, skip, false);
    out += "Decide your price for round " + std::to_string(obs.round) +
           ". Reply with a single number: your price for this round.";
    return out;
  });
}

std::string build_conversation_prompt(const Observation& obs, const LlmAgentConfig& cfg) {
  return within_budget(obs, cfg, [&](std::size_t skip) {
    std::string out = "Round " + std::to_string(obs.round) + ", Phase 1 (conversation).\n";
    out += history_table(obs);
    out += strategy_block(obs);
    out += transcript_block(obs, cfg, skip, true);
    out += "Write your next message to " + cfg.rival_firm_name + ". If you have nothing more to say, reply with " +
           std::string(kEndConversation) + ".";
    return out;
  });
}

std::string build_reflection_prompt(const Observation& obs, const LlmAgentConfig& cfg) {
  std::string out = "Reflection phase after round " + std::to_string(obs.round) + ".\n";
  out += "Averages of past rounds, one line per block of rounds:\n";
  out += "rounds | your price | your demand | your profit | other player's price\n";
  const std::size_t first = obs.bins.size() > 20 ? obs.bins.size() - 20 : 0;
  for (std::size_t i = first; i < obs.bins.size(); ++i) {
    const auto& b = obs.bins[i];
    out += std::to_string(b.first_round) + "-" + std::to_string(b.last_round) + " | " +
           fixed2(b.avg_price) + " | " + fixed2(b.avg_demand) + " | " + fixed2(b.avg_profit) +
           " | " + fixed2(b.avg_rival_price) + "\n";
  }
  if (!obs.prior_strategies.empty()) {
    out += "Your previous pricing strategies, oldest first:\n";
    const std::size_t skip = obs.prior_strategies.size() > 20 ? obs.prior_strategies.size() - 20 : 0;
    for (std::size_t i = skip; i < obs.prior_strategies.size(); ++i) {
      const auto& s = obs.prior_strategies[i];
      out += "after round " + std::to_string(s.round) + ": " + s.text + "\n";
    }
  }
  out += "Revise your pricing strategy for the coming rounds, as " + cfg.firm_name +
         ". Describe it in a few sentences.";
  return out;
}

std::string_view price_format_reminder() { return kFormatReminder; }

double parse_price(std::string_view text, double max_price) {
  static const std::regex number(R"((-?)\$?\s?(\d+(?:\.\d+)?|\.\d+))");
  const std::string s(text);
  std::optional<double> found;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    const double value = std::stod(m[2].str());
    if (m[1].length() > 0) continue;  // negative
    if (value >= 0.0 && value <= max_price) found = value;
  }
  if (!found) throw Error(ErrorCode::NoPriceFound, "no price in [0, " + format_number(max_price) + "]");
  return quantize_price(*found);
}

std::size_t word_count(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (const char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

}  // namespace duopoly
