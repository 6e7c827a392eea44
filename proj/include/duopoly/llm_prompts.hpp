#pragma once

#include <map>
#include <string>
#include <string_view>

#include "duopoly/observation.hpp"

namespace duopoly {

enum class Persona { Active, Aggressive, None };

std::string_view to_string(Persona persona);
/// Accepts "active", "aggressive", "none" (case-insensitive). Throws
/// Error(ConfigError) otherwise.
Persona parse_persona(std::string_view text);

struct LlmAgentConfig {
  std::string model_id = "gpt-4-0314";
  double temperature = 0.7;
  int max_tokens = 128;
  std::string firm_name = "Ed";
  std::string rival_firm_name = "Gill";
  double firm_cost = 2.0;
  Persona persona = Persona::Active;
  int parse_retries = 3;
  int word_budget = 6000;
};

/// Throws Error(InvalidParams) on negative temperature, max_tokens < 1 or
/// parse_retries < 0.
void validate(const LlmAgentConfig& cfg);

/// Replaces every {name} with vars[name]. Throws Error(MissingVariable) when a
/// placeholder has no binding or binds to an empty string.
std::string render_template(std::string_view text, const std::map<std::string, std::string>& vars);

/// Shortest decimal rendering: 2 -> "2", 2.5 -> "2.5".
std::string format_number(double value);

/// The game description given to the model at the start of every call.
/// Sections are one per line; the persona line is omitted for Persona::None.
std::string build_system_prompt(const LlmAgentConfig& cfg, bool communication);

/// Pricing request for one round: history table, current strategy, this
/// round's conversation and the answer-format instruction.
std::string build_round_prompt(const Observation& obs, const LlmAgentConfig& cfg);

/// Request for the agent's next conversation-phase message.
std::string build_conversation_prompt(const Observation& obs, const LlmAgentConfig& cfg);

/// Reflection request: histogram bins plus previously adopted strategies.
std::string build_reflection_prompt(const Observation& obs, const LlmAgentConfig& cfg);

/// Sent after an unparseable pricing answer.
std::string_view price_format_reminder();

/// Reply that ends the conversation phase early.
inline constexpr std::string_view kEndConversation = "END";

/// Final number in `text` lying in [0, max_price], a leading '$' allowed,
/// rounded to two decimals. Throws Error(NoPriceFound).
double parse_price(std::string_view text, double max_price);

/// Whitespace-separated word count, used as a cheap token estimate.
std::size_t word_count(std::string_view text);

}  // namespace duopoly
