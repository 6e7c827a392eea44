#pragma once

#include <memory>
#include <optional>
#include <string>

#include "duopoly/llm_client.hpp"
#include "duopoly/llm_prompts.hpp"
#include "duopoly/observation.hpp"

namespace duopoly {

/// One firm played by a chat model. Every call is stateless on the model
/// side: the system prompt plus a freshly rendered request.
class LlmAgent {
 public:
  LlmAgent(LlmAgentConfig cfg, std::shared_ptr<ChatClient> client, double max_price);

  /// Re-prompts with a format reminder up to parse_retries times, then
  /// throws Error(PolicyFailure, cause NoPriceFound).
  double decide_price(const Observation& obs);

  /// Next conversation message, or nullopt when the model ends the phase.
  std::optional<std::string> converse(const Observation& obs);

  /// Revised strategy text, verbatim.
  std::string reflect(const Observation& obs);

  const LlmAgentConfig& config() const { return cfg_; }

 private:
  std::string complete(std::vector<ChatMessage> messages);

  LlmAgentConfig cfg_;
  std::shared_ptr<ChatClient> client_;
  double max_price_;
};

}  // namespace duopoly
