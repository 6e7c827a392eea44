#include "duopoly/llm_agent.hpp"

#include <algorithm>
#include <cctype>

#include "duopoly/errors.hpp"

namespace duopoly {

namespace {

std::string trim(std::string_view text) {
  auto begin = text.begin();
  auto end = text.end();
  while (begin != end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
  while (end != begin && std::isspace(static_cast<unsigned char>(*(end - 1)))) --end;
  return std::string(begin, end);
}

bool ends_conversation(const std::string& reply) {
  std::string core = reply;
  while (!core.empty() && (core.back() == '.' || core.back() == '!')) core.pop_back();
  std::transform(core.begin(), core.end(), core.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return core.empty() || core == kEndConversation;
}

}  // namespace

LlmAgent::LlmAgent(LlmAgentConfig cfg, std::shared_ptr<ChatClient> client, double max_price)
    : cfg_(std::move(cfg)), client_(std::move(client)), max_price_(max_price) {
  validate(cfg_);
}

std::string LlmAgent::complete(std::vector<ChatMessage> messages) {
  CompletionRequest request{cfg_.model_id, std::move(messages), cfg_.temperature, cfg_.max_tokens};
  try {
    return client_->complete(request);
  } catch (const Error& e) {
    throw Error(ErrorCode::PolicyFailure, cfg_.firm_name + ": " + e.what(), e.code());
  }
}

double LlmAgent::decide_price(const Observation& obs) {
  std::vector<ChatMessage> messages{
      {Role::System, build_system_prompt(cfg_, obs.conversation_enabled)},
      {Role::User, build_round_prompt(obs, cfg_)},
  };
  for (int attempt = 0; attempt <= cfg_.parse_retries; ++attempt) {
    const std::string reply = complete(messages);
    try {
      return parse_price(reply, max_price_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoPriceFound) throw;
    }
    if (!trim(reply).empty()) messages.push_back({Role::Assistant, reply});
    messages.push_back({Role::User, std::string(price_format_reminder())});
  }
  throw Error(ErrorCode::PolicyFailure,
              cfg_.firm_name + ": no parseable price after " + std::to_string(cfg_.parse_retries) +
                  " retries in round " + std::to_string(obs.round),
              ErrorCode::NoPriceFound);
}

std::optional<std::string> LlmAgent::converse(const Observation& obs) {
  const std::string reply = trim(complete({
      {Role::System, build_system_prompt(cfg_, true)},
      {Role::User, build_conversation_prompt(obs, cfg_)},
  }));
  if (ends_conversation(reply)) return std::nullopt;
  return reply;
}

std::string LlmAgent::reflect(const Observation& obs) {
  return complete({
      {Role::System, build_system_prompt(cfg_, obs.conversation_enabled)},
      {Role::User, build_reflection_prompt(obs, cfg_)},
  });
}

}  // namespace duopoly
