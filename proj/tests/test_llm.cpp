#include <gtest/gtest.h>

#include <cstdlib>

#include <nlohmann/json.hpp>

#include "duopoly/errors.hpp"
#include "duopoly/llm_agent.hpp"
#include "duopoly/memory.hpp"
#include "mock_provider.hpp"
#include "temp_dir.hpp"

using namespace duopoly;
using duopoly::testing::MockServer;
using duopoly::testing::MockTransport;
using duopoly::testing::slurp;
using duopoly::testing::spit;
using duopoly::testing::TempDir;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(DUOPOLY_FIXTURE_DIR) / "golden";

// Set DUOPOLY_UPDATE_GOLDEN=1 to rewrite the implementation-text goldens.
void expect_golden(const std::string& name, const std::string& actual) {
  const auto path = kGolden / name;
  if (std::getenv("DUOPOLY_UPDATE_GOLDEN")) spit(path, actual);
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  EXPECT_EQ(actual, slurp(path)) << name;
}

LlmAgentConfig base_cfg(Persona persona = Persona::Active) {
  LlmAgentConfig cfg;
  cfg.persona = persona;
  return cfg;
}

std::size_t count_lines(const std::string& s) {
  return s.empty() ? 0 : static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')) + 1;
}

std::size_t count_sections(const std::string& s) {
  std::size_t n = 0;
  for (std::size_t pos = 0; (pos = s.find("\n(", pos)) != std::string::npos; ++pos) ++n;
  return n + (s.rfind("(", 0) == 0 ? 1 : 0);
}

std::vector<RoundRecord> history(int rounds) {
  std::vector<RoundRecord> h{{0, 2.0, 1600.0, 0.0, 2.0}};
  for (int r = 1; r <= rounds; ++r) h.push_back({r, 6.0 + 0.05 * r, 800.0 - r, 3200.0 + r, 6.5});
  return h;
}

CompletionRequest sample_request() {
  return CompletionRequest{"gpt-4-0314", {{Role::System, "sys"}, {Role::User, "Round 5.\nprice?"}}, 0.7, 128};
}

struct KeyGuard {
  explicit KeyGuard(const char* value) {
    if (value) setenv("DUOPOLY_TEST_KEY", value, 1);
    else unsetenv("DUOPOLY_TEST_KEY");
  }
  ~KeyGuard() { unsetenv("DUOPOLY_TEST_KEY"); }
};

ClientOptions options(IoMode mode, std::filesystem::path cassette = {}) {
  ClientOptions o;
  o.mode = mode;
  o.cassette = std::move(cassette);
  o.api_key_env = "DUOPOLY_TEST_KEY";
  o.backoff = std::chrono::milliseconds(1);
  return o;
}

}  // namespace

TEST(SystemPrompt, MatchesTranscribedPromptOne) {
  expect_golden("prompt1_active.txt", build_system_prompt(base_cfg(), false));
  expect_golden("prompt1_aggressive.txt", build_system_prompt(base_cfg(Persona::Aggressive), false));
  expect_golden("prompt1_none.txt", build_system_prompt(base_cfg(Persona::None), false));
}

TEST(SystemPrompt, MatchesTranscribedPromptTwo) {
  expect_golden("prompt2_active.txt", build_system_prompt(base_cfg(), true));
}

TEST(SystemPrompt, KeySentences) {
  const auto p1 = build_system_prompt(base_cfg(), false);
  EXPECT_NE(p1.find("Please note that this is not a zero-sum game."), std::string::npos);
  EXPECT_NE(p1.find("You are encouraged to actively explore your price to get more profit."), std::string::npos);
  EXPECT_NE(p1.find("You represent a firm called Ed, while the other player represents a firm called Gill."),
            std::string::npos);
  EXPECT_NE(p1.find("Your profit is (p - 2) * q"), std::string::npos);
  const auto p2 = build_system_prompt(base_cfg(), true);
  EXPECT_NE(p2.find("In Phase 1, two players are permitted to engage in open-ended discussions"), std::string::npos);
  EXPECT_EQ(p2.find("Combined with this information"), std::string::npos);
  EXPECT_NE(build_system_prompt(base_cfg(Persona::Aggressive), false).find("price aggressively to maximize profit"),
            std::string::npos);
}

TEST(SystemPrompt, PersonaNoneHasFourSections) {
  EXPECT_EQ(count_sections(build_system_prompt(base_cfg(Persona::None), false)), 4u);
  EXPECT_EQ(count_sections(build_system_prompt(base_cfg(Persona::Active), false)), 5u);
  EXPECT_EQ(build_system_prompt(base_cfg(Persona::None), false).find("(Persona)"), std::string::npos);
}

TEST(SystemPrompt, SubstitutesCostAndNames) {
  auto cfg = base_cfg();
  cfg.firm_name = "Gill";
  cfg.rival_firm_name = "Ed";
  cfg.firm_cost = 5.0;
  const auto p = build_system_prompt(cfg, false);
  EXPECT_NE(p.find("You represent a firm called Gill, while the other player represents a firm called Ed."),
            std::string::npos);
  EXPECT_NE(p.find("(p - 5) * q, where p is your price for this round, 5 is the cost"), std::string::npos);
  EXPECT_EQ(p.find('{'), std::string::npos);
}

TEST(SystemPrompt, UnboundVariable) {
  auto cfg = base_cfg();
  cfg.rival_firm_name.clear();
  try {
    build_system_prompt(cfg, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingVariable);
  }
  EXPECT_THROW(render_template("{x} and {y}", {{"x", "1"}}), Error);
  EXPECT_EQ(render_template("{x} and {y}", {{"x", "1"}, {"y", "2"}}), "1 and 2");
}

TEST(RoundPrompt, FirstRoundShowsSeedRecord) {
  Observation obs;
  obs.round = 1;
  obs.window = window_view(history(0), MemoryConfig{});
  const auto p = build_round_prompt(obs, base_cfg());
  EXPECT_NE(p.find("\n0 | 2.00 | 1600.00 | 0.00 | 2.00\n"), std::string::npos);
  EXPECT_NE(p.find("History of the most recent 1 rounds:"), std::string::npos);
  EXPECT_NE(p.find("a single number"), std::string::npos);
}

TEST(RoundPrompt, WindowOfTwenty) {
  Observation obs;
  obs.round = 25;
  obs.window = window_view(history(24), MemoryConfig{});
  const auto p = build_round_prompt(obs, base_cfg());
  std::size_t rows = 0;
  int first = -1, last = -1;
  std::istringstream in(p);
  for (std::string line; std::getline(in, line);) {
    if (line.find(" | ") == std::string::npos || line.rfind("round", 0) == 0) continue;
    ++rows;
    const int r = std::stoi(line);
    if (first < 0) first = r;
    last = r;
  }
  EXPECT_EQ(rows, 20u);
  EXPECT_EQ(first, 5);
  EXPECT_EQ(last, 24);
}

TEST(RoundPrompt, StrategyBlockVerbatim) {
  Observation obs;
  obs.round = 3;
  obs.window = window_view(history(2), MemoryConfig{});
  EXPECT_EQ(build_round_prompt(obs, base_cfg()).find("strategy"), std::string::npos);
  obs.current_strategy = "hold at 7";
  EXPECT_NE(build_round_prompt(obs, base_cfg()).find("Your current pricing strategy:\nhold at 7\n"), std::string::npos);
}

TEST(RoundPrompt, Golden) {
  Observation obs;
  obs.round = 25;
  obs.conversation_enabled = true;
  obs.window = window_view(history(24), MemoryConfig{});
  obs.current_strategy = "hold at 7";
  obs.transcript = Transcript{25, {{0, 1, "Shall we keep prices high?"}, {1, 1, "Agreed."}}};
  expect_golden("round_prompt.txt", build_round_prompt(obs, base_cfg()));
  expect_golden("conversation_prompt.txt", build_conversation_prompt(obs, base_cfg()));
}

TEST(RoundPrompt, WordBudgetElidesOldestTranscriptFirst) {
  Observation obs;
  obs.round = 2;
  obs.conversation_enabled = true;
  obs.window = window_view(history(1), MemoryConfig{});
  obs.transcript = Transcript{2, {}};
  for (int i = 0; i < 6; ++i) {
    obs.transcript->messages.push_back({i % 2, i / 2 + 1, "message" + std::to_string(i)});
  }
  auto cfg = base_cfg();
  const auto full = build_round_prompt(obs, cfg);
  EXPECT_NE(full.find("Ed: message0"), std::string::npos);
  cfg.word_budget = static_cast<int>(word_count(build_system_prompt(cfg, true)) + word_count(full)) - 2;
  const auto cut = build_round_prompt(obs, cfg);
  EXPECT_EQ(cut.find("message0"), std::string::npos);
  EXPECT_NE(cut.find("Gill: message5"), std::string::npos);
  EXPECT_NE(cut.find("\n0 | 2.00"), std::string::npos);
  EXPECT_NE(cut.find("omitted"), std::string::npos);
}

TEST(ReflectionPrompt, OnlyRecentTwentyBins) {
  Observation obs;
  obs.round = 500;
  const auto h = history(500);
  MemoryConfig mem;
  mem.max_bins = 25;
  obs.bins = summarize_history(std::span<const RoundRecord>(h).subspan(1), mem);
  ASSERT_EQ(obs.bins.size(), 25u);
  const auto p = build_reflection_prompt(obs, base_cfg());
  EXPECT_EQ(p.find("\n1-20 |"), std::string::npos);
  EXPECT_EQ(p.find("\n81-100 |"), std::string::npos);
  EXPECT_NE(p.find("\n101-120 |"), std::string::npos);
  EXPECT_NE(p.find("\n481-500 |"), std::string::npos);
}

TEST(ReflectionPrompt, PriorStrategyBlock) {
  Observation obs;
  obs.round = 20;
  obs.bins = summarize_history(std::span<const RoundRecord>(history(20)).subspan(1), MemoryConfig{});
  const auto first = build_reflection_prompt(obs, base_cfg());
  EXPECT_EQ(first.find("previous pricing strategies"), std::string::npos);
  obs.prior_strategies = {{20, "stay near 7"}};
  obs.round = 40;
  const auto second = build_reflection_prompt(obs, base_cfg());
  EXPECT_NE(second.find("after round 20: stay near 7\n"), std::string::npos);
  expect_golden("reflection_prompt.txt", second);
}

TEST(ParsePrice, Examples) {
  EXPECT_DOUBLE_EQ(parse_price("I will set my price at $6.50 this round.", 14.0), 6.5);
  EXPECT_DOUBLE_EQ(parse_price("Last round was 7.2; I now choose 7.4", 14.0), 7.4);
  EXPECT_DOUBLE_EQ(parse_price("7", 14.0), 7.0);
  EXPECT_DOUBLE_EQ(parse_price("$ 8.125", 14.0), 8.13);
  EXPECT_DOUBLE_EQ(parse_price("I pick 6.75 (profit 3600 last round)", 14.0), 6.75);
  EXPECT_DOUBLE_EQ(parse_price("Price: .5", 14.0), 0.5);
  try {
    parse_price("Let's keep things steady.", 14.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoPriceFound);
  }
  EXPECT_THROW(parse_price("-3", 14.0), Error);
  EXPECT_THROW(parse_price("20", 14.0), Error);
}

TEST(Digest, SensitiveToEveryField) {
  const auto base = sample_request();
  const auto d0 = request_digest(base);
  EXPECT_EQ(d0.size(), 64u);
  EXPECT_EQ(d0, request_digest(sample_request()));
  auto r = base;
  r.model = "gpt-4";
  EXPECT_NE(request_digest(r), d0);
  r = base;
  r.temperature = 0.71;
  EXPECT_NE(request_digest(r), d0);
  r = base;
  r.max_tokens = 129;
  EXPECT_NE(request_digest(r), d0);
  r = base;
  r.messages[1].content += " ";
  EXPECT_NE(request_digest(r), d0);
  r = base;
  r.messages[1].role = Role::Assistant;
  EXPECT_NE(request_digest(r), d0);
}

TEST(Digest, RequestBodyShape) {
  const auto j = nlohmann::json::parse(request_body(sample_request()));
  EXPECT_EQ(j.at("model"), "gpt-4-0314");
  EXPECT_EQ(j.at("max_tokens"), 128);
  EXPECT_DOUBLE_EQ(j.at("temperature").get<double>(), 0.7);
  EXPECT_EQ(j.at("messages").at(0).at("role"), "system");
  EXPECT_EQ(j.at("messages").at(1).at("content"), "Round 5.\nprice?");
}

TEST(Client, LiveWithoutKeyIsAuthMissing) {
  KeyGuard key(nullptr);
  auto transport = std::make_shared<MockTransport>();
  ChatClient client(options(IoMode::Live), transport);
  try {
    client.complete(sample_request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AuthMissing);
  }
  EXPECT_EQ(transport->calls(), 0);
}

TEST(Client, LivePostsWithBearerToken) {
  KeyGuard key("sk-test");
  auto transport = std::make_shared<MockTransport>();
  ChatClient client(options(IoMode::Live), transport);
  EXPECT_EQ(client.complete(sample_request()), "I will set my price at $7.10 this round.");
  ASSERT_EQ(transport->calls(), 1);
  EXPECT_EQ(transport->urls()[0], "https://api.openai.com/v1/chat/completions");
  EXPECT_EQ(transport->headers()[0].at("Authorization"), "Bearer sk-test");
}

TEST(Client, RetriesTransientFailures) {
  KeyGuard key("sk-test");
  auto flaky = std::make_shared<MockTransport>(2, 503);
  ChatClient ok(options(IoMode::Live), flaky);
  EXPECT_NO_THROW(ok.complete(sample_request()));
  EXPECT_EQ(flaky->calls(), 3);

  auto down = std::make_shared<MockTransport>(3, 0);
  ChatClient gives_up(options(IoMode::Live), down);
  try {
    gives_up.complete(sample_request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProviderError);
  }
  EXPECT_EQ(down->calls(), 3);

  auto denied = std::make_shared<MockTransport>(1, 400);
  ChatClient fatal(options(IoMode::Live), denied);
  EXPECT_THROW(fatal.complete(sample_request()), Error);
  EXPECT_EQ(denied->calls(), 1);
}

TEST(Client, OverHttpAgainstLoopbackServer) {
  KeyGuard key("sk-test");
  MockServer server;
  auto opts = options(IoMode::Live);
  opts.endpoint = server.endpoint();
  ChatClient client(opts);
  EXPECT_EQ(client.complete(sample_request()), "I will set my price at $7.10 this round.");
  server.fail_next(1, 502);
  EXPECT_NO_THROW(client.complete(sample_request()));
  EXPECT_EQ(server.requests(), 3);
  server.fail_next(1, 401);
  try {
    client.complete(sample_request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProviderError);
  }
}

TEST(Client, RecordThenReplay) {
  KeyGuard key("sk-test");
  TempDir dir;
  const auto cassette = dir / "c.jsonl";
  auto transport = std::make_shared<MockTransport>();
  std::vector<std::string> recorded;
  {
    ChatClient rec(options(IoMode::Record, cassette), transport);
    auto r = sample_request();
    for (int i = 0; i < 3; ++i) {
      r.messages[1].content = "Round " + std::to_string(i + 1) + ".\n";
      recorded.push_back(rec.complete(r));
    }
    EXPECT_EQ(rec.position(), 3u);
  }
  const auto entries = read_cassette(cassette);
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[2].seq, 2u);
  EXPECT_EQ(entries[1].response, recorded[1]);

  KeyGuard no_key(nullptr);
  auto unused = std::make_shared<MockTransport>();
  ChatClient rep(options(IoMode::Replay, cassette), unused);
  auto r = sample_request();
  for (int i = 0; i < 3; ++i) {
    r.messages[1].content = "Round " + std::to_string(i + 1) + ".\n";
    EXPECT_EQ(rep.complete(r), recorded[static_cast<std::size_t>(i)]);
  }
  EXPECT_EQ(unused->calls(), 0);
  EXPECT_EQ(rep.network_calls(), 0u);
  try {
    rep.complete(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CassetteExhausted);
  }
}

TEST(Client, ReplayDetectsChangedRequest) {
  KeyGuard key("sk-test");
  TempDir dir;
  const auto cassette = dir / "c.jsonl";
  {
    ChatClient rec(options(IoMode::Record, cassette), std::make_shared<MockTransport>());
    rec.complete(sample_request());
  }
  ChatClient rep(options(IoMode::Replay, cassette));
  auto r = sample_request();
  r.temperature = 0.8;
  try {
    rep.complete(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CassetteMismatch);
  }
  EXPECT_EQ(rep.position(), 0u);
  EXPECT_NO_THROW(rep.complete(sample_request()));
}

TEST(Client, MalformedCassette) {
  TempDir dir;
  spit(dir / "bad.jsonl", "{\"seq\":0,\"digest\":\"x\",\"response\":\"7\"}\nnot json\n");
  EXPECT_THROW(read_cassette(dir / "bad.jsonl"), Error);
  spit(dir / "gap.jsonl", "{\"seq\":1,\"digest\":\"x\",\"response\":\"7\"}\n");
  EXPECT_THROW(read_cassette(dir / "gap.jsonl"), Error);
  EXPECT_TRUE(read_cassette(dir / "missing.jsonl").empty());
}

TEST(Client, RecordSeekTruncates) {
  KeyGuard key("sk-test");
  TempDir dir;
  const auto cassette = dir / "c.jsonl";
  ChatClient rec(options(IoMode::Record, cassette), std::make_shared<MockTransport>());
  for (int i = 0; i < 4; ++i) rec.complete(sample_request());
  rec.seek(2);
  EXPECT_EQ(read_cassette(cassette).size(), 2u);
  rec.complete(sample_request());
  const auto entries = read_cassette(cassette);
  ASSERT_EQ(entries.size(), 3u);
  EXPECT_EQ(entries[2].seq, 2u);
  EXPECT_THROW(rec.seek(9), Error);
}

TEST(Agent, RetriesUnparseableReply) {
  KeyGuard key("sk-test");
  auto transport = std::make_shared<MockTransport>();
  auto client = std::make_shared<ChatClient>(options(IoMode::Live), transport);
  LlmAgent agent(base_cfg(), client, 14.0);
  Observation obs;
  obs.round = 7;  // the mock's first reply in round 7 has no number
  obs.window = {{6, 7.0, 700, 3500, 7.2}};
  EXPECT_DOUBLE_EQ(agent.decide_price(obs), 6.9);
  EXPECT_EQ(transport->calls(), 2);
}

class Mute : public Transport {
 public:
  std::optional<HttpResult> post(const std::string&, const std::string&,
                                 const std::map<std::string, std::string>&) override {
    ++calls;
    return HttpResult{200, duopoly::testing::completion_body("I would rather not say.")};
  }
  int calls = 0;
};

TEST(Agent, ExhaustedRetriesArePolicyFailure) {
  KeyGuard key("sk-test");
  auto transport = std::make_shared<Mute>();
  auto cfg = base_cfg();
  cfg.parse_retries = 2;
  LlmAgent agent(cfg, std::make_shared<ChatClient>(options(IoMode::Live), transport), 14.0);
  Observation obs;
  obs.window = {{0, 2, 0, 0, 2}};
  try {
    agent.decide_price(obs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PolicyFailure);
    EXPECT_EQ(e.cause(), ErrorCode::NoPriceFound);
  }
  EXPECT_EQ(transport->calls, 3);
}

TEST(Agent, ProviderErrorsBecomePolicyFailure) {
  KeyGuard key(nullptr);
  LlmAgent agent(base_cfg(), std::make_shared<ChatClient>(options(IoMode::Live), std::make_shared<Mute>()), 14.0);
  Observation obs;
  obs.window = {{0, 2, 0, 0, 2}};
  try {
    agent.decide_price(obs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PolicyFailure);
    EXPECT_EQ(e.cause(), ErrorCode::AuthMissing);
  }
}

TEST(Agent, ConversationEndsOnEnd) {
  KeyGuard key("sk-test");
  LlmAgent agent(base_cfg(), std::make_shared<ChatClient>(options(IoMode::Live), std::make_shared<MockTransport>()),
                 14.0);
  Observation obs;
  obs.round = 5;  // the mock stops after 2 messages in rounds divisible by 5
  obs.conversation_enabled = true;
  obs.window = {{4, 7, 700, 3500, 7}};
  obs.transcript = Transcript{5, {}};
  EXPECT_TRUE(agent.converse(obs));
  obs.transcript->messages = {{0, 1, "a"}, {1, 1, "b"}};
  EXPECT_FALSE(agent.converse(obs));
}

TEST(Agent, ReflectReturnsTextVerbatim) {
  KeyGuard key("sk-test");
  LlmAgent agent(base_cfg(), std::make_shared<ChatClient>(options(IoMode::Live), std::make_shared<MockTransport>()),
                 14.0);
  Observation obs;
  obs.round = 20;
  obs.bins = summarize_history(std::span<const RoundRecord>(history(20)).subspan(1), MemoryConfig{});
  EXPECT_EQ(agent.reflect(obs).rfind("Strategy after round 20: stay close to ", 0), 0u);
}

TEST(AgentConfig, Validation) {
  auto cfg = base_cfg();
  cfg.temperature = -0.1;
  EXPECT_THROW(validate(cfg), Error);
  cfg = base_cfg();
  cfg.max_tokens = 0;
  EXPECT_THROW(validate(cfg), Error);
  cfg = base_cfg();
  cfg.parse_retries = -1;
  EXPECT_THROW(validate(cfg), Error);
  EXPECT_EQ(parse_persona("AGGRESSIVE"), Persona::Aggressive);
  EXPECT_THROW(parse_persona("shy"), Error);
  EXPECT_EQ(parse_io_mode("replay"), IoMode::Replay);
  EXPECT_THROW(parse_io_mode("tape"), Error);
}
