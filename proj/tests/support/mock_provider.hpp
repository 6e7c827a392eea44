#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "duopoly/llm_client.hpp"

namespace duopoly::testing {

/// Deterministic stand-in for a chat model. The reply depends only on the
/// request: price requests get a price near the average of the last two
/// prices in a rotating set of phrasings (every 13th round opens with a reply
/// that has no number), conversation requests get a short message or END,
/// reflection requests get a strategy paragraph.
std::string mock_reply(const nlohmann::json& request);

/// OpenAI-style completion body wrapping `content`.
std::string completion_body(const std::string& content);

/// In-process transport answering with mock_reply. `fail_first` requests
/// return `fail_status` before normal service resumes.
class MockTransport : public Transport {
 public:
  explicit MockTransport(int fail_first = 0, int fail_status = 503)
      : fail_first_(fail_first), fail_status_(fail_status) {}

  std::optional<HttpResult> post(const std::string& url, const std::string& body,
                                 const std::map<std::string, std::string>& headers) override;

  int calls() const { return calls_; }
  const std::vector<std::string>& urls() const { return urls_; }
  const std::vector<std::map<std::string, std::string>>& headers() const { return headers_; }

 private:
  int fail_first_;
  int fail_status_;
  int calls_ = 0;
  std::vector<std::string> urls_;
  std::vector<std::map<std::string, std::string>> headers_;
};

/// The same responder behind a loopback HTTP server, for exercising the real
/// HTTP transport.
class MockServer {
 public:
  MockServer();
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// e.g. http://127.0.0.1:PORT/v1
  std::string endpoint() const;
  int requests() const { return requests_.load(); }
  /// Make the next n requests fail with `status`.
  void fail_next(int n, int status);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> failures_left_{0};
  std::atomic<int> failure_status_{503};
};

}  // namespace duopoly::testing
