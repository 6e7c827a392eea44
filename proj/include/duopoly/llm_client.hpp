#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace duopoly {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct CompletionRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_tokens = 128;
};

/// Request body sent over the wire: {model, messages, temperature, max_tokens}.
std::string request_body(const CompletionRequest& request);

/// SHA-256 (hex) over the canonical request body. Any change to the model,
/// sampling parameters or message contents changes the digest.
std::string request_digest(const CompletionRequest& request);

std::string sha256_hex(std::string_view data);

enum class IoMode { Live, Record, Replay };

std::string_view to_string(IoMode mode);
/// Accepts "live", "record", "replay". Throws Error(ConfigError).
IoMode parse_io_mode(std::string_view text);

struct CassetteEntry {
  std::size_t seq = 0;
  std::string digest;
  std::string response;

  friend bool operator==(const CassetteEntry&, const CassetteEntry&) = default;
};

/// Reads a JSON Lines cassette. A missing file yields an empty cassette.
/// Throws Error(IoError) on malformed lines or out-of-order sequence numbers.
std::vector<CassetteEntry> read_cassette(const std::filesystem::path& path);

struct HttpResult {
  int status = 0;
  std::string body;
};

/// Minimal POST transport. std::nullopt signals a transport-level failure
/// (connection refused, timeout) that the caller may retry.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::optional<HttpResult> post(const std::string& url, const std::string& body,
                                         const std::map<std::string, std::string>& headers) = 0;
};

/// HTTP(S) transport backed by cpp-httplib.
class HttpTransport : public Transport {
 public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(60));
  std::optional<HttpResult> post(const std::string& url, const std::string& body,
                                 const std::map<std::string, std::string>& headers) override;

 private:
  std::chrono::seconds timeout_;
};

struct ClientOptions {
  IoMode mode = IoMode::Replay;
  std::filesystem::path cassette;
  std::string endpoint = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  int max_attempts = 3;
  std::chrono::milliseconds backoff{500};
};

/// Chat-completion client. Live posts to `<endpoint>/chat/completions`;
/// Record does the same and appends each exchange to the cassette; Replay
/// serves cassette entries in order after checking the request digest and
/// never touches the network.
class ChatClient {
 public:
  explicit ChatClient(ClientOptions options, std::shared_ptr<Transport> transport = nullptr);

  /// Throws Error with AuthMissing, ProviderError, CassetteMismatch or
  /// CassetteExhausted.
  std::string complete(const CompletionRequest& request);

  /// Index of the next cassette entry to read (Replay) or write (Record).
  std::size_t position() const;

  /// Restores the cassette position, e.g. from a checkpoint. In Record mode
  /// entries at and beyond `position` are dropped from the file.
  void seek(std::size_t position);

  std::size_t network_calls() const;
  IoMode mode() const { return options_.mode; }

 private:
  std::string call_provider(const CompletionRequest& request);

  ClientOptions options_;
  std::shared_ptr<Transport> transport_;
  std::vector<CassetteEntry> replay_;
  std::size_t position_ = 0;
  std::size_t network_calls_ = 0;
  mutable std::mutex mutex_;
};

}  // namespace duopoly
