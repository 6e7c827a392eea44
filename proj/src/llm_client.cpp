#include "duopoly/llm_client.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "duopoly/errors.hpp"

namespace duopoly {

using nlohmann::json;

namespace {

bool retryable(int status) {
  return status == 408 || status == 409 || status == 429 || status >= 500;
}

json cassette_line(const CassetteEntry& e) {
  return json{{"seq", e.seq}, {"digest", e.digest}, {"response", e.response}};
}

void write_cassette(const std::filesystem::path& path, const std::vector<CassetteEntry>& entries) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write cassette " + tmp.string());
    for (const auto& e : entries) out << cassette_line(e).dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string request_body(const CompletionRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
  }
  json body{{"model", request.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
  return body.dump();
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0x0f];
  }
  return out;
}

std::string request_digest(const CompletionRequest& request) {
  return sha256_hex(request_body(request));
}

std::string_view to_string(IoMode mode) {
  switch (mode) {
    case IoMode::Live: return "live";
    case IoMode::Record: return "record";
    case IoMode::Replay: return "replay";
  }
  return "replay";
}

IoMode parse_io_mode(std::string_view text) {
  if (text == "live") return IoMode::Live;
  if (text == "record") return IoMode::Record;
  if (text == "replay") return IoMode::Replay;
  throw Error(ErrorCode::ConfigError, "io_mode: expected live, record or replay, got '" +
                                          std::string(text) + "'");
}

std::vector<CassetteEntry> read_cassette(const std::filesystem::path& path) {
  std::vector<CassetteEntry> entries;
  std::ifstream in(path);
  if (!in) return entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      CassetteEntry e{j.at("seq").get<std::size_t>(), j.at("digest").get<std::string>(),
                      j.at("response").get<std::string>()};
      if (e.seq != entries.size()) {
        throw Error(ErrorCode::IoError, "cassette " + path.string() + " line " +
                                            std::to_string(line_no) + ": out-of-order seq");
      }
      entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::IoError, "cassette " + path.string() + " line " +
                                          std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

HttpTransport::HttpTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

std::optional<HttpResult> HttpTransport::post(const std::string& url, const std::string& body,
                                              const std::map<std::string, std::string>& headers) {
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(path, h, body, "application/json");
  if (!res) return std::nullopt;
  return HttpResult{res->status, res->body};
}

ChatClient::ChatClient(ClientOptions options, std::shared_ptr<Transport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  if (!transport_) transport_ = std::make_shared<HttpTransport>();
  if (options_.mode != IoMode::Live) {
    replay_ = read_cassette(options_.cassette);
    position_ = options_.mode == IoMode::Record ? replay_.size() : 0;
  }
}

std::size_t ChatClient::position() const {
  std::lock_guard lock(mutex_);
  return position_;
}

std::size_t ChatClient::network_calls() const {
  std::lock_guard lock(mutex_);
  return network_calls_;
}

void ChatClient::seek(std::size_t position) {
  std::lock_guard lock(mutex_);
  if (options_.mode == IoMode::Record) {
    if (position > replay_.size()) {
      throw Error(ErrorCode::CassetteExhausted, "cannot seek past the end of the cassette");
    }
    if (position < replay_.size()) {
      replay_.resize(position);
      write_cassette(options_.cassette, replay_);
    }
  }
  position_ = position;
}

std::string ChatClient::call_provider(const CompletionRequest& request) {
  const char* key = std::getenv(options_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::AuthMissing, "environment variable " + options_.api_key_env + " is not set");
  }
  const std::string url = options_.endpoint + "/chat/completions";
  const std::map<std::string, std::string> headers{{"Authorization", std::string("Bearer ") + key}};
  const std::string body = request_body(request);

  std::string last_failure = "no attempt made";
  for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
    ++network_calls_;
    const auto res = transport_->post(url, body, headers);
    if (!res) {
      last_failure = "transport failure";
      continue;
    }
    if (res->status == 200) {
      try {
        const auto j = json::parse(res->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& ex) {
        throw Error(ErrorCode::ProviderError, std::string("malformed completion: ") + ex.what());
      }
    }
    last_failure = "HTTP " + std::to_string(res->status);
    if (!retryable(res->status)) {
      throw Error(ErrorCode::ProviderError, last_failure + ": " + res->body.substr(0, 200));
    }
  }
  throw Error(ErrorCode::ProviderError, "giving up after " + std::to_string(options_.max_attempts) +
                                            " attempts: " + last_failure);
}

std::string ChatClient::complete(const CompletionRequest& request) {
  std::lock_guard lock(mutex_);
  const std::string digest = request_digest(request);
  switch (options_.mode) {
    case IoMode::Live:
      return call_provider(request);
    case IoMode::Record: {
      std::string response = call_provider(request);
      CassetteEntry entry{position_, digest, response};
      std::ofstream out(options_.cassette, std::ios::app);
      if (!out) throw Error(ErrorCode::IoError, "cannot append to " + options_.cassette.string());
      out << cassette_line(entry).dump() << '\n';
      replay_.push_back(std::move(entry));
      ++position_;
      return response;
    }
    case IoMode::Replay: {
      if (position_ >= replay_.size()) {
        throw Error(ErrorCode::CassetteExhausted,
                    "no entry " + std::to_string(position_) + " in " + options_.cassette.string());
      }
      const auto& entry = replay_[position_];
      if (entry.digest != digest) {
        throw Error(ErrorCode::CassetteMismatch,
                    "request " + std::to_string(position_) + " differs from the recording");
      }
      ++position_;
      return entry.response;
    }
  }
  return {};
}

}  // namespace duopoly
