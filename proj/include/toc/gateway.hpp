#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

#include "toc/core_model.hpp"
#include "toc/errors.hpp"

namespace toc::gateway {

enum class ModelRole { kMllm, kLlm };

std::string_view to_string(ModelRole role);

// A video (or time spans of it) attached to a message. No spans means the
// whole video.
struct MediaRef {
  std::string video_id;
  std::vector<std::pair<double, double>> spans;
};

struct Message {
  std::string role = "user";
  std::string text;
  std::vector<MediaRef> media;
};

struct ChatRequest {
  ModelRole model_role = ModelRole::kLlm;
  std::vector<Message> messages;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;
};

// Throws ValidationError: empty messages, media on an llm request,
// negative temperature or non-positive max_tokens.
void validate(const ChatRequest& req);

// Hex SHA-256 of the canonical JSON of {model_role, messages}. Stable across
// processes; decoding parameters are not part of the digest.
std::string request_digest(const ChatRequest& req);

// Retryable failure raised by backends (HTTP 429/5xx, connection errors,
// timeouts). The gateway retries these and converts the last one.
class TransientError : public Error {
 public:
  TransientError(const std::string& what, bool timeout) : Error(what), timeout_(timeout) {}
  const char* name() const noexcept override { return "TransientError"; }
  bool timeout() const { return timeout_; }

 private:
  bool timeout_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const ChatRequest& req) = 0;
};

// Scripted replies keyed by request digest. An entry holds one reply, or a
// list indexed by `seed % size` so repeated trials can differ, or an error.
class MockBackend : public Backend {
 public:
  struct Entry {
    std::vector<std::string> replies;
    std::optional<std::string> error;  // "unavailable" | "timeout" | "auth"
  };

  MockBackend() = default;
  static std::unique_ptr<MockBackend> from_file(const std::string& path);

  void add(const std::string& digest, Entry entry);
  void add_reply(const ChatRequest& req, std::string reply);
  std::string complete(const ChatRequest& req) override;

  size_t size() const { return table_.size(); }

 private:
  std::map<std::string, Entry> table_;
};

// Line-oriented table file: {"digest": hex, "reply": text} or
// {"digest": hex, "replies": [...]} or {"digest": hex, "error": kind}.
// "request": {model_role, messages} may stand in for "digest".
Json mock_entry_to_json(const std::string& digest, const MockBackend::Entry& entry);
void to_json(Json& j, const ChatRequest& req);
void from_json(const Json& j, ChatRequest& req);

struct HttpResponse {
  int status = 0;
  std::string body;
  bool timed_out = false;
  std::string error;  // transport-level failure description
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            const std::string& body, std::chrono::seconds timeout) = 0;
};

std::unique_ptr<Transport> make_http_transport();

struct Endpoint {
  std::string url;    // full chat-completions URL
  std::string model;
};

struct HttpBackendOptions {
  std::map<ModelRole, Endpoint> endpoints;
  std::optional<std::string> api_key;
  // Media URL with a {video_id} placeholder; spans are appended as #t=s,e.
  std::string media_url_template = "{video_id}";
  std::chrono::seconds timeout{120};
};

// OpenAI-compatible chat-completions client.
class HttpBackend : public Backend {
 public:
  HttpBackend(HttpBackendOptions opts, std::unique_ptr<Transport> transport);
  std::string complete(const ChatRequest& req) override;

  Json build_body(const ChatRequest& req) const;

 private:
  HttpBackendOptions opts_;
  std::unique_ptr<Transport> transport_;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};

  // Delay before attempt `attempt` (2-based): initial * 2^(attempt-2), capped.
  std::chrono::milliseconds delay_before(int attempt) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Shared entry point for all model calls: validation, bounded in-flight
// requests and retry with exponential backoff.
class Gateway {
 public:
  Gateway(std::shared_ptr<Backend> backend, RetryPolicy retry = {}, int max_in_flight = 4,
          Sleeper sleeper = {});

  // Throws BackendUnavailableError or TimeoutError once retries are
  // exhausted, AuthError immediately.
  std::string complete(const ChatRequest& req);

  size_t calls() const { return calls_.load(); }
  size_t attempts() const { return attempts_.load(); }

 private:
  std::shared_ptr<Backend> backend_;
  RetryPolicy retry_;
  Sleeper sleeper_;
  std::counting_semaphore<1 << 20> in_flight_;
  std::atomic<size_t> calls_{0};
  std::atomic<size_t> attempts_{0};
};

}  // namespace toc::gateway
