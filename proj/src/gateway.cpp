#include "toc/gateway.hpp"

#include <openssl/evp.h>

#include <thread>

namespace toc::gateway {

namespace {

std::string hex(const unsigned char* data, unsigned len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0xF]);
  }
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  return hex(md, len);
}

ModelRole role_from_string(const std::string& s) {
  if (s == "mllm") return ModelRole::kMllm;
  if (s == "llm") return ModelRole::kLlm;
  throw RecordError("unknown model_role '" + s + "'");
}

Json canonical(const ChatRequest& req) {
  Json msgs = Json::array();
  for (const auto& m : req.messages) {
    Json media = Json::array();
    for (const auto& ref : m.media) {
      Json spans = Json::array();
      for (const auto& [s, e] : ref.spans) spans.push_back(Json::array({s, e}));
      media.push_back(Json{{"video_id", ref.video_id}, {"spans", spans}});
    }
    msgs.push_back(Json{{"role", m.role}, {"text", m.text}, {"media", media}});
  }
  return Json{{"model_role", to_string(req.model_role)}, {"messages", msgs}};
}

std::string format_seconds(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct SemaphoreGuard {
  explicit SemaphoreGuard(std::counting_semaphore<1 << 20>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  std::counting_semaphore<1 << 20>& sem;
};

}  // namespace

std::string_view to_string(ModelRole role) { return role == ModelRole::kMllm ? "mllm" : "llm"; }

void validate(const ChatRequest& req) {
  if (req.messages.empty()) throw ValidationError("chat request without messages");
  if (!(req.temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (req.max_tokens <= 0) throw ValidationError("max_tokens must be > 0");
  if (req.model_role == ModelRole::kLlm)
    for (const auto& m : req.messages)
      if (!m.media.empty()) throw ValidationError("media attached to an llm request");
}

std::string request_digest(const ChatRequest& req) { return sha256_hex(canonical(req).dump()); }

void to_json(Json& j, const ChatRequest& req) {
  j = canonical(req);
  j["temperature"] = req.temperature;
  j["max_tokens"] = req.max_tokens;
  if (req.seed) j["seed"] = *req.seed;
}

void from_json(const Json& j, ChatRequest& req) {
  try {
    req.model_role = role_from_string(j.at("model_role").get<std::string>());
    req.messages.clear();
    for (const auto& m : j.at("messages")) {
      Message msg;
      msg.role = m.value("role", std::string("user"));
      msg.text = m.at("text").get<std::string>();
      if (m.contains("media"))
        for (const auto& r : m["media"]) {
          MediaRef ref;
          ref.video_id = r.at("video_id").get<std::string>();
          if (r.contains("spans"))
            for (const auto& sp : r["spans"])
              ref.spans.emplace_back(sp.at(0).get<double>(), sp.at(1).get<double>());
          msg.media.push_back(std::move(ref));
        }
      req.messages.push_back(std::move(msg));
    }
    req.temperature = j.value("temperature", 0.0);
    req.max_tokens = j.value("max_tokens", 1024);
    if (j.contains("seed")) req.seed = j["seed"].get<std::int64_t>();
  } catch (const Json::exception& e) {
    throw RecordError(std::string("bad chat request: ") + e.what());
  }
}

// --- mock --------------------------------------------------------------------

Json mock_entry_to_json(const std::string& digest, const MockBackend::Entry& entry) {
  Json j{{"digest", digest}};
  if (entry.error) j["error"] = *entry.error;
  if (entry.replies.size() == 1)
    j["reply"] = entry.replies.front();
  else if (!entry.replies.empty())
    j["replies"] = entry.replies;
  return j;
}

std::unique_ptr<MockBackend> MockBackend::from_file(const std::string& path) {
  auto mock = std::make_unique<MockBackend>();
  size_t n = 0;
  for (const auto& j : read_records(path)) {
    ++n;
    const auto where = path + ": entry " + std::to_string(n);
    std::string digest;
    if (j.contains("digest"))
      digest = j["digest"].get<std::string>();
    else if (j.contains("request"))
      digest = request_digest(j["request"].get<ChatRequest>());
    else
      throw RecordError(where + ": needs 'digest' or 'request'");
    Entry e;
    if (j.contains("reply")) e.replies.push_back(j["reply"].get<std::string>());
    if (j.contains("replies")) e.replies = j["replies"].get<std::vector<std::string>>();
    if (j.contains("error")) e.error = j["error"].get<std::string>();
    if (e.replies.empty() && !e.error) throw RecordError(where + ": no reply or error");
    mock->add(digest, std::move(e));
  }
  return mock;
}

void MockBackend::add(const std::string& digest, Entry entry) {
  table_[digest] = std::move(entry);
}

void MockBackend::add_reply(const ChatRequest& req, std::string reply) {
  add(request_digest(req), Entry{{std::move(reply)}, std::nullopt});
}

std::string MockBackend::complete(const ChatRequest& req) {
  const auto digest = request_digest(req);
  const auto it = table_.find(digest);
  if (it == table_.end())
    throw BackendUnavailableError("mock: no scripted reply for digest " + digest);
  const Entry& e = it->second;
  if (e.error) {
    if (*e.error == "auth") throw AuthError("mock: scripted auth failure");
    if (*e.error == "timeout") throw TransientError("mock: scripted timeout", true);
    throw TransientError("mock: scripted unavailability", false);
  }
  const auto k = static_cast<std::uint64_t>(req.seed.value_or(0));
  return e.replies[k % e.replies.size()];
}

// --- http --------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendOptions opts, std::unique_ptr<Transport> transport)
    : opts_(std::move(opts)), transport_(std::move(transport)) {}

Json HttpBackend::build_body(const ChatRequest& req) const {
  const auto ep = opts_.endpoints.find(req.model_role);
  if (ep == opts_.endpoints.end())
    throw ConfigError("no endpoint configured for role " + std::string(to_string(req.model_role)));

  Json messages = Json::array();
  for (const auto& m : req.messages) {
    if (m.media.empty()) {
      messages.push_back(Json{{"role", m.role}, {"content", m.text}});
      continue;
    }
    Json content = Json::array();
    for (const auto& ref : m.media) {
      std::string url = opts_.media_url_template;
      const auto pos = url.find("{video_id}");
      if (pos != std::string::npos) url.replace(pos, 10, ref.video_id);
      if (ref.spans.empty()) {
        content.push_back(Json{{"type", "video_url"}, {"video_url", {{"url", url}}}});
        continue;
      }
      for (const auto& [s, e] : ref.spans)
        content.push_back(Json{{"type", "video_url"},
                               {"video_url",
                                {{"url", url + "#t=" + format_seconds(s) + "," + format_seconds(e)}}}});
    }
    content.push_back(Json{{"type", "text"}, {"text", m.text}});
    messages.push_back(Json{{"role", m.role}, {"content", content}});
  }
  Json body{{"model", ep->second.model},
            {"messages", messages},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

std::string HttpBackend::complete(const ChatRequest& req) {
  if (!opts_.api_key || opts_.api_key->empty())
    throw AuthError("TOC_API_KEY is not set");
  const auto body = build_body(req).dump();
  const auto& url = opts_.endpoints.at(req.model_role).url;
  const auto resp = transport_->post(
      url, {{"Authorization", "Bearer " + *opts_.api_key}, {"Content-Type", "application/json"}},
      body, opts_.timeout);

  if (resp.status == 0)
    throw TransientError("transport failure: " + resp.error, resp.timed_out);
  if (resp.status == 401 || resp.status == 403)
    throw AuthError("backend rejected credentials (HTTP " + std::to_string(resp.status) + ")");
  if (resp.status == 408) throw TransientError("HTTP 408", true);
  if (resp.status == 429 || resp.status >= 500)
    throw TransientError("HTTP " + std::to_string(resp.status), false);
  if (resp.status < 200 || resp.status >= 300)
    throw BackendUnavailableError("HTTP " + std::to_string(resp.status) + ": " +
                                  resp.body.substr(0, 200));
  try {
    const auto j = Json::parse(resp.body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const Json::exception& e) {
    throw BackendUnavailableError(std::string("malformed completion response: ") + e.what());
  }
}

// --- gateway -----------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_before(int attempt) const {
  auto d = initial_backoff;
  for (int k = 2; k < attempt && d < max_backoff; ++k) d *= 2;
  return std::min(d, max_backoff);
}

Gateway::Gateway(std::shared_ptr<Backend> backend, RetryPolicy retry, int max_in_flight,
                 Sleeper sleeper)
    : backend_(std::move(backend)),
      retry_(retry),
      sleeper_(sleeper ? std::move(sleeper)
                       : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      in_flight_(std::max(1, max_in_flight)) {
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
}

std::string Gateway::complete(const ChatRequest& req) {
  validate(req);
  SemaphoreGuard guard(in_flight_);
  ++calls_;
  std::string last_error;
  bool last_timeout = false;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempt > 1) sleeper_(retry_.delay_before(attempt));
    ++attempts_;
    try {
      return backend_->complete(req);
    } catch (const TransientError& e) {
      last_error = e.what();
      last_timeout = e.timeout();
    }
  }
  const auto msg = "giving up after " + std::to_string(retry_.max_attempts) +
                   " attempts: " + last_error;
  if (last_timeout) throw TimeoutError(msg);
  throw BackendUnavailableError(msg);
}

}  // namespace toc::gateway
