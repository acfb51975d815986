#include "toc/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "toc/errors.hpp"

namespace toc {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kKnownKeys = {
    "backend", "endpoints",  "media_url_template", "mock_table_path", "tau",
    "m_trials", "band",      "target_rl_size",     "seed",            "parallelism",
    "strict_parsing",        "numeric_rel_tol",    "generation",      "retry"};

template <typename T>
T get(const Json& j, const std::string& key, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const Json::exception&) {
    throw ConfigError("config key '" + path + key + "' has the wrong type");
  }
}

template <typename T>
void read_opt(const Json& obj, const std::string& key, T& dst, const std::string& prefix = "") {
  if (obj.contains(key) && !obj[key].is_null()) dst = get<T>(obj[key], key, prefix);
}

}  // namespace

Config config_from_json(const Json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (!kKnownKeys.count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  Config c;
  read_opt(j, "backend", c.backend);
  read_opt(j, "media_url_template", c.media_url_template);
  if (j.contains("mock_table_path") && !j["mock_table_path"].is_null()) {
    fs::path p = get<std::string>(j["mock_table_path"], "mock_table_path", "");
    if (p.is_relative()) p = fs::path(base_dir) / p;
    c.mock_table_path = p.lexically_normal().string();
  }
  if (j.contains("endpoints")) {
    const auto& eps = j["endpoints"];
    for (const auto& [role_name, role] :
         {std::pair{"mllm", gateway::ModelRole::kMllm}, std::pair{"llm", gateway::ModelRole::kLlm}}) {
      if (!eps.contains(role_name)) continue;
      const auto& e = eps[role_name];
      const std::string prefix = std::string("endpoints.") + role_name + ".";
      gateway::Endpoint ep;
      read_opt(e, "url", ep.url, prefix);
      read_opt(e, "model", ep.model, prefix);
      c.endpoints[role] = ep;
    }
  }
  read_opt(j, "tau", c.tau);
  read_opt(j, "m_trials", c.m_trials);
  if (j.contains("band")) {
    const auto band = get<std::vector<double>>(j["band"], "band", "");
    if (band.size() != 2) throw ConfigError("config key 'band' must be [lo, hi]");
    c.band_lo = band[0];
    c.band_hi = band[1];
  }
  read_opt(j, "target_rl_size", c.target_rl_size);
  read_opt(j, "seed", c.seed);
  read_opt(j, "parallelism", c.parallelism);
  read_opt(j, "strict_parsing", c.strict_parsing);
  if (j.contains("numeric_rel_tol") && !j["numeric_rel_tol"].is_null())
    c.numeric_rel_tol = get<double>(j["numeric_rel_tol"], "numeric_rel_tol", "");
  if (j.contains("generation")) {
    const auto& g = j["generation"];
    read_opt(g, "temperature", c.generation.temperature, "generation.");
    read_opt(g, "trial_temperature", c.generation.trial_temperature, "generation.");
    read_opt(g, "max_tokens", c.generation.max_tokens, "generation.");
  }
  if (j.contains("retry")) {
    const auto& r = j["retry"];
    read_opt(r, "max_attempts", c.retry.max_attempts, "retry.");
    int ms = -1;
    read_opt(r, "initial_backoff_ms", ms, "retry.");
    if (ms >= 0) c.retry.initial_backoff = std::chrono::milliseconds(ms);
    ms = -1;
    read_opt(r, "max_backoff_ms", ms, "retry.");
    if (ms >= 0) c.retry.max_backoff = std::chrono::milliseconds(ms);
    read_opt(r, "max_in_flight", c.max_in_flight, "retry.");
    read_opt(r, "timeout_s", c.timeout_s, "retry.");
  }
  validate(c);
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  auto dir = fs::path(path).parent_path();
  return config_from_json(j, dir.empty() ? "." : dir.string());
}

void validate(const Config& c) {
  if (c.backend != "mock" && c.backend != "http")
    throw ConfigError("config key 'backend' must be \"mock\" or \"http\"");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw ConfigError("config key 'tau' must lie in (0, 1]");
  if (c.m_trials < 1) throw ConfigError("config key 'm_trials' must be >= 1");
  if (!(c.band_lo < c.band_hi)) throw ConfigError("config key 'band' needs lo < hi");
  if (c.target_rl_size < 1) throw ConfigError("config key 'target_rl_size' must be >= 1");
  if (c.parallelism < 1) throw ConfigError("config key 'parallelism' must be >= 1");
  if (c.max_in_flight < 1) throw ConfigError("config key 'retry.max_in_flight' must be >= 1");
  if (c.retry.max_attempts < 1) throw ConfigError("config key 'retry.max_attempts' must be >= 1");
  if (c.generation.max_tokens < 1)
    throw ConfigError("config key 'generation.max_tokens' must be >= 1");
}

std::shared_ptr<gateway::Backend> make_backend(const Config& cfg,
                                               const std::set<gateway::ModelRole>& roles) {
  if (cfg.backend == "mock") {
    if (!cfg.mock_table_path) throw ConfigError("missing config key 'mock_table_path'");
    return gateway::MockBackend::from_file(*cfg.mock_table_path);
  }
  gateway::HttpBackendOptions opts;
  for (auto role : roles) {
    const std::string name(gateway::to_string(role));
    auto it = cfg.endpoints.find(role);
    if (it == cfg.endpoints.end() || it->second.url.empty())
      throw ConfigError("missing config key 'endpoints." + name + ".url'");
    if (it->second.model.empty())
      throw ConfigError("missing config key 'endpoints." + name + ".model'");
    opts.endpoints[role] = it->second;
  }
  if (const char* key = std::getenv("TOC_API_KEY")) opts.api_key = std::string(key);
  opts.media_url_template = cfg.media_url_template;
  opts.timeout = std::chrono::seconds(cfg.timeout_s);
  return std::make_shared<gateway::HttpBackend>(std::move(opts), gateway::make_http_transport());
}

std::unique_ptr<gateway::Gateway> make_gateway(const Config& cfg,
                                               const std::set<gateway::ModelRole>& roles) {
  return std::make_unique<gateway::Gateway>(make_backend(cfg, roles), cfg.retry,
                                            cfg.max_in_flight);
}

}  // namespace toc
