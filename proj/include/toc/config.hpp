#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "toc/core_model.hpp"
#include "toc/gateway.hpp"

namespace toc {

// Decoding parameters for pipeline requests.
struct GenerationParams {
  double temperature = 0.0;
  double trial_temperature = 1.0;  // demand-estimation trials
  int max_tokens = 1024;
};

struct Config {
  std::string backend = "mock";  // "mock" | "http"
  std::map<gateway::ModelRole, gateway::Endpoint> endpoints;
  std::string media_url_template = "{video_id}";
  std::optional<std::string> mock_table_path;

  double tau = 0.85;
  int m_trials = 8;
  double band_lo = 0.2;
  double band_hi = 0.8;
  int target_rl_size = 2000;
  std::uint64_t seed = 0;
  int parallelism = 1;
  bool strict_parsing = true;
  std::optional<double> numeric_rel_tol;

  GenerationParams generation;
  gateway::RetryPolicy retry;
  int max_in_flight = 4;
  int timeout_s = 120;
};

// Throws ConfigError naming the offending key.
Config config_from_json(const Json& j, const std::string& base_dir = ".");
Config load_config(const std::string& path);
void validate(const Config& cfg);

// Backend for the configured kind, checking the keys the given roles need.
std::shared_ptr<gateway::Backend> make_backend(const Config& cfg,
                                               const std::set<gateway::ModelRole>& roles);
std::unique_ptr<gateway::Gateway> make_gateway(const Config& cfg,
                                               const std::set<gateway::ModelRole>& roles);

}  // namespace toc
