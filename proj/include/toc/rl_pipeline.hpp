#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "toc/config.hpp"
#include "toc/core_model.hpp"
#include "toc/gateway.hpp"
#include "toc/reward.hpp"

namespace toc::rl {

inline constexpr int kDefaultTrials = 8;
inline constexpr double kDefaultBandLo = 0.2;
inline constexpr double kDefaultBandHi = 0.8;

struct TrialRecord {
  std::string sample_id;
  int trial_index = 0;
  std::string raw_reply;
  std::optional<std::string> extracted;
  bool correct = false;
  std::optional<std::string> error;  // gateway failure, counted incorrect
};

void to_json(Json& j, const TrialRecord& t);

struct DemandEstimate {
  int alpha = 0;
  int m_trials = 0;
  double reasoning_demand = 1.0;
  double difficulty = 1.0;
  std::vector<TrialRecord> trials;
};

// Trial k of the direct-answer prompt, seeded with k.
gateway::ChatRequest direct_answer_request(const QaRecord& rec, int trial,
                                           const GenerationParams& gen);

// M independent no-reasoning answers; alpha counts the correct ones.
// Throws NonMultipleChoiceError.
DemandEstimate estimate_demand(gateway::Gateway& gw, const QaRecord& rec, int m_trials,
                               const GenerationParams& gen);

struct DemandRunResult {
  std::vector<RlSample> samples;    // input order, multiple choice only
  std::vector<TrialRecord> trials;  // grouped by sample, trial order
  std::map<std::string, std::size_t> skipped;
};

DemandRunResult run_estimate_demand(gateway::Gateway& gw, const std::vector<QaRecord>& qas,
                                    int m_trials, const GenerationParams& gen, int parallelism);

// Keeps lo <= difficulty <= hi, preserving order. Throws InvalidBandError.
std::vector<RlSample> filter_by_difficulty(const std::vector<RlSample>& samples,
                                           double lo = kDefaultBandLo, double hi = kDefaultBandHi);

// Difficulty tier as the reduced fraction (m - alpha) / m.
using Tier = std::pair<int, int>;
Tier tier_of(const RlSample& s);

struct BalanceResult {
  std::vector<RlSample> samples;  // input order
  std::map<Tier, std::size_t> per_tier;
  std::optional<std::string> warning;
};

// Equal quota floor(target / tiers) per tier by seeded sampling without
// replacement, remainder filled round-robin from tiers with surplus.
// Returns min(target, |samples|) samples; deterministic for a given seed.
BalanceResult balance_tiers(const std::vector<RlSample>& samples, int target, std::uint64_t seed);

}  // namespace toc::rl
