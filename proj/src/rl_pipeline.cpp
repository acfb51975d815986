#include "toc/rl_pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "toc/prompts.hpp"
#include "toc/worker_pool.hpp"

namespace toc::rl {

namespace {

// Uniform draw in [0, n) without modulo bias.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % n);
  for (;;) {
    const std::uint64_t v = rng();
    if (v < limit) return v % n;
  }
}

bool tier_less(const Tier& a, const Tier& b) {
  return static_cast<long long>(a.first) * b.second < static_cast<long long>(b.first) * a.second;
}

}  // namespace

void to_json(Json& j, const TrialRecord& t) {
  j = Json{{"sample_id", t.sample_id},
           {"trial_index", t.trial_index},
           {"raw_reply", t.raw_reply},
           {"extracted", t.extracted ? Json(*t.extracted) : Json(nullptr)},
           {"correct", t.correct}};
  if (t.error) j["error"] = *t.error;
}

gateway::ChatRequest direct_answer_request(const QaRecord& rec, int trial,
                                           const GenerationParams& gen) {
  gateway::ChatRequest req;
  req.model_role = gateway::ModelRole::kMllm;
  req.messages.push_back(gateway::Message{
      "user",
      prompts::render_prompt(prompts::TemplateName::kDirectAnswer,
                             {{"Question", full_question(rec.qa)}}),
      {gateway::MediaRef{rec.video_id, {}}}});
  req.temperature = gen.trial_temperature;
  req.max_tokens = gen.max_tokens;
  req.seed = trial;
  return req;
}

DemandEstimate estimate_demand(gateway::Gateway& gw, const QaRecord& rec, int m_trials,
                               const GenerationParams& gen) {
  if (rec.qa.qa_type != QaType::kMultipleChoice)
    throw NonMultipleChoiceError("sample '" + rec.sample_id() +
                                 "' is not multiple choice; demand is estimated on "
                                 "multiple-choice questions only");
  if (m_trials < 1) throw RangeError("m_trials must be >= 1");

  DemandEstimate est;
  est.m_trials = m_trials;
  for (int k = 0; k < m_trials; ++k) {
    TrialRecord t;
    t.sample_id = rec.sample_id();
    t.trial_index = k;
    try {
      t.raw_reply = gw.complete(direct_answer_request(rec, k, gen));
      t.extracted = reward::extract_answer(t.raw_reply);
      t.correct = reward::answers_match(t.extracted, rec.qa.answer, rec.qa.qa_type);
    } catch (const BackendUnavailableError& e) {
      t.error = e.what();
    } catch (const TimeoutError& e) {
      t.error = e.what();
    }
    est.alpha += t.correct ? 1 : 0;
    est.trials.push_back(std::move(t));
  }
  est.reasoning_demand = reasoning_demand(est.alpha, m_trials);
  est.difficulty = difficulty(est.alpha, m_trials);
  return est;
}

DemandRunResult run_estimate_demand(gateway::Gateway& gw, const std::vector<QaRecord>& qas,
                                    int m_trials, const GenerationParams& gen, int parallelism) {
  std::vector<std::optional<DemandEstimate>> results(qas.size());
  std::vector<std::string> skip_reason(qas.size());
  parallel_for_each(qas.size(), parallelism, [&](size_t i) {
    const auto& rec = qas[i];
    if (rec.qa.qa_type != QaType::kMultipleChoice) {
      skip_reason[i] = "non_multiple_choice";
      return;
    }
    try {
      validate_qa(rec.qa);
    } catch (const ValidationError&) {
      skip_reason[i] = "invalid_qa";
      return;
    }
    results[i] = estimate_demand(gw, rec, m_trials, gen);
  });

  DemandRunResult out;
  for (size_t i = 0; i < qas.size(); ++i) {
    if (!results[i]) {
      ++out.skipped[skip_reason[i]];
      continue;
    }
    out.samples.push_back(make_rl_sample(qas[i], results[i]->alpha, m_trials));
    for (auto& t : results[i]->trials) out.trials.push_back(std::move(t));
  }
  return out;
}

std::vector<RlSample> filter_by_difficulty(const std::vector<RlSample>& samples, double lo,
                                           double hi) {
  if (!(lo < hi)) throw InvalidBandError("difficulty band needs lo < hi");
  std::vector<RlSample> out;
  for (const auto& s : samples)
    if (s.difficulty >= lo && s.difficulty <= hi) out.push_back(s);
  return out;
}

Tier tier_of(const RlSample& s) {
  const int num = s.m_trials - s.alpha;
  const int g = std::gcd(num, s.m_trials);
  return {num / g, s.m_trials / g};
}

BalanceResult balance_tiers(const std::vector<RlSample>& samples, int target, std::uint64_t seed) {
  if (target < 1) throw RangeError("balance target must be >= 1");
  BalanceResult out;

  std::vector<Tier> tiers;
  std::vector<std::vector<size_t>> members;
  for (size_t i = 0; i < samples.size(); ++i) {
    const Tier t = tier_of(samples[i]);
    auto it = std::find(tiers.begin(), tiers.end(), t);
    if (it == tiers.end()) {
      tiers.push_back(t);
      members.emplace_back();
      it = tiers.end() - 1;
    }
    members[it - tiers.begin()].push_back(i);
  }
  // order tiers by difficulty value
  std::vector<size_t> order(tiers.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return tier_less(tiers[a], tiers[b]); });

  std::mt19937_64 rng(seed);
  for (size_t t : order) {
    auto& m = members[t];
    for (size_t i = m.size(); i > 1; --i) std::swap(m[i - 1], m[draw_below(rng, i)]);
  }

  const size_t want = std::min(static_cast<size_t>(target), samples.size());
  std::vector<size_t> take(tiers.size(), 0);
  size_t taken = 0;
  if (!tiers.empty()) {
    const size_t quota = static_cast<size_t>(target) / tiers.size();
    for (size_t t : order) {
      take[t] = std::min(quota, members[t].size());
      taken += take[t];
    }
    while (taken < want) {
      for (size_t t : order) {
        if (taken == want) break;
        if (take[t] < members[t].size()) {
          ++take[t];
          ++taken;
        }
      }
    }
  }

  std::vector<size_t> chosen;
  for (size_t t : order) {
    chosen.insert(chosen.end(), members[t].begin(), members[t].begin() + take[t]);
    out.per_tier[tiers[t]] = take[t];
  }
  std::sort(chosen.begin(), chosen.end());
  for (size_t i : chosen) out.samples.push_back(samples[i]);

  if (samples.size() < static_cast<size_t>(target))
    out.warning = "requested " + std::to_string(target) + " samples but only " +
                  std::to_string(samples.size()) + " are available";
  return out;
}

}  // namespace toc::rl
