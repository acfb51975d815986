#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toc/core_model.hpp"

namespace toc::reward {

// Trimmed content of the last <answer>...</answer> block, or nullopt when
// the response carries no complete block. There is no format reward: a
// missing block makes the response incorrect and earns zero reward.
std::optional<std::string> extract_answer(std::string_view response);

struct MatchOptions {
  // Relative tolerance for numerical answers; exact string match when unset.
  std::optional<double> numeric_rel_tol;
};

// Multiple-choice labels compare case-insensitively; other types compare
// the trimmed strings exactly (numerical answers optionally within
// `numeric_rel_tol`). Empty or missing extractions never match.
bool answers_match(const std::optional<std::string>& extracted, std::string_view gold,
                   QaType type, const MatchOptions& opts = {});

double vanilla_reward(bool correct);

// exp(-alpha / m) when correct, 0 otherwise. Throws RangeError.
double rd_reward(bool correct, int alpha, int m);

// (r_i - mean) / std with the sample (G - 1) standard deviation. A group
// whose rewards are all equal yields all-zero advantages.
// Throws GroupTooSmallError when G < 2.
std::vector<double> normalize_advantages(std::span<const double> rewards);

// Batched group normalisation: OpenMP over groups, and the serial
// reference it is tested against. Results are identical.
std::vector<std::vector<double>> normalize_advantages_batch(
    const std::vector<std::vector<double>>& groups);
std::vector<std::vector<double>> normalize_advantages_batch_serial(
    const std::vector<std::vector<double>>& groups);

// Advantages of a binary group with x correct out of G, independent of the
// reward magnitude. `correct` is absent for x = 0 and `wrong` for x = G.
struct ClosedFormAdvantages {
  std::optional<double> correct;
  std::optional<double> wrong;
};
ClosedFormAdvantages closed_form_advantages(int g, int x);

// A_i * gamma. Throws RangeError unless gamma is in (0, 1].
std::vector<double> scale_advantages(std::span<const double> advantages, double gamma);

struct ResponseOutcome {
  std::string response_text;
  bool correct = false;
  double reward = 0.0;
  double advantage = 0.0;
  double scaled_advantage = 0.0;
};

struct RewardGroup {
  double gamma = 1.0;
  int size = 0;
  int x = 0;  // number of correct responses
  std::vector<ResponseOutcome> outcomes;
};

// Rewards, advantages and demand-scaled advantages for one group of
// responses to a question with reasoning demand `gamma`.
RewardGroup evaluate_group(double gamma, const std::vector<bool>& correct,
                           const std::vector<std::string>& responses = {});

// Token log-probabilities per response under the current, old and
// reference policies.
struct PolicyLogProbs {
  std::vector<std::vector<double>> current;
  std::vector<std::vector<double>> old;
  std::vector<std::vector<double>> ref;
};

struct GroupInput {
  PolicyLogProbs logprobs;
  std::vector<double> advantages;  // already demand-scaled
};

struct ObjectiveParams {
  double epsilon = 0.2;
  double beta = 0.0;
};

// Per-response KL estimate: token mean of exp(d) - d - 1, d = ref - current.
double kl_estimate(std::span<const double> current, std::span<const double> ref);

// Mean over responses of min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)
// minus beta * KL, where rho is the sequence-level ratio
// exp(sum current - sum old).
double group_objective(const GroupInput& group, const ObjectiveParams& params);

// Mean of group_objective over groups. Per-group terms are computed in
// parallel and summed in input order, so both variants agree bit for bit.
// Throws RangeError, MisalignedSequencesError or NonFiniteError.
double grpo_objective(std::span<const GroupInput> groups, const ObjectiveParams& params);
double grpo_objective_serial(std::span<const GroupInput> groups, const ObjectiveParams& params);

}  // namespace toc::reward
