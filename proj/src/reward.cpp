#include "toc/reward.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <exception>

#include "toc/errors.hpp"

namespace toc::reward {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

void check_finite(std::span<const double> xs, const char* what) {
  for (double v : xs)
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value in ") + what);
}

}  // namespace

std::optional<std::string> extract_answer(std::string_view response) {
  static constexpr std::string_view kOpen = "<answer>";
  static constexpr std::string_view kClose = "</answer>";
  const auto close = response.rfind(kClose);
  if (close == std::string_view::npos) return std::nullopt;
  const auto open = response.substr(0, close).rfind(kOpen);
  if (open == std::string_view::npos) return std::nullopt;
  const auto body = response.substr(open + kOpen.size(), close - open - kOpen.size());
  return std::string(trim(body));
}

bool answers_match(const std::optional<std::string>& extracted, std::string_view gold,
                   QaType type, const MatchOptions& opts) {
  if (!extracted) return false;
  const auto got = trim(*extracted);
  const auto want = trim(gold);
  if (got.empty()) return false;
  switch (type) {
    case QaType::kMultipleChoice:
      return iequals(got, want);
    case QaType::kNumerical:
      if (opts.numeric_rel_tol) {
        const auto a = parse_number(got), b = parse_number(want);
        if (a && b) {
          const double scale = std::max(std::abs(*b), 1e-300);
          return std::abs(*a - *b) <= *opts.numeric_rel_tol * scale;
        }
      }
      return got == want;
    case QaType::kOpenEnded:
      return got == want;
  }
  return false;
}

double vanilla_reward(bool correct) { return correct ? 1.0 : 0.0; }

double rd_reward(bool correct, int alpha, int m) {
  if (m < 1 || alpha < 0 || alpha > m)
    throw RangeError("rd_reward needs 0 <= alpha <= m and m >= 1");
  return correct ? std::exp(-static_cast<double>(alpha) / m) : 0.0;
}

std::vector<double> normalize_advantages(std::span<const double> rewards) {
  const size_t g = rewards.size();
  if (g < 2) throw GroupTooSmallError("advantage normalisation needs at least 2 responses");
  check_finite(rewards, "rewards");

  std::vector<double> out(g, 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return out;

  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(g);
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / static_cast<double>(g - 1));
  for (size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

std::vector<std::vector<double>> normalize_advantages_batch_serial(
    const std::vector<std::vector<double>>& groups) {
  std::vector<std::vector<double>> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(normalize_advantages(g));
  return out;
}

std::vector<std::vector<double>> normalize_advantages_batch(
    const std::vector<std::vector<double>>& groups) {
  const auto n = static_cast<std::ptrdiff_t>(groups.size());
  std::vector<std::vector<double>> out(groups.size());
  std::vector<std::exception_ptr> errors(groups.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = normalize_advantages(groups[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

ClosedFormAdvantages closed_form_advantages(int g, int x) {
  if (g < 2 || x < 0 || x > g) throw RangeError("closed form needs G >= 2 and 0 <= x <= G");
  const double G = g, X = x;
  ClosedFormAdvantages out;
  if (x > 0) out.correct = std::sqrt((G - 1.0) * (G - X) / (G * X));
  if (x < g) out.wrong = -std::sqrt(X * (G - 1.0) / (G * (G - X)));
  return out;
}

std::vector<double> scale_advantages(std::span<const double> advantages, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw RangeError("gamma must lie in (0, 1]");
  std::vector<double> out(advantages.begin(), advantages.end());
  for (double& a : out) a *= gamma;
  return out;
}

RewardGroup evaluate_group(double gamma, const std::vector<bool>& correct,
                           const std::vector<std::string>& responses) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw RangeError("gamma must lie in (0, 1]");
  if (!responses.empty() && responses.size() != correct.size())
    throw MisalignedSequencesError("responses and correctness flags differ in length");

  RewardGroup grp;
  grp.gamma = gamma;
  grp.size = static_cast<int>(correct.size());
  std::vector<double> rewards;
  rewards.reserve(correct.size());
  for (bool c : correct) {
    rewards.push_back(c ? gamma : 0.0);
    grp.x += c ? 1 : 0;
  }
  const auto adv = normalize_advantages(rewards);
  const auto scaled = scale_advantages(adv, gamma);
  for (size_t i = 0; i < correct.size(); ++i) {
    ResponseOutcome o;
    if (!responses.empty()) o.response_text = responses[i];
    o.correct = correct[i];
    o.reward = rewards[i];
    o.advantage = adv[i];
    o.scaled_advantage = scaled[i];
    grp.outcomes.push_back(std::move(o));
  }
  return grp;
}

double kl_estimate(std::span<const double> current, std::span<const double> ref) {
  if (current.size() != ref.size() || current.empty())
    throw MisalignedSequencesError("current and reference log-probs must align and be non-empty");
  double sum = 0.0;
  for (size_t t = 0; t < current.size(); ++t) {
    const double d = ref[t] - current[t];
    sum += std::exp(d) - d - 1.0;
  }
  return sum / static_cast<double>(current.size());
}

double group_objective(const GroupInput& group, const ObjectiveParams& params) {
  if (!(params.epsilon > 0.0)) throw RangeError("epsilon must be positive");
  if (!(params.beta >= 0.0)) throw RangeError("beta must be non-negative");
  const auto& lp = group.logprobs;
  const size_t g = group.advantages.size();
  if (g == 0) throw MisalignedSequencesError("group without responses");
  if (lp.current.size() != g || lp.old.size() != g || lp.ref.size() != g)
    throw MisalignedSequencesError("log-prob sequences and advantages differ in count");
  check_finite(group.advantages, "advantages");

  double total = 0.0;
  for (size_t i = 0; i < g; ++i) {
    const auto& cur = lp.current[i];
    const auto& old = lp.old[i];
    const auto& ref = lp.ref[i];
    if (cur.size() != old.size() || cur.size() != ref.size() || cur.empty())
      throw MisalignedSequencesError("response " + std::to_string(i) +
                                     ": log-prob sequences differ in length or are empty");
    check_finite(cur, "current log-probs");
    check_finite(old, "old log-probs");
    check_finite(ref, "reference log-probs");

    double log_ratio = 0.0;
    for (size_t t = 0; t < cur.size(); ++t) log_ratio += cur[t] - old[t];
    const double rho = std::exp(log_ratio);
    const double a = group.advantages[i];
    const double clipped = std::clamp(rho, 1.0 - params.epsilon, 1.0 + params.epsilon);
    const double surrogate = std::min(rho * a, clipped * a);
    const double kl = params.beta > 0.0 ? kl_estimate(cur, ref) : 0.0;
    total += surrogate - params.beta * kl;
  }
  const double value = total / static_cast<double>(g);
  if (!std::isfinite(value)) throw NonFiniteError("objective overflowed");
  return value;
}

double grpo_objective_serial(std::span<const GroupInput> groups, const ObjectiveParams& params) {
  if (groups.empty()) throw RangeError("objective over zero groups");
  double sum = 0.0;
  for (const auto& g : groups) sum += group_objective(g, params);
  return sum / static_cast<double>(groups.size());
}

double grpo_objective(std::span<const GroupInput> groups, const ObjectiveParams& params) {
  if (groups.empty()) throw RangeError("objective over zero groups");
  const auto n = static_cast<std::ptrdiff_t>(groups.size());
  std::vector<double> per_group(groups.size(), 0.0);
  std::vector<std::exception_ptr> errors(groups.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      per_group[i] = group_objective(groups[i], params);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  double sum = 0.0;
  for (double v : per_group) sum += v;
  return sum / static_cast<double>(groups.size());
}

}  // namespace toc::reward
