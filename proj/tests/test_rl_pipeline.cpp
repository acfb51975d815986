#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "mock_script.hpp"
#include "toc/errors.hpp"
#include "toc/rl_pipeline.hpp"

using namespace toc;
using namespace toc::rl;

namespace {

RlSample sample(const std::string& id, int alpha, int m = 8) {
  QaRecord rec{id, 0, testing::mc_question("q " + id, "A")};
  return make_rl_sample(rec, alpha, m);
}

// `per_tier` samples at each alpha in `alphas`.
std::vector<RlSample> supply(const std::vector<int>& alphas, int per_tier, int m = 8) {
  std::vector<RlSample> out;
  for (int i = 0; i < per_tier; ++i)
    for (int a : alphas) out.push_back(sample("s" + std::to_string(a) + "_" + std::to_string(i), a, m));
  return out;
}

std::map<double, size_t> histogram(const std::vector<RlSample>& xs) {
  std::map<double, size_t> h;
  for (const auto& s : xs) ++h[s.difficulty];
  return h;
}

}  // namespace

TEST_CASE("demand estimates from scripted trials") {
  auto mock = std::make_shared<gateway::MockBackend>();
  gateway::Gateway gw(mock, {}, 4, [](auto) {});
  QaRecord rec{"v", 0, testing::mc_question("What is picked up?", "C")};

  for (int alpha : {0, 4, 8}) {
    testing::script_trials(*mock, rec, 8, alpha);
    const auto est = estimate_demand(gw, rec, 8, {});
    CHECK(est.alpha == alpha);
    CHECK(est.trials.size() == 8);
    CHECK(est.reasoning_demand == doctest::Approx(std::exp(-alpha / 8.0)).epsilon(1e-15));
    CHECK(est.difficulty == 1.0 - alpha / 8.0);
    for (const auto& t : est.trials) {
      if (t.correct) CHECK(t.extracted == std::optional<std::string>("C"));
    }
  }
  testing::script_trials(*mock, rec, 8, 4);
  const auto est = estimate_demand(gw, rec, 8, {});
  CHECK(est.reasoning_demand == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(est.difficulty == 0.5);
  CHECK_FALSE(est.trials[4].extracted);  // "I think A" has no answer block
}

TEST_CASE("trial requests") {
  QaRecord rec{"v", 2, testing::mc_question("Q?", "B")};
  GenerationParams gen;
  gen.trial_temperature = 0.9;
  const auto r = direct_answer_request(rec, 5, gen);
  CHECK(r.model_role == gateway::ModelRole::kMllm);
  CHECK(r.seed == 5);
  CHECK(r.temperature == 0.9);
  REQUIRE(r.messages[0].media.size() == 1);
  CHECK(r.messages[0].media[0].video_id == "v");
  CHECK(r.messages[0].media[0].spans.empty());
  CHECK(r.messages[0].text.rfind(full_question(rec.qa) + "\nAnswer with only", 0) == 0);
}

TEST_CASE("failed trials count as incorrect") {
  auto mock = std::make_shared<gateway::MockBackend>();
  gateway::Gateway gw(mock, {}, 4, [](auto) {});
  QaRecord rec{"v", 0, testing::mc_question("Q?", "A")};
  mock->add(gateway::request_digest(direct_answer_request(rec, 0, {})),
            {{}, std::string("timeout")});
  const auto est = estimate_demand(gw, rec, 3, {});
  CHECK(est.alpha == 0);
  for (const auto& t : est.trials) CHECK(t.error);
  CHECK(Json(est.trials[0]).contains("error"));
}

TEST_CASE("demand needs multiple-choice questions") {
  auto mock = std::make_shared<gateway::MockBackend>();
  gateway::Gateway gw(mock, {}, 1, [](auto) {});
  QaRecord open{"v", 0, QaPair{"Why?", "because", QaType::kOpenEnded, {}}};
  CHECK_THROWS_AS(estimate_demand(gw, open, 8, {}), NonMultipleChoiceError);

  QaRecord mc{"w", 0, testing::mc_question("Q?", "B")};
  testing::script_trials(*mock, mc, 8, 5);
  const auto res = run_estimate_demand(gw, {open, mc}, 8, {}, 2);
  REQUIRE(res.samples.size() == 1);
  CHECK(res.samples[0].alpha == 5);
  CHECK(res.trials.size() == 8);
  CHECK(res.skipped.at("non_multiple_choice") == 1);
}

TEST_CASE("demand is strictly decreasing in alpha") {
  for (int m = 1; m <= 16; ++m)
    for (int a = 1; a <= m; ++a) CHECK(reasoning_demand(a, m) < reasoning_demand(a - 1, m));
}

TEST_CASE("difficulty band") {
  CHECK(filter_by_difficulty({sample("a", 7)}).empty());
  CHECK(filter_by_difficulty({sample("a", 6)}).size() == 1);
  CHECK(filter_by_difficulty({sample("a", 1)}).empty());

  std::vector<RlSample> all;
  for (int a = 0; a <= 8; ++a) all.push_back(sample("s" + std::to_string(a), a));
  std::vector<int> kept;
  for (const auto& s : filter_by_difficulty(all)) kept.push_back(s.alpha);
  CHECK(kept == std::vector<int>{2, 3, 4, 5, 6});

  // inclusive bounds
  CHECK(filter_by_difficulty({sample("b", 1, 5)}, 0.2, 0.8).size() == 1);
  CHECK(filter_by_difficulty({sample("b", 4, 5)}, 0.2, 0.8).size() == 1);
  CHECK_THROWS_AS(filter_by_difficulty(all, 0.5, 0.5), InvalidBandError);
  CHECK_THROWS_AS(filter_by_difficulty(all, 0.8, 0.2), InvalidBandError);
}

TEST_CASE("every kept sample lies in the band for any M") {
  for (int m = 1; m <= 20; ++m) {
    std::vector<RlSample> all;
    for (int a = 0; a <= m; ++a) all.push_back(sample("s" + std::to_string(a), a, m));
    for (const auto& s : filter_by_difficulty(all)) {
      CHECK(s.difficulty >= 0.2);
      CHECK(s.difficulty <= 0.8);
    }
  }
}

TEST_CASE("tiers are reduced difficulty fractions") {
  CHECK(tier_of(sample("a", 4)) == Tier{1, 2});
  CHECK(tier_of(sample("a", 2, 4)) == Tier{1, 2});
  CHECK(tier_of(sample("a", 8)) == Tier{0, 1});
  CHECK(tier_of(sample("a", 5)) == Tier{3, 8});
}

TEST_CASE("balanced sampling, 100 per tier, target 250") {
  const auto pool = supply({2, 3, 4, 5, 6}, 100);
  const auto res = balance_tiers(pool, 250, 42);
  CHECK(res.samples.size() == 250);
  CHECK_FALSE(res.warning);
  const auto h = histogram(res.samples);
  REQUIRE(h.size() == 5);
  for (const auto& [d, n] : h) CHECK(n == 50);
  for (const auto& [tier, n] : res.per_tier) CHECK(n == 50);
}

TEST_CASE("balancing is deterministic and order preserving") {
  const auto pool = supply({2, 3, 4, 5, 6}, 40);
  const auto a = balance_tiers(pool, 77, 9);
  const auto b = balance_tiers(pool, 77, 9);
  CHECK(a.samples == b.samples);
  CHECK(balance_tiers(pool, 77, 10).samples != a.samples);
  // input order kept
  std::vector<size_t> pos;
  for (const auto& s : a.samples)
    pos.push_back(std::find(pool.begin(), pool.end(), s) - pool.begin());
  CHECK(std::is_sorted(pos.begin(), pos.end()));
  std::set<std::string> ids;
  for (const auto& s : a.samples) ids.insert(s.id);
  CHECK(ids.size() == a.samples.size());
}

TEST_CASE("balance fairness with surplus supply") {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int per_tier = 30 + static_cast<int>(rng() % 20);
    const int target = 1 + static_cast<int>(rng() % (5 * 30));
    const auto res = balance_tiers(supply({2, 3, 4, 5, 6}, per_tier), target, trial);
    CHECK(res.samples.size() == static_cast<size_t>(target));
    size_t lo = SIZE_MAX, hi = 0;
    for (const auto& [tier, n] : res.per_tier) {
      lo = std::min(lo, n);
      hi = std::max(hi, n);
    }
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("under-supply") {
  auto pool = supply({2, 3, 4, 5, 6}, 360);
  const auto res = balance_tiers(pool, 2000, 1);
  CHECK(res.samples.size() == 1800);
  REQUIRE(res.warning);
  CHECK(res.warning->find("2000") != std::string::npos);

  // uneven tiers: shortfall in one tier is filled from the others
  auto uneven = supply({2, 3, 4}, 100);
  for (int i = 0; i < 10; ++i) uneven.push_back(sample("rare" + std::to_string(i), 6));
  const auto r2 = balance_tiers(uneven, 200, 3);
  CHECK(r2.samples.size() == 200);
  const auto h = histogram(r2.samples);
  CHECK(h.at(0.25) == 10);
  CHECK(h.at(0.5) + h.at(0.625) + h.at(0.75) == 190);
}

TEST_CASE("single tier") {
  const auto res = balance_tiers(supply({4}, 30), 20, 5);
  CHECK(res.samples.size() == 20);
  for (const auto& s : res.samples) CHECK(s.alpha == 4);
  CHECK(balance_tiers({}, 10, 0).samples.empty());
  CHECK_THROWS_AS(balance_tiers(supply({4}, 3), 0, 0), RangeError);
}
