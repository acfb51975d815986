#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "toc/errors.hpp"
#include "toc/segmentation.hpp"

using namespace toc;
using namespace toc::segmentation;

namespace {

ShotBoundarySet make_shots(std::vector<double> bounds, std::vector<std::vector<double>> emb) {
  return ShotBoundarySet{"vid", std::move(bounds), std::move(emb)};
}

// Unit vector in the plane at angle t.
std::vector<double> at_angle(double t) { return {std::cos(t), std::sin(t), 0.0}; }

struct OracleClip {
  double start, end;
};

// Enumerates every merge-decision vector and keeps those a left-to-right
// pass would actually take: decision i is "merge" exactly when the running
// clip's embedding has cosine >= tau with shot i+1.
std::vector<std::vector<OracleClip>> consistent_passes(const ShotBoundarySet& s, double tau) {
  const size_t n = s.shot_count();
  std::vector<std::vector<OracleClip>> out;
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    auto unit = [](std::vector<double> v) {
      double nn = 0;
      for (double x : v) nn += x * x;
      nn = std::sqrt(nn);
      for (double& x : v) x /= nn;
      return v;
    };
    std::vector<OracleClip> clips{{s.boundaries_s[0], s.boundaries_s[1]}};
    std::vector<double> run = unit(s.embeddings[0]);
    bool ok = true;
    for (size_t i = 1; i < n && ok; ++i) {
      const auto next = unit(s.embeddings[i]);
      double cos = 0;
      for (size_t k = 0; k < next.size(); ++k) cos += run[k] * next[k];
      const bool merge = (mask >> (i - 1)) & 1u;
      if (merge != (cos >= tau)) ok = false;
      const double w_next = s.boundaries_s[i + 1] - s.boundaries_s[i];
      if (merge) {
        const double w_run = clips.back().end - clips.back().start;
        for (size_t k = 0; k < run.size(); ++k) run[k] = w_run * run[k] + w_next * next[k];
        run = unit(run);
        clips.back().end = s.boundaries_s[i + 1];
      } else {
        run = next;
        clips.push_back({s.boundaries_s[i], s.boundaries_s[i + 1]});
      }
    }
    if (ok) out.push_back(clips);
  }
  return out;
}

void check_against_oracle(const ShotBoundarySet& s, double tau) {
  const auto passes = consistent_passes(s, tau);
  REQUIRE(passes.size() == 1);
  const auto clips = stitch(s, tau);
  REQUIRE(clips.size() == passes[0].size());
  for (size_t i = 0; i < clips.size(); ++i) {
    CHECK(clips[i].index == static_cast<int>(i));
    CHECK(clips[i].start_s == passes[0][i].start);
    CHECK(clips[i].end_s == passes[0][i].end);
  }
}

ShotBoundarySet random_shots(std::mt19937& rng, int n, int dim) {
  std::uniform_real_distribution<double> len(0.5, 6.0);
  std::normal_distribution<double> g(0.0, 1.0);
  ShotBoundarySet s;
  s.video_id = "r";
  s.boundaries_s.push_back(0.0);
  std::vector<double> base(dim);
  for (double& x : base) x = g(rng);
  for (int i = 0; i < n; ++i) {
    s.boundaries_s.push_back(s.boundaries_s.back() + len(rng));
    std::vector<double> e(dim);
    const double noise = (i % 3 == 0) ? 2.0 : 0.2;
    for (int k = 0; k < dim; ++k) e[k] = base[k] + noise * g(rng);
    s.embeddings.push_back(e);
  }
  return s;
}

}  // namespace

TEST_CASE("identical embeddings collapse into one clip") {
  auto s = make_shots({0, 3, 7, 12}, {{1, 2}, {2, 4}, {0.5, 1}});
  const auto clips = stitch(s, 0.85);
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].start_s == 0);
  CHECK(clips[0].end_s == 12);
  CHECK(clips[0].video_id == "vid");
}

TEST_CASE("orthogonal embeddings stay separate") {
  auto s = make_shots({0, 3, 7, 12}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto clips = stitch(s, 0.85);
  REQUIRE(clips.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(clips[i].index == i);
    CHECK(clips[i].start_s == s.boundaries_s[i]);
    CHECK(clips[i].end_s == s.boundaries_s[i + 1]);
  }
}

TEST_CASE("adjacent cosines 0.9 then 0.3 give two clips") {
  const double t1 = std::acos(0.9);
  const double t2 = t1 + std::acos(0.3);
  auto s = make_shots({0, 4, 6, 10}, {at_angle(0), at_angle(t1), at_angle(t2)});
  CHECK(cosine_similarity(s.embeddings[0], s.embeddings[1]) == doctest::Approx(0.9));
  CHECK(cosine_similarity(s.embeddings[1], s.embeddings[2]) == doctest::Approx(0.3));

  const auto clips = stitch(s, 0.85);
  REQUIRE(clips.size() == 2);
  CHECK(clips[0].start_s == 0);
  CHECK(clips[0].end_s == 6);
  CHECK(clips[1].start_s == 6);
  CHECK(clips[1].end_s == 10);
  check_against_oracle(s, 0.85);
}

TEST_CASE("merged embedding is the duration-weighted unit mean") {
  auto s = make_shots({0, 3, 4}, {{1, 0}, {0.9, std::sqrt(1 - 0.81)}});
  const auto clips = stitch(s, 0.85);
  REQUIRE(clips.size() == 1);
  const auto& e = *clips[0].embedding;
  const double x = (3 * 1.0 + 1 * 0.9) / 4, y = (1 * std::sqrt(0.19)) / 4;
  const double n = std::hypot(x, y);
  CHECK(e[0] == doctest::Approx(x / n).epsilon(1e-14));
  CHECK(e[1] == doctest::Approx(y / n).epsilon(1e-14));
}

TEST_CASE("random videos agree with the exhaustive pass oracle") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 9;
    const auto s = random_shots(rng, n, 4);
    for (double tau : {0.3, 0.7, 0.85, 0.95}) check_against_oracle(s, tau);
  }
}

TEST_CASE("coverage, count and determinism") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_shots(rng, 1 + trial % 20, 8);
    const auto clips = stitch(s, 0.85);
    CHECK(clips.size() <= s.shot_count());
    double total = 0;
    for (size_t i = 0; i < clips.size(); ++i) {
      total += clips[i].duration();
      if (i > 0) CHECK(clips[i].start_s == clips[i - 1].end_s);
    }
    CHECK(clips.front().start_s == s.boundaries_s.front());
    CHECK(clips.back().end_s == s.boundaries_s.back());
    CHECK(std::abs(total - (s.boundaries_s.back() - s.boundaries_s.front())) <= 1e-9);
    CHECK(stitch(s, 0.85) == clips);
  }
}

TEST_CASE("small tau merges everything with positive similarity") {
  auto s = make_shots({0, 1, 2, 3, 4}, {{1, 0.1}, {1, 0.5}, {0.2, 1}, {1, 1}});
  CHECK(stitch(s, 1e-6).size() == 1);
}

TEST_CASE("stitching errors") {
  CHECK_THROWS_AS(stitch(make_shots({0}, {}), 0.85), EmptyInputError);
  CHECK_THROWS_AS(stitch(make_shots({0, 1, 2}, {{1, 0}}), 0.85), DimensionMismatchError);
  CHECK_THROWS_AS(stitch(make_shots({0, 1, 2}, {{1, 0}, {1, 0, 0}}), 0.85),
                  DimensionMismatchError);
  CHECK_THROWS_AS(stitch(make_shots({0, 1, 2}, {{1, 0}, {0, 0}}), 0.85), ZeroVectorError);
  CHECK_THROWS_AS(stitch(make_shots({0, 2, 1}, {{1, 0}, {1, 0}}), 0.85), ValidationError);
  auto ok = make_shots({0, 1}, {{1}});
  CHECK_THROWS_AS(stitch(ok, 0.0), RangeError);
  CHECK_THROWS_AS(stitch(ok, 1.01), RangeError);
  CHECK_NOTHROW(stitch(ok, 1.0));
}

TEST_CASE("batch stitching matches the serial reference") {
  std::mt19937 rng(5);
  std::vector<ShotBoundarySet> videos;
  for (int i = 0; i < 64; ++i) {
    videos.push_back(random_shots(rng, 1 + i % 30, 16));
    videos.back().video_id = "v" + std::to_string(i);
  }
  CHECK(stitch_all(videos, 0.85) == stitch_all_serial(videos, 0.85));

  videos[10].embeddings.pop_back();
  CHECK_THROWS_AS(stitch_all(videos, 0.85), DimensionMismatchError);
}

TEST_CASE("shot records round trip") {
  auto s = make_shots({0, 1.5, 3.25}, {{1, 0}, {0.25, -1}});
  CHECK(Json(s).get<ShotBoundarySet>() == s);
  CHECK_THROWS_AS(Json::parse("{\"video_id\":\"v\"}").get<ShotBoundarySet>(), RecordError);
}
