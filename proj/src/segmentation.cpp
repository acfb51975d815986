#include "toc/segmentation.hpp"

#include <cmath>
#include <exception>

#include "toc/errors.hpp"

namespace toc::segmentation {

namespace {

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> normalized(const std::vector<double>& v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw ZeroVectorError("embedding has zero or non-finite norm");
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

}  // namespace

void validate(const ShotBoundarySet& shots) {
  if (shots.boundaries_s.size() < 2)
    throw EmptyInputError("video '" + shots.video_id + "' has no shots");
  if (!(shots.boundaries_s.front() >= 0.0))
    throw ValidationError("video '" + shots.video_id + "': negative first boundary");
  for (size_t i = 1; i < shots.boundaries_s.size(); ++i)
    if (!(shots.boundaries_s[i] > shots.boundaries_s[i - 1]))
      throw ValidationError("video '" + shots.video_id + "': boundaries not strictly increasing");
  if (shots.embeddings.size() != shots.shot_count())
    throw DimensionMismatchError("video '" + shots.video_id + "': expected " +
                                 std::to_string(shots.shot_count()) + " embeddings, got " +
                                 std::to_string(shots.embeddings.size()));
  const size_t dim = shots.embeddings.front().size();
  if (dim == 0) throw DimensionMismatchError("video '" + shots.video_id + "': empty embedding");
  for (const auto& e : shots.embeddings)
    if (e.size() != dim)
      throw DimensionMismatchError("video '" + shots.video_id + "': embedding dimensions differ");
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw DimensionMismatchError("cosine similarity of vectors with different dimensions");
  const double na = norm(a), nb = norm(b);
  if (!(na > 0.0) || !(nb > 0.0)) throw ZeroVectorError("cosine similarity of a zero vector");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot / (na * nb);
}

std::vector<Clip> stitch(const ShotBoundarySet& shots, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw RangeError("tau must lie in (0, 1]");
  validate(shots);

  std::vector<Clip> out;
  const auto& b = shots.boundaries_s;

  auto start_clip = [&](size_t shot) {
    Clip c;
    c.video_id = shots.video_id;
    c.index = static_cast<int>(out.size());
    c.start_s = b[shot];
    c.end_s = b[shot + 1];
    c.embedding = normalized(shots.embeddings[shot]);
    out.push_back(std::move(c));
  };

  start_clip(0);
  for (size_t shot = 1; shot < shots.shot_count(); ++shot) {
    Clip& run = out.back();
    const auto next = normalized(shots.embeddings[shot]);
    if (cosine_similarity(*run.embedding, next) < tau) {
      start_clip(shot);
      continue;
    }
    const double w_run = run.duration();
    const double w_next = b[shot + 1] - b[shot];
    std::vector<double> merged(next.size());
    for (size_t i = 0; i < next.size(); ++i)
      merged[i] = (w_run * (*run.embedding)[i] + w_next * next[i]) / (w_run + w_next);
    run.embedding = normalized(merged);
    run.end_s = b[shot + 1];
  }
  return out;
}

std::vector<std::vector<Clip>> stitch_all_serial(const std::vector<ShotBoundarySet>& videos,
                                                 double tau) {
  std::vector<std::vector<Clip>> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(stitch(v, tau));
  return out;
}

std::vector<std::vector<Clip>> stitch_all(const std::vector<ShotBoundarySet>& videos,
                                          double tau) {
  const auto n = static_cast<std::ptrdiff_t>(videos.size());
  std::vector<std::vector<Clip>> out(videos.size());
  std::vector<std::exception_ptr> errors(videos.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = stitch(videos[i], tau);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

void to_json(Json& j, const ShotBoundarySet& s) {
  j = Json{{"video_id", s.video_id}, {"boundaries_s", s.boundaries_s}, {"embeddings", s.embeddings}};
}

void from_json(const Json& j, ShotBoundarySet& s) {
  try {
    s.video_id = j.at("video_id").get<std::string>();
    s.boundaries_s = j.at("boundaries_s").get<std::vector<double>>();
    s.embeddings = j.at("embeddings").get<std::vector<std::vector<double>>>();
  } catch (const Json::exception& e) {
    throw RecordError(std::string("bad shot boundary record: ") + e.what());
  }
}

}  // namespace toc::segmentation
