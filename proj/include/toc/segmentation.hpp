#pragma once

#include <string>
#include <vector>

#include "toc/core_model.hpp"

namespace toc::segmentation {

inline constexpr double kDefaultTau = 0.85;

// Precomputed shot boundaries of one video plus one embedding per shot.
struct ShotBoundarySet {
  std::string video_id;
  std::vector<double> boundaries_s;           // strictly increasing, starts at 0
  std::vector<std::vector<double>> embeddings;  // boundaries_s.size() - 1 vectors

  size_t shot_count() const { return boundaries_s.empty() ? 0 : boundaries_s.size() - 1; }
  bool operator==(const ShotBoundarySet&) const = default;
};

void validate(const ShotBoundarySet& shots);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Greedy left-to-right stitching: the running clip absorbs the next shot
// while the cosine similarity of their embeddings is >= tau. The merged
// embedding is the duration-weighted mean of the unit-normalised inputs,
// renormalised. Output clips are re-indexed 0..N-1.
std::vector<Clip> stitch(const ShotBoundarySet& shots, double tau = kDefaultTau);

// Per-video stitching over a batch. The OpenMP variant and the serial
// reference return identical results in input order.
std::vector<std::vector<Clip>> stitch_all(const std::vector<ShotBoundarySet>& videos,
                                          double tau = kDefaultTau);
std::vector<std::vector<Clip>> stitch_all_serial(const std::vector<ShotBoundarySet>& videos,
                                                 double tau = kDefaultTau);

void to_json(Json& j, const ShotBoundarySet& s);
void from_json(const Json& j, ShotBoundarySet& s);

}  // namespace toc::segmentation
