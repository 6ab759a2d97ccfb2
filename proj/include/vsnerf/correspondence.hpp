#pragma once

// Cross-view correspondences from a dataset's ground-truth surface points,
// used to distill its high-dimensional "raw" feature maps.

#include "vsnerf/dataset.hpp"
#include "vsnerf/projector.hpp"

namespace vsnerf {

/// k pairs of raw features at matching pixels of two distinct views. A pair
/// is accepted when the source pixel's surface point projects into the other
/// view and that view sees the same surface there (relative depth agreement
/// within `depth_tolerance`).
inline CorrespondenceBatch dataset_correspondences(const Dataset& ds, std::size_t k, Rng& rng,
                                                   double depth_tolerance = 1e-2) {
  require(ds.ground_truth.has_value(), "correspondences: dataset has no ground truth");
  require(ds.views.size() >= 2, "correspondences: need at least two views");
  require(k >= 2, "correspondences: need at least two pairs");
  const auto& gt = *ds.ground_truth;
  const int c = ds.views.front().features(FeatureKind::raw).channels();
  CorrespondenceBatch batch;
  batch.feats_a.resize(static_cast<Eigen::Index>(k), c);
  batch.feats_b.resize(static_cast<Eigen::Index>(k), c);
  std::vector<double> buf(static_cast<std::size_t>(c));
  std::size_t found = 0;
  const std::size_t max_attempts = 1000 * k;
  for (std::size_t attempt = 0; attempt < max_attempts && found < k; ++attempt) {
    const std::size_t a = uniform_index(rng, ds.views.size());
    std::size_t b = uniform_index(rng, ds.views.size() - 1);
    if (b >= a) ++b;
    const auto& va = ds.views[a];
    const int row = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(va.image.height)));
    const int col = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(va.image.width)));
    const Vec3 p(gt.points[a].at(row, col, 0), gt.points[a].at(row, col, 1), gt.points[a].at(row, col, 2));
    const auto proj = project(ds.views[b].camera, p);
    if (!proj) continue;
    const int rb = std::clamp(static_cast<int>(proj->v), 0, ds.views[b].image.height - 1);
    const int cb = std::clamp(static_cast<int>(proj->u), 0, ds.views[b].image.width - 1);
    if (std::abs(gt.depth[b].at(rb, cb, 0) - proj->depth) > depth_tolerance * proj->depth) continue;
    const auto row_i = static_cast<Eigen::Index>(found);
    sample_at_pixel_into(va.features(FeatureKind::raw), col + 0.5, row + 0.5, buf);
    for (int j = 0; j < c; ++j) batch.feats_a(row_i, j) = buf[static_cast<std::size_t>(j)];
    sample_at_pixel_into(ds.views[b].features(FeatureKind::raw), proj->u, proj->v, buf);
    for (int j = 0; j < c; ++j) batch.feats_b(row_i, j) = buf[static_cast<std::size_t>(j)];
    ++found;
  }
  require(found == k, "correspondences: found only ", found, " of ", k, " mutually visible pixel pairs");
  return batch;
}

}  // namespace vsnerf
