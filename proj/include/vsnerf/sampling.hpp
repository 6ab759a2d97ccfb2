#pragma once

// Final ray samples: inverse-transform importance sampling of per-bin
// weights, plus the uniform and stratified baselines.

#include "vsnerf/consistency.hpp"

namespace vsnerf {

struct BinWeights {
  std::vector<double> edges;    // M increasing depths
  std::vector<double> weights;  // M - 1 non-negative bin masses

  void validate() const {
    require(edges.size() >= 2 && weights.size() + 1 == edges.size(), "bins: need M >= 2 edges and M - 1 weights");
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      require(edges[i] < edges[i + 1], "bins: edges must be strictly increasing");
    for (double w : weights) require(std::isfinite(w) && w >= 0.0, "bins: weights must be finite and >= 0");
  }
};

struct SampleSet {
  std::vector<double> depths;

  std::size_t size() const { return depths.size(); }
};

/// Bin weight = mean of the two endpoint scores plus a constant floor.
inline BinWeights bins_from_profile(const ConsistencyProfile& profile, double floor = 0.01) {
  require(profile.depths.size() >= 2 && profile.scores.size() == profile.depths.size(),
          "bins_from_profile: need M >= 2 scored pre-samples");
  require(floor >= 0.0, "bins_from_profile: floor must be non-negative");
  BinWeights bins;
  bins.edges = profile.depths;
  bins.weights.resize(profile.depths.size() - 1);
  for (std::size_t i = 0; i + 1 < profile.scores.size(); ++i)
    bins.weights[i] = 0.5 * (profile.scores[i] + profile.scores[i + 1]) + floor;
  return bins;
}

/// Inverse-transform sampling of the piecewise-constant density whose bin
/// masses are the normalized weights. One stratified variate per 1/S slice
/// of [0, 1), so the output is already sorted.
inline SampleSet pdf_sample(const BinWeights& bins, int count, Rng& rng) {
  bins.validate();
  require(count >= 1, "pdf_sample: need at least one sample");
  const std::size_t nb = bins.weights.size();
  std::vector<double> cdf(nb + 1, 0.0);
  for (std::size_t b = 0; b < nb; ++b) cdf[b + 1] = cdf[b] + bins.weights[b];
  const double total = cdf.back();
  require(total > 0.0, "pdf_sample: all bin weights are zero");
  for (double& c : cdf) c /= total;
  cdf.back() = 1.0;

  SampleSet out;
  out.depths.resize(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double u = (k + uniform01(rng)) / count;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t b = static_cast<std::size_t>(it - cdf.begin());
    b = std::clamp<std::size_t>(b, 1, nb) - 1;
    const double mass = cdf[b + 1] - cdf[b];
    const double frac = mass > 0.0 ? std::clamp((u - cdf[b]) / mass, 0.0, 1.0) : 0.0;
    out.depths[k] = bins.edges[b] + frac * (bins.edges[b + 1] - bins.edges[b]);
  }
  return out;
}

inline SampleSet uniform_sample(const Ray& ray, int count) {
  require(count >= 2, "uniform_sample: need at least 2 samples");
  SampleSet out;
  out.depths.resize(static_cast<std::size_t>(count));
  const double step = (ray.t_far - ray.t_near) / (count - 1);
  for (int i = 0; i < count; ++i) out.depths[i] = ray.t_near + step * i;
  out.depths.back() = ray.t_far;
  return out;
}

inline SampleSet stratified_sample(const Ray& ray, int count, Rng& rng) {
  require(count >= 2, "stratified_sample: need at least 2 samples");
  SampleSet out;
  out.depths.resize(static_cast<std::size_t>(count));
  const double width = (ray.t_far - ray.t_near) / count;
  for (int i = 0; i < count; ++i) out.depths[i] = ray.t_near + (i + uniform01(rng)) * width;
  return out;
}

/// Quadrature spacing: gaps between consecutive samples, the last gap repeated.
inline std::vector<double> sample_spacing(std::span<const double> depths) {
  require(depths.size() >= 2, "sample_spacing: need at least two samples to define spacing");
  std::vector<double> deltas(depths.size());
  for (std::size_t i = 0; i + 1 < depths.size(); ++i) deltas[i] = depths[i + 1] - depths[i];
  deltas.back() = deltas[deltas.size() - 2];
  return deltas;
}

}  // namespace vsnerf
