#pragma once

// Pre-sampling along rays and the multi-view consistency score of each
// pre-sample: the fraction of views (other than the ray's own) in which both
// the projected color and the projected distilled feature match the ray's
// reference pixel after per-ray normalization of all gathered measures.

#include "vsnerf/dataset.hpp"

namespace vsnerf {

struct PreSampleSet {
  std::vector<double> depths;

  std::size_t size() const { return depths.size(); }
};

/// Default uniform-spacing cutoff: where the ray leaves the ball in which the
/// scene contraction is the identity (or its closest approach to the origin
/// when it never enters), kept strictly inside (t_near, t_far].
inline double uniform_cutoff(const Ray& ray, double contraction_radius = 1.0) {
  double t_s = -ray.origin.dot(ray.direction);  // closest approach
  if (auto hit = intersect_sphere(ray.origin, ray.direction, Vec3::Zero(), contraction_radius)) t_s = hit->second;
  const double span = ray.t_far - ray.t_near;
  return std::clamp(t_s, ray.t_near + 1e-3 * span, ray.t_far);
}

/// M depths: uniform on [t_near, t_s], then gaps growing by `growth` until
/// t_far. The number of uniform points is the largest count for which the
/// geometric tail still reaches t_far; the tail is then scaled to end exactly
/// at t_far.
inline PreSampleSet pre_sample(const Ray& ray, int m, double t_s, double growth = 1.05) {
  require(m >= 2, "pre_sample: need at least 2 pre-samples, got ", m);
  require(ray.t_near < t_s && t_s <= ray.t_far, "pre_sample: cutoff ", t_s, " outside (", ray.t_near, ", ",
          ray.t_far, "]");
  require(growth > 1.0, "pre_sample: growth ratio must exceed 1");
  PreSampleSet set;
  set.depths.resize(static_cast<std::size_t>(m));
  const double range_far = ray.t_far;
  auto uniform_part = [&](int k) {
    const double h = (t_s - ray.t_near) / (k - 1);
    for (int i = 0; i < k; ++i) set.depths[i] = ray.t_near + h * i;
    set.depths[k - 1] = t_s;
    return h;
  };
  if (t_s >= range_far) {
    uniform_part(m);
    return set;
  }
  for (int k = m - 1; k >= 2; --k) {
    const int n = m - k;
    const double h = (t_s - ray.t_near) / (k - 1);
    const double reach = h * growth * (std::pow(growth, n) - 1.0) / (growth - 1.0);
    if (t_s + reach < range_far) continue;
    uniform_part(k);
    const double scale = (range_far - t_s) / reach;
    double gap = h * growth * scale;
    double t = t_s;
    for (int i = 0; i < n; ++i) {
      t += gap;
      set.depths[k + i] = t;
      gap *= growth;
    }
    set.depths[m - 1] = range_far;
    return set;
  }
  fail("pre_sample: ", m, " pre-samples cannot span [", ray.t_near, ", ", ray.t_far, "] with growth ", growth);
}

struct ReferenceFeatures {
  Eigen::VectorXd color;      // ground-truth pixel color of the ray's source view
  Eigen::VectorXd distilled;  // distilled feature at the source pixel
};

/// Reference features at texel (row, col) of a view.
inline ReferenceFeatures reference_features(const PosedView& view, int row, int col) {
  ReferenceFeatures ref;
  ref.color = Eigen::Vector3d(view.image.at(row, col, 0), view.image.at(row, col, 1), view.image.at(row, col, 2));
  const auto& d = view.features(FeatureKind::distilled);
  ref.distilled = sample_at_pixel(d, col + 0.5, row + 0.5);
  return ref;
}

struct ConsistencyProfile {
  std::vector<double> depths;
  std::vector<double> scores;   // s_i in [0, 1]
  std::vector<int> visible;     // |V_i|

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  }
};

inline constexpr std::size_t kNoSourceView = static_cast<std::size_t>(-1);

/// Normalized-measure test. Similarities pass above +delta; negated,
/// RMS-normalized distances are never positive, so they pass above -delta
/// (distance below delta times the per-ray RMS distance).
inline bool passes_threshold(double normalized, Metric metric, double delta) {
  return metric == Metric::cosine ? normalized > delta : normalized > -delta;
}

/// Raw measures gathered for a set of 3D points against every visible view.
struct GatheredMeasures {
  std::vector<std::size_t> point;  // owning point index per entry
  std::vector<double> color;       // euclidean distances
  std::vector<double> distilled;   // cosine similarities
  std::vector<int> visible;        // |V_i| per point

  void gather(std::span<const Vec3> points, std::span<const PosedView> views, std::size_t source,
              const ReferenceFeatures& ref) {
    visible.assign(points.size(), 0);
    point.clear();
    color.clear();
    distilled.clear();
    const Eigen::Index dc = ref.distilled.size();
    std::vector<double> color_buf(3), dist_buf(static_cast<std::size_t>(dc));
    const double ref_dist_norm = ref.distilled.norm();
    std::vector<const FeatureMap*> cmaps(views.size()), dmaps(views.size());
    for (std::size_t j = 0; j < views.size(); ++j) {
      if (j == source) continue;
      cmaps[j] = &views[j].features(FeatureKind::color);
      dmaps[j] = &views[j].features(FeatureKind::distilled);
      require(dmaps[j]->channels() == dc, "vc_score: distilled feature dimension mismatch");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (std::size_t j = 0; j < views.size(); ++j) {
        if (j == source) continue;
        const auto proj = project(views[j].camera, points[i]);
        if (!proj) continue;
        const auto& cmap = *cmaps[j];
        const auto& dmap = *dmaps[j];
        sample_at_pixel_into(cmap, proj->u, proj->v, color_buf);
        sample_at_pixel_into(dmap, proj->u, proj->v, dist_buf);
        double sq = 0.0;
        for (int c = 0; c < 3; ++c) sq += (color_buf[c] - ref.color[c]) * (color_buf[c] - ref.color[c]);
        double dot = 0.0, nn = 0.0;
        for (Eigen::Index c = 0; c < dc; ++c) {
          dot += dist_buf[c] * ref.distilled[c];
          nn += dist_buf[c] * dist_buf[c];
        }
        const double denom = std::sqrt(nn) * ref_dist_norm;
        point.push_back(i);
        color.push_back(std::sqrt(sq));
        distilled.push_back(denom > 0.0 ? dot / denom : 0.0);
        ++visible[i];
      }
    }
  }

  /// Joint normalization of each kind, then the per-point pass fraction.
  std::vector<double> scores(double delta) const {
    std::vector<double> s(visible.size(), 0.0);
    if (point.empty()) return s;
    // A kind whose measures are all zero carries no signal and fails every test.
    auto degenerate = [](const std::vector<double>& m) {
      return std::all_of(m.begin(), m.end(), [](double x) { return x == 0.0; });
    };
    if (degenerate(color) || degenerate(distilled)) return s;
    const auto nc = normalize_measures(color, Metric::euclidean);
    const auto nd = normalize_measures(distilled, Metric::cosine);
    for (std::size_t e = 0; e < point.size(); ++e)
      if (passes_threshold(nc[e], Metric::euclidean, delta) && passes_threshold(nd[e], Metric::cosine, delta))
        s[point[e]] += 1.0;
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = visible[i] > 0 ? s[i] / visible[i] : 0.0;
    return s;
  }
};

struct VcScore {
  double score = 0.0;
  int visible = 0;
};

/// Consistency score of a single point, normalizing over its own measures.
inline VcScore vc_score(const Vec3& point, std::span<const PosedView> views, std::size_t source,
                        const ReferenceFeatures& ref, double delta) {
  GatheredMeasures g;
  g.gather(std::span<const Vec3>(&point, 1), views, source, ref);
  return {g.scores(delta).front(), g.visible.front()};
}

/// Scores every pre-sample of a ray, normalizing all gathered measures of the
/// ray jointly per feature kind.
inline ConsistencyProfile profile_ray(const Ray& ray, const PreSampleSet& pre, std::span<const PosedView> views,
                                      std::size_t source, const ReferenceFeatures& ref, double delta) {
  std::vector<Vec3> points;
  points.reserve(pre.size());
  for (double t : pre.depths) points.push_back(ray.at(t));
  GatheredMeasures g;
  g.gather(points, views, source, ref);
  ConsistencyProfile profile;
  profile.depths = pre.depths;
  profile.scores = g.scores(delta);
  profile.visible = std::move(g.visible);
  return profile;
}

// ---------------------------------------------------------------------------
// Projection-feature storage estimate: |B| x M x N x C scalars.

inline std::uint64_t memory_estimate(std::uint64_t batch, std::uint64_t presamples, std::uint64_t views,
                                     std::uint64_t channels, std::uint64_t bytes_per_scalar) {
  require(batch > 0 && presamples > 0 && views > 0 && channels > 0 && bytes_per_scalar > 0,
          "memory_estimate: all dimensions must be positive");
  std::uint64_t total = 1;
  for (std::uint64_t f : {batch, presamples, views, channels, bytes_per_scalar})
    if (__builtin_mul_overflow(total, f, &total)) fail("memory_estimate: byte count overflows 64 bits");
  return total;
}

/// Decimal-unit rendering, e.g. 80530636800 -> "80.53 GB".
inline std::string human_bytes(std::uint64_t bytes) {
  static const char* units[] = {"B", "kB", "MB", "GB", "TB", "PB", "EB"};
  double value = static_cast<double>(bytes);
  int unit = 0;
  while (value >= 1000.0 && unit < 6) {
    value /= 1000.0;
    ++unit;
  }
  char buf[64];
  if (unit == 0)
    std::snprintf(buf, sizeof(buf), "%llu B", static_cast<unsigned long long>(bytes));
  else
    std::snprintf(buf, sizeof(buf), "%.2f %s", value, units[unit]);
  return buf;
}

}  // namespace vsnerf
