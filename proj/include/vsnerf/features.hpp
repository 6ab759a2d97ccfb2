#pragma once

// Feature maps, bilinear lookup, similarity measures and their per-ray
// RMS normalization.

#include "vsnerf/image.hpp"

#include <Eigen/Dense>

namespace vsnerf {

enum class FeatureKind { color, raw, distilled };
enum class Metric { euclidean, cosine };

inline const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::color: return "color";
    case FeatureKind::raw: return "raw";
    case FeatureKind::distilled: return "distilled";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(const std::string& name) {
  if (name == "color") return FeatureKind::color;
  if (name == "raw") return FeatureKind::raw;
  if (name == "distilled") return FeatureKind::distilled;
  fail("unknown feature kind \"", name, "\"");
}

inline Metric default_metric(FeatureKind kind) {
  return kind == FeatureKind::color ? Metric::euclidean : Metric::cosine;
}

struct FeatureMap {
  Grid<float> grid;
  FeatureKind kind = FeatureKind::raw;
  Metric metric = Metric::cosine;
  int downscale = 1;  // feature texel = downscale x downscale image pixels

  FeatureMap() = default;
  FeatureMap(Grid<float> g, FeatureKind k, int down = 1)
      : grid(std::move(g)), kind(k), metric(default_metric(k)), downscale(down) {
    validate();
  }

  int height() const { return grid.height; }
  int width() const { return grid.width; }
  int channels() const { return grid.channels; }

  void validate() const {
    require(grid.channels >= 1, "feature map: needs at least one channel");
    require(downscale >= 1, "feature map: downscale must be >= 1");
    if (kind == FeatureKind::color) {
      require(grid.channels == 3 && metric == Metric::euclidean, "feature map: color maps are 3-channel euclidean");
      for (float x : grid.data) require(x >= 0.0f && x <= 1.0f, "feature map: color values must lie in [0, 1]");
    }
    if (kind == FeatureKind::distilled) require(metric == Metric::cosine, "feature map: distilled maps use cosine");
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

/// Bilinear blend in texel coordinates; texel (i, j) sits at (u, v) = (j, i).
inline void interpolate_bilinear_into(const FeatureMap& map, double u, double v, std::span<double> out) {
  const auto& g = map.grid;
  if (!(u >= 0.0 && u <= g.width - 1 && v >= 0.0 && v <= g.height - 1))
    fail("interpolate_bilinear: (", u, ", ", v, ") outside ", g.width, "x", g.height, " map");
  require(out.size() == static_cast<std::size_t>(g.channels), "interpolate_bilinear: output size mismatch");
  const int j0 = std::min(static_cast<int>(u), std::max(g.width - 2, 0));
  const int i0 = std::min(static_cast<int>(v), std::max(g.height - 2, 0));
  const int j1 = std::min(j0 + 1, g.width - 1);
  const int i1 = std::min(i0 + 1, g.height - 1);
  const double a = u - j0;
  const double b = v - i0;
  const double w00 = (1.0 - a) * (1.0 - b), w01 = a * (1.0 - b), w10 = (1.0 - a) * b, w11 = a * b;
  const float* p00 = &g.at(i0, j0);
  const float* p01 = &g.at(i0, j1);
  const float* p10 = &g.at(i1, j0);
  const float* p11 = &g.at(i1, j1);
  for (int c = 0; c < g.channels; ++c) out[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
}

inline Eigen::VectorXd interpolate_bilinear(const FeatureMap& map, double u, double v) {
  Eigen::VectorXd out(map.channels());
  interpolate_bilinear_into(map, u, v, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

/// Looks up a feature at continuous image-pixel coordinates (texel centers at
/// +0.5), accounting for downscale and clamping to the texel-center hull.
inline Eigen::VectorXd sample_at_pixel(const FeatureMap& map, double u, double v) {
  const double s = map.downscale;
  const double tu = std::clamp(u / s - 0.5, 0.0, static_cast<double>(map.width() - 1));
  const double tv = std::clamp(v / s - 0.5, 0.0, static_cast<double>(map.height() - 1));
  return interpolate_bilinear(map, tu, tv);
}

inline void sample_at_pixel_into(const FeatureMap& map, double u, double v, std::span<double> out) {
  const double s = map.downscale;
  const double tu = std::clamp(u / s - 0.5, 0.0, static_cast<double>(map.width() - 1));
  const double tv = std::clamp(v / s - 0.5, 0.0, static_cast<double>(map.height() - 1));
  interpolate_bilinear_into(map, tu, tv, out);
}

inline double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

/// Raw measure between a reference and a projected feature: euclidean
/// distance or cosine similarity depending on the map's metric.
inline double measure(const Eigen::VectorXd& reference, const Eigen::VectorXd& other, Metric metric) {
  return metric == Metric::euclidean ? (reference - other).norm() : cosine_similarity(reference, other);
}

/// Divides each measure by the root mean square of the set and negates
/// distances so that larger always means more similar. An all-zero set maps
/// to all zeros.
inline std::vector<double> normalize_measures(std::span<const double> raw, Metric metric) {
  require(!raw.empty(), "normalize_measures: empty measure set");
  double sum_sq = 0.0;
  for (double m : raw) sum_sq += m * m;
  std::vector<double> out(raw.size(), 0.0);
  if (sum_sq == 0.0) return out;
  const double rms = std::sqrt(sum_sq / static_cast<double>(raw.size()));
  const double sign = metric == Metric::euclidean ? -1.0 : 1.0;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = sign * raw[i] / rms;
  return out;
}

// ---------------------------------------------------------------------------
// FMAP files: "FMAP", u32 version=1, u32 H, u32 W, u32 C, u32 downscale,
// then H*W*C little-endian f32, row-major, channel-last.

inline constexpr std::uint32_t kFmapVersion = 1;

inline void write_fmap(const std::filesystem::path& path, const FeatureMap& map) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), path.string(), ": cannot open for writing");
  write_magic(os, "FMAP");
  write_le<std::uint32_t>(os, kFmapVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.height()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.width()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.channels()));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(map.downscale));
  for (float x : map.grid.data) write_le<float>(os, x);
  require(static_cast<bool>(os), path.string(), ": write failed");
}

inline FeatureMap read_fmap(const std::filesystem::path& path, FeatureKind kind) {
  const std::string what = path.string();
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), what, ": cannot open");
  expect_magic(is, "FMAP", what);
  const auto version = read_le<std::uint32_t>(is, what);
  require(version == kFmapVersion, what, ": unsupported FMAP version ", version);
  const auto h = read_le<std::uint32_t>(is, what);
  const auto w = read_le<std::uint32_t>(is, what);
  const auto c = read_le<std::uint32_t>(is, what);
  const auto down = read_le<std::uint32_t>(is, what);
  require(h > 0 && w > 0 && c > 0 && down > 0, what, ": degenerate FMAP header");
  require(static_cast<std::uint64_t>(h) * w * c <= (1ULL << 32), what, ": FMAP too large");
  Grid<float> grid(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
  for (float& x : grid.data) x = read_le<float>(is, what);
  FeatureMap map;
  map.grid = std::move(grid);
  map.kind = kind;
  map.metric = default_metric(kind);
  map.downscale = static_cast<int>(down);
  map.validate();
  return map;
}

}  // namespace vsnerf
