#pragma once

// Procedural multi-view scenes with analytic ground truth, and the on-disk
// dataset layout (scene.json + PFM images + FMAP feature maps).

#include "vsnerf/features.hpp"
#include "vsnerf/geometry.hpp"

#include <json.hpp>

#include <map>
#include <numbers>

namespace vsnerf {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
  Vec3 color = Vec3(0.8, 0.3, 0.2);
};

struct Box {
  Vec3 lo = Vec3(-0.2, -0.2, -0.2);
  Vec3 hi = Vec3(0.2, 0.2, 0.2);
  Vec3 color = Vec3(0.2, 0.5, 0.8);
};

struct SceneSpec {
  std::vector<Sphere> spheres;
  std::vector<Box> boxes;
  double enclosure_radius = 4.0;
  int view_count = 14;
  double ring_radius = 1.6;
  double ring_height = 0.5;
  Vec3 look_at = Vec3::Zero();
  int width = 40;
  int height = 40;
  double focal = 44.0;  // pixels, shared by x and y
  double near = 0.05;
  double color_noise = 0.0;
  double feature_noise = 0.01;
  int distilled_dim = 32;
  int raw_dim = 0;  // 0 disables the high-dimensional "raw" map
  double feature_frequency = 3.0;

  double max_primitive_extent() const {
    double extent = 0.0;
    for (const auto& s : spheres) extent = std::max(extent, s.center.norm() + s.radius);
    for (const auto& b : boxes)
      for (int corner = 0; corner < 8; ++corner) {
        const Vec3 p((corner & 1) ? b.hi.x() : b.lo.x(), (corner & 2) ? b.hi.y() : b.lo.y(),
                     (corner & 4) ? b.hi.z() : b.lo.z());
        extent = std::max(extent, p.norm());
      }
    return extent;
  }

  void validate() const {
    for (const auto& s : spheres) require(s.radius > 0.0, "scene: sphere radius must be positive");
    for (const auto& b : boxes)
      require((b.hi - b.lo).minCoeff() > 0.0, "scene: box extent must be positive on every axis");
    require(enclosure_radius > max_primitive_extent(), "scene: enclosure must contain all primitives");
    require(view_count >= 2, "scene: need at least two views");
    require(ring_radius > 0.0 && Vec3(ring_radius, ring_height, 0.0).norm() < enclosure_radius,
            "scene: camera ring must lie inside the enclosure");
    require(width > 0 && height > 0 && focal > 0.0, "scene: invalid image size or focal length");
    require(near >= 0.0, "scene: near bound must be non-negative");
    require(distilled_dim >= 1 && raw_dim >= 0, "scene: invalid feature dimensions");
    require(color_noise >= 0.0 && feature_noise >= 0.0, "scene: noise levels must be non-negative");
  }
};

/// Scene with a few randomly placed spheres and boxes inside the unit ball.
inline SceneSpec random_scene_spec(std::uint64_t seed, SceneSpec base = {}) {
  Rng rng(derive_seed(seed, 0x5343454e45));
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  auto color = [&] { return Vec3(uniform(0.15, 0.95), uniform(0.15, 0.95), uniform(0.15, 0.95)); };
  base.spheres.clear();
  base.boxes.clear();
  const int n_spheres = 2 + static_cast<int>(uniform_index(rng, 2));
  for (int i = 0; i < n_spheres; ++i) {
    const double angle = uniform(0.0, 2.0 * std::numbers::pi);
    const double r = uniform(0.0, 0.45);
    base.spheres.push_back({Vec3(r * std::cos(angle), uniform(-0.25, 0.25), r * std::sin(angle)), uniform(0.15, 0.3),
                            color()});
  }
  const int n_boxes = 1 + static_cast<int>(uniform_index(rng, 2));
  for (int i = 0; i < n_boxes; ++i) {
    const Vec3 c(uniform(-0.4, 0.4), uniform(-0.3, 0.2), uniform(-0.4, 0.4));
    const Vec3 half(uniform(0.08, 0.2), uniform(0.08, 0.2), uniform(0.08, 0.2));
    base.boxes.push_back({c - half, c + half, color()});
  }
  return base;
}

struct PosedView {
  Camera camera;
  Image image;  // H x W x 3 in [0, 1]
  std::map<std::string, FeatureMap> feature_maps;

  const FeatureMap& features(FeatureKind kind) const {
    auto it = feature_maps.find(to_string(kind));
    if (it == feature_maps.end()) fail("view has no \"", to_string(kind), "\" feature map");
    return it->second;
  }
  bool has_features(FeatureKind kind) const { return feature_maps.count(to_string(kind)) != 0; }

  void validate() const {
    camera.intrinsics.validate();
    camera.pose.validate();
    require(image.height == camera.intrinsics.height && image.width == camera.intrinsics.width &&
                image.channels == 3,
            "view: image shape does not match intrinsics");
    for (const auto& [name, map] : feature_maps) {
      map.validate();
      const int d = map.downscale;
      require(map.height() == (image.height + d - 1) / d && map.width() == (image.width + d - 1) / d,
              "view: feature map \"", name, "\" does not match image size at downscale ", d);
    }
  }

  friend bool operator==(const PosedView& a, const PosedView& b) {
    return a.camera.intrinsics == b.camera.intrinsics && a.camera.pose == b.camera.pose && a.image == b.image &&
           a.feature_maps == b.feature_maps;
  }
};

struct GroundTruth {
  std::vector<Grid<double>> depth;   // camera-frame z depth per pixel
  std::vector<Grid<double>> points;  // world-space surface point per pixel
};

/// Ray bounds shared by all views: rays start at `near` and end where they
/// leave the sphere of radius `radius` about the origin (or at `far` when
/// radius is zero).
struct SceneBounds {
  double near = 0.05;
  double far = 6.0;
  double radius = 0.0;

  Ray clip(Ray ray) const {
    ray.t_near = near;
    ray.t_far = far;
    if (radius > 0.0) {
      if (auto hit = intersect_sphere(ray.origin, ray.direction, Vec3::Zero(), radius); hit && hit->second > near)
        ray.t_far = hit->second;
    }
    return ray;
  }
};

struct Dataset {
  std::vector<PosedView> views;
  std::optional<GroundTruth> ground_truth;
  SceneBounds bounds;

  /// Ray through the center of texel (row, col) of a view.
  Ray pixel_ray(std::size_t view, int row, int col) const {
    return bounds.clip(generate_ray(views.at(view).camera, col + 0.5, row + 0.5));
  }
};

// ---------------------------------------------------------------------------
// Analytic scene evaluation

namespace detail {

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  bool primitive = false;
};

inline std::optional<std::pair<double, Vec3>> intersect_box(const Vec3& o, const Vec3& d, const Box& b) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  int axis0 = -1;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < b.lo[a] || o[a] > b.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (b.lo[a] - o[a]) / d[a];
    double tb = (b.hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    t1 = std::min(t1, tb);
  }
  if (t0 > t1 || t0 <= 0.0 || axis0 < 0) return std::nullopt;
  Vec3 n = Vec3::Zero();
  n[axis0] = d[axis0] > 0.0 ? -1.0 : 1.0;
  return std::make_pair(t0, n);
}

inline Vec3 shade(const Vec3& base, const Vec3& normal) {
  static const Vec3 light = Vec3(0.35, 0.8, 0.45).normalized();
  return base * (0.55 + 0.45 * normal.dot(light));
}

inline Vec3 enclosure_color(const Vec3& dir) {
  return Vec3(0.55 + 0.25 * std::sin(2.3 * dir.x() + 0.7 * dir.y() + 0.4),
              0.6 + 0.2 * std::sin(1.9 * dir.z() - 1.1 * dir.y() + 1.3),
              0.65 + 0.25 * dir.y());
}

inline Hit trace(const SceneSpec& spec, const Vec3& o, const Vec3& d) {
  Hit best;
  for (const auto& s : spec.spheres) {
    auto hit = intersect_sphere(o, d, s.center, s.radius);
    if (!hit) continue;
    const double t = hit->first > 0.0 ? hit->first : hit->second;
    if (t > 0.0 && t < best.t) {
      best.t = t;
      best.normal = (o + t * d - s.center) / s.radius;
      best.color = shade(s.color, best.normal);
      best.primitive = true;
    }
  }
  for (const auto& b : spec.boxes) {
    auto hit = intersect_box(o, d, b);
    if (hit && hit->first < best.t) {
      best.t = hit->first;
      best.normal = hit->second;
      best.color = shade(b.color, best.normal);
      best.primitive = true;
    }
  }
  if (!best.primitive) {
    auto hit = intersect_sphere(o, d, Vec3::Zero(), spec.enclosure_radius);
    require(hit.has_value() && hit->second > 0.0, "scene: ray escapes the enclosure");
    best.t = hit->second;
    const Vec3 p = o + best.t * d;
    best.normal = -p / spec.enclosure_radius;
    best.color = enclosure_color(p / spec.enclosure_radius);
  }
  return best;
}

}  // namespace detail

/// Smooth random map R^3 -> R^dim built from random Fourier features.
class RandomFourierMap {
 public:
  RandomFourierMap(int dim, double frequency, std::uint64_t seed) : freqs_(dim, 3), phases_(dim) {
    require(dim >= 1, "feature map: dimension must be >= 1");
    Rng rng(derive_seed(seed, 0x524646));
    for (int k = 0; k < dim; ++k) {
      for (int a = 0; a < 3; ++a) freqs_(k, a) = frequency * normal01(rng);
      phases_[k] = 2.0 * std::numbers::pi * uniform01(rng);
    }
  }

  int dim() const { return static_cast<int>(phases_.size()); }

  Eigen::VectorXd operator()(const Vec3& x) const {
    return ((freqs_ * x + phases_).array().sin()).matrix();
  }

 private:
  Eigen::Matrix<double, Eigen::Dynamic, 3> freqs_;
  Eigen::VectorXd phases_;
};

/// Feature per pixel = phi(surface point) + i.i.d. Gaussian noise.
template <typename Phi>
FeatureMap synth_features(const Grid<double>& surface_points, const Phi& phi, std::uint64_t seed, double noise,
                          FeatureKind kind = FeatureKind::distilled) {
  require(surface_points.channels == 3, "synth_features: surface points need 3 channels");
  Rng rng(derive_seed(seed, 0x4e4f495345));
  Grid<float> grid;
  for (int i = 0; i < surface_points.height; ++i)
    for (int j = 0; j < surface_points.width; ++j) {
      const Vec3 p(surface_points.at(i, j, 0), surface_points.at(i, j, 1), surface_points.at(i, j, 2));
      const Eigen::VectorXd f = phi(p);
      if (grid.data.empty()) grid = Grid<float>(surface_points.height, surface_points.width, static_cast<int>(f.size()));
      for (Eigen::Index c = 0; c < f.size(); ++c)
        grid.at(i, j, static_cast<int>(c)) = static_cast<float>(f[c] + (noise > 0.0 ? noise * normal01(rng) : 0.0));
    }
  require(!grid.data.empty(), "synth_features: empty surface point map");
  return FeatureMap(std::move(grid), kind);
}

inline FeatureMap synth_features(const Grid<double>& surface_points, int dim, std::uint64_t seed, double noise,
                                 double frequency = 3.0, FeatureKind kind = FeatureKind::distilled) {
  require(dim >= 1, "synth_features: dimension must be >= 1");
  return synth_features(surface_points, RandomFourierMap(dim, frequency, seed), seed, noise, kind);
}

inline std::vector<Camera> ring_cameras(const SceneSpec& spec) {
  std::vector<Camera> cameras;
  for (int k = 0; k < spec.view_count; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / spec.view_count;
    const Vec3 eye(spec.ring_radius * std::cos(angle), spec.ring_height, spec.ring_radius * std::sin(angle));
    Camera cam;
    cam.intrinsics = {spec.focal, spec.focal, spec.width / 2.0, spec.height / 2.0, spec.width, spec.height};
    cam.pose = look_at(eye, spec.look_at);
    cameras.push_back(cam);
  }
  return cameras;
}

/// Renders every view analytically. Deterministic given the seed.
inline Dataset synth_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.bounds = {spec.near, spec.ring_radius + spec.enclosure_radius + 1.0, spec.enclosure_radius * 1.02};
  GroundTruth gt;
  const RandomFourierMap distilled_phi(spec.distilled_dim, spec.feature_frequency, derive_seed(seed, 0xD157));
  std::optional<RandomFourierMap> raw_phi;
  if (spec.raw_dim > 0) raw_phi.emplace(spec.raw_dim, spec.feature_frequency, derive_seed(seed, 0x3A3));
  const auto cameras = ring_cameras(spec);
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    PosedView view;
    view.camera = cameras[v];
    view.image = Image(spec.height, spec.width, 3);
    Grid<double> depth(spec.height, spec.width, 1);
    Grid<double> points(spec.height, spec.width, 3);
    Rng noise_rng(derive_seed(seed, 0xC010, v));
    const Vec3 forward = view.camera.pose.rotation.col(2);
    for (int i = 0; i < spec.height; ++i)
      for (int j = 0; j < spec.width; ++j) {
        const Ray ray = generate_ray(view.camera, j + 0.5, i + 0.5);
        const auto hit = detail::trace(spec, ray.origin, ray.direction);
        const Vec3 p = ray.origin + hit.t * ray.direction;
        depth.at(i, j) = hit.t * ray.direction.dot(forward);
        for (int a = 0; a < 3; ++a) points.at(i, j, a) = p[a];
        for (int c = 0; c < 3; ++c) {
          double value = hit.color[c];
          if (spec.color_noise > 0.0) value += spec.color_noise * normal01(noise_rng);
          view.image.at(i, j, c) = static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
      }
    view.feature_maps.emplace("color", FeatureMap(view.image, FeatureKind::color));
    view.feature_maps.emplace("distilled", synth_features(points, distilled_phi, derive_seed(seed, 0xF1, v),
                                                          spec.feature_noise, FeatureKind::distilled));
    if (raw_phi)
      view.feature_maps.emplace("raw", synth_features(points, *raw_phi, derive_seed(seed, 0xF2, v),
                                                      spec.feature_noise, FeatureKind::raw));
    ds.views.push_back(std::move(view));
    gt.depth.push_back(std::move(depth));
    gt.points.push_back(std::move(points));
  }
  ds.ground_truth = std::move(gt);
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset directory I/O

inline constexpr int kDatasetVersion = 1;

namespace detail {

inline Image to_image(const Grid<double>& g) { return g.cast<float>(); }

inline std::string view_stem(std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "view_%03zu", v);
  return buf;
}

}  // namespace detail

inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json doc;
  doc["format"] = "vsnerf-dataset";
  doc["version"] = kDatasetVersion;
  doc["bounds"] = {{"near", ds.bounds.near}, {"far", ds.bounds.far}, {"radius", ds.bounds.radius}};
  nlohmann::json views = nlohmann::json::array();
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    const auto& view = ds.views[v];
    view.validate();
    const auto& k = view.camera.intrinsics;
    const auto& pose = view.camera.pose;
    const std::string stem = detail::view_stem(v);
    nlohmann::json jv;
    jv["fx"] = k.fx;
    jv["fy"] = k.fy;
    jv["cx"] = k.cx;
    jv["cy"] = k.cy;
    jv["width"] = k.width;
    jv["height"] = k.height;
    std::vector<double> rot;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot.push_back(pose.rotation(r, c));
    jv["rotation"] = rot;
    jv["translation"] = {pose.translation.x(), pose.translation.y(), pose.translation.z()};
    jv["image"] = stem + ".pfm";
    write_pfm(dir / (stem + ".pfm"), view.image);
    nlohmann::json feats = nlohmann::json::object();
    for (const auto& [name, map] : view.feature_maps) {
      const std::string file = stem + "_" + name + ".fmap";
      write_fmap(dir / file, map);
      feats[name] = file;
    }
    jv["features"] = feats;
    if (ds.ground_truth) {
      jv["depth"] = stem + "_depth.pfm";
      jv["points"] = stem + "_points.pfm";
      write_pfm(dir / (stem + "_depth.pfm"), detail::to_image(ds.ground_truth->depth.at(v)));
      write_pfm(dir / (stem + "_points.pfm"), detail::to_image(ds.ground_truth->points.at(v)));
    }
    views.push_back(jv);
  }
  doc["views"] = views;
  std::ofstream os(dir / "scene.json");
  require(static_cast<bool>(os), (dir / "scene.json").string(), ": cannot open for writing");
  os << doc.dump(2) << '\n';
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  const auto scene_path = dir / "scene.json";
  std::ifstream is(scene_path);
  require(static_cast<bool>(is), scene_path.string(), ": cannot open");
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(scene_path.string(), ": malformed JSON: ", e.what());
  }
  try {
    require(doc.value("format", "") == "vsnerf-dataset", scene_path.string(), ": not a vsnerf dataset");
    require(doc.at("version").get<int>() == kDatasetVersion, scene_path.string(), ": unsupported dataset version");
    Dataset ds;
    const auto& b = doc.at("bounds");
    ds.bounds = {b.at("near").get<double>(), b.at("far").get<double>(), b.value("radius", 0.0)};
    bool has_gt = true;
    GroundTruth gt;
    for (const auto& jv : doc.at("views")) {
      PosedView view;
      auto& k = view.camera.intrinsics;
      k.fx = jv.at("fx");
      k.fy = jv.at("fy");
      k.cx = jv.at("cx");
      k.cy = jv.at("cy");
      k.width = jv.at("width");
      k.height = jv.at("height");
      const auto rot = jv.at("rotation").get<std::vector<double>>();
      const auto tr = jv.at("translation").get<std::vector<double>>();
      require(rot.size() == 9 && tr.size() == 3, scene_path.string(), ": rotation/translation have wrong length");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) view.camera.pose.rotation(r, c) = rot[r * 3 + c];
      view.camera.pose.translation = Vec3(tr[0], tr[1], tr[2]);
      view.image = read_pfm(dir / jv.at("image").get<std::string>());
      for (const auto& [name, file] : jv.at("features").items())
        view.feature_maps.emplace(name, read_fmap(dir / file.get<std::string>(), feature_kind_from_string(name)));
      view.validate();
      if (jv.contains("depth") && jv.contains("points")) {
        auto depth = read_pfm(dir / jv.at("depth").get<std::string>());
        auto points = read_pfm(dir / jv.at("points").get<std::string>());
        require(depth.height == k.height && depth.width == k.width && depth.channels == 1 &&
                    points.height == k.height && points.width == k.width && points.channels == 3,
                scene_path.string(), ": ground-truth maps do not match image size");
        gt.depth.push_back(depth.cast<double>());
        gt.points.push_back(points.cast<double>());
      } else {
        has_gt = false;
      }
      ds.views.push_back(std::move(view));
    }
    if (has_gt && !ds.views.empty()) ds.ground_truth = std::move(gt);
    return ds;
  } catch (const nlohmann::json::exception& e) {
    fail(scene_path.string(), ": ", e.what());
  }
}

}  // namespace vsnerf
