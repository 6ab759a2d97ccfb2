#include "vsnerf/correspondence.hpp"
#include "vsnerf/dataset.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace vsnerf;
namespace fs = std::filesystem;

namespace {

SceneSpec single_sphere_spec() {
  SceneSpec spec;
  spec.spheres = {{Vec3::Zero(), 0.5, Vec3(0.8, 0.3, 0.2)}};
  spec.view_count = 6;
  spec.ring_height = 0.0;
  spec.width = 41;
  spec.height = 41;
  spec.feature_noise = 0.0;
  return spec;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vsnerf_dataset_" + name);
  fs::remove_all(dir);
  return dir;
}

Vec3 point_at(const Grid<double>& g, int i, int j) { return {g.at(i, j, 0), g.at(i, j, 1), g.at(i, j, 2)}; }

/// Feature cosine similarity over pixel pairs seeing the same surface point.
std::vector<double> corresponding_cosines(const Dataset& ds, int pairs, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out;
  const auto& gt = *ds.ground_truth;
  while (static_cast<int>(out.size()) < pairs) {
    const std::size_t a = uniform_index(rng, ds.views.size());
    std::size_t b = uniform_index(rng, ds.views.size() - 1);
    if (b >= a) ++b;
    const int i = static_cast<int>(uniform_index(rng, ds.views[a].image.height));
    const int j = static_cast<int>(uniform_index(rng, ds.views[a].image.width));
    const auto proj = project(ds.views[b].camera, point_at(gt.points[a], i, j));
    if (!proj) continue;
    const int ib = static_cast<int>(proj->v), jb = static_cast<int>(proj->u);
    if (std::abs(gt.depth[b].at(ib, jb) - proj->depth) > 1e-2 * proj->depth) continue;
    const auto fa = sample_at_pixel(ds.views[a].features(FeatureKind::distilled), j + 0.5, i + 0.5);
    const auto fb = sample_at_pixel(ds.views[b].features(FeatureKind::distilled), proj->u, proj->v);
    // Only pairs whose lookup lands on the same surface patch: compare the
    // feature at b's nearest texel center to the exact surface feature.
    if ((point_at(gt.points[b], ib, jb) - point_at(gt.points[a], i, j)).norm() > 0.05) continue;
    out.push_back(cosine_similarity(fa, fb));
  }
  return out;
}

}  // namespace

TEST(Dataset, CenterPixelDepthOfSingleSphere) {
  const auto spec = single_sphere_spec();
  const Dataset ds = synth_scene(spec, 1);
  for (std::size_t v = 0; v < ds.views.size(); ++v)
    EXPECT_NEAR(ds.ground_truth->depth[v].at(20, 20), spec.ring_radius - 0.5, 1e-9);
}

TEST(Dataset, GroundTruthDepthMatchesAnalyticIntersection) {
  const auto spec = single_sphere_spec();
  const Dataset ds = synth_scene(spec, 1);
  int hits = 0;
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    const auto& cam = ds.views[v].camera;
    for (int i = 0; i < spec.height; ++i)
      for (int j = 0; j < spec.width; ++j) {
        const Ray r = generate_ray(cam, j + 0.5, i + 0.5);
        const auto hit = intersect_sphere(r.origin, r.direction, Vec3::Zero(), 0.5);
        if (!hit) continue;
        ++hits;
        const double z = hit->first * r.direction.dot(cam.pose.rotation.col(2));
        EXPECT_NEAR(ds.ground_truth->depth[v].at(i, j), z, 1e-9);
        EXPECT_GT(ds.ground_truth->depth[v].at(i, j), 0.0);
      }
  }
  EXPECT_GT(hits, 100);
}

TEST(Dataset, EmptySceneDepthIsEnclosureDistance) {
  SceneSpec spec = single_sphere_spec();
  spec.spheres.clear();
  const Dataset ds = synth_scene(spec, 2);
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    const auto& cam = ds.views[v].camera;
    for (int i = 0; i < spec.height; i += 5)
      for (int j = 0; j < spec.width; j += 5) {
        const Ray r = generate_ray(cam, j + 0.5, i + 0.5);
        const auto hit = intersect_sphere(r.origin, r.direction, Vec3::Zero(), spec.enclosure_radius);
        ASSERT_TRUE(hit);
        EXPECT_NEAR(ds.ground_truth->depth[v].at(i, j), hit->second * r.direction.dot(cam.pose.rotation.col(2)),
                    1e-9);
        EXPECT_NEAR(point_at(ds.ground_truth->points[v], i, j).norm(), spec.enclosure_radius, 1e-9);
      }
  }
}

TEST(Dataset, SynthesisIsDeterministic) {
  const auto spec = random_scene_spec(9);
  const Dataset a = synth_scene(spec, 9), b = synth_scene(spec, 9);
  ASSERT_EQ(a.views.size(), b.views.size());
  for (std::size_t v = 0; v < a.views.size(); ++v) {
    EXPECT_TRUE(a.views[v] == b.views[v]);
    EXPECT_EQ(a.ground_truth->depth[v], b.ground_truth->depth[v]);
  }
  const Dataset c = synth_scene(spec, 10);
  EXPECT_FALSE(a.views[0] == c.views[0]);
}

TEST(Dataset, ViewsCarryRequiredFeatureMaps) {
  SceneSpec spec = random_scene_spec(4);
  spec.raw_dim = 48;
  const Dataset ds = synth_scene(spec, 4);
  for (const auto& v : ds.views) {
    EXPECT_NO_THROW(v.validate());
    EXPECT_EQ(v.features(FeatureKind::color).channels(), 3);
    EXPECT_EQ(v.features(FeatureKind::distilled).channels(), spec.distilled_dim);
    EXPECT_EQ(v.features(FeatureKind::raw).channels(), 48);
    for (float x : v.image.data) {
      EXPECT_GE(x, 0.0f);
      EXPECT_LE(x, 1.0f);
    }
  }
}

TEST(Dataset, InvalidSpecsRejected) {
  SceneSpec spec = single_sphere_spec();
  spec.spheres[0].radius = 0.0;
  EXPECT_THROW(synth_scene(spec, 0), Error);
  spec = single_sphere_spec();
  spec.enclosure_radius = 0.4;
  EXPECT_THROW(synth_scene(spec, 0), Error);
  spec = single_sphere_spec();
  spec.view_count = 1;
  EXPECT_THROW(synth_scene(spec, 0), Error);
  spec = single_sphere_spec();
  spec.boxes = {{Vec3(0, 0, 0), Vec3(1, 0, 1), Vec3(0.5, 0.5, 0.5)}};
  EXPECT_THROW(synth_scene(spec, 0), Error);
}

TEST(SynthFeatures, NoiseFreeFeaturesDependOnlyOnThePoint) {
  Grid<double> pts(2, 2, 3);
  for (int c = 0; c < 3; ++c) {
    pts.at(0, 0, c) = pts.at(1, 1, c) = 0.1 * (c + 1);
    pts.at(0, 1, c) = 0.7;
    pts.at(1, 0, c) = -0.2;
  }
  const FeatureMap a = synth_features(pts, 16, 5, 0.0);
  const FeatureMap b = synth_features(pts, 16, 5, 0.0);
  for (int c = 0; c < 16; ++c) {
    EXPECT_EQ(a.grid.at(0, 0, c), a.grid.at(1, 1, c));
    EXPECT_EQ(a.grid.at(0, 0, c), b.grid.at(0, 0, c));
  }
  EXPECT_EQ(a.kind, FeatureKind::distilled);
  EXPECT_THROW(synth_features(pts, 0, 5, 0.0), Error);
}

TEST(SynthFeatures, DegenerateMapReturnsXCoordinate) {
  Grid<double> pts(3, 3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) pts.at(i, j, 0) = 0.25 * i - 0.1 * j;
  const auto x_coord = [](const Vec3& p) { return Eigen::VectorXd::Constant(1, p.x()); };
  const FeatureMap m = synth_features(pts, x_coord, 1, 0.0, FeatureKind::raw);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(m.grid.at(i, j), static_cast<float>(0.25 * i - 0.1 * j));
}

TEST(SynthFeatures, CorrespondingPixelsAreNearlyParallel) {
  SceneSpec spec = random_scene_spec(21);
  spec.feature_noise = 0.01;
  spec.distilled_dim = 32;
  const Dataset ds = synth_scene(spec, 21);
  const auto cos = corresponding_cosines(ds, 1000, 77);
  const double mean = std::accumulate(cos.begin(), cos.end(), 0.0) / static_cast<double>(cos.size());
  EXPECT_GE(mean, 0.99);
}

TEST(SynthFeatures, FeatureDistanceVanishesWithNoise) {
  Grid<double> pts(1, 2, 3, 0.3);
  double previous = std::numeric_limits<double>::infinity();
  for (double noise : {0.1, 0.01, 0.001, 0.0}) {
    const FeatureMap a = synth_features(pts, 32, 3, noise, 1.0);
    double d = 0.0;
    for (int c = 0; c < 32; ++c) d += std::pow(a.grid.at(0, 0, c) - a.grid.at(0, 1, c), 2);
    EXPECT_LE(std::sqrt(d), previous);
    previous = std::sqrt(d);
  }
  EXPECT_EQ(previous, 0.0);
}

TEST(DatasetIo, RoundTripPreservesEverything) {
  SceneSpec spec = random_scene_spec(5);
  spec.view_count = 3;
  spec.raw_dim = 8;
  const Dataset ds = synth_scene(spec, 5);
  const auto dir = temp_dir("roundtrip");
  write_dataset(dir, ds);
  const Dataset back = read_dataset(dir);
  ASSERT_EQ(back.views.size(), ds.views.size());
  EXPECT_EQ(back.bounds.near, ds.bounds.near);
  EXPECT_EQ(back.bounds.far, ds.bounds.far);
  EXPECT_EQ(back.bounds.radius, ds.bounds.radius);
  ASSERT_TRUE(back.ground_truth);
  for (std::size_t v = 0; v < ds.views.size(); ++v) {
    EXPECT_TRUE(back.views[v] == ds.views[v]);
    // Ground-truth maps are stored as f32.
    EXPECT_EQ(back.ground_truth->depth[v], ds.ground_truth->depth[v].cast<float>().cast<double>());
    EXPECT_EQ(back.ground_truth->points[v], ds.ground_truth->points[v].cast<float>().cast<double>());
  }
}

TEST(DatasetIo, TruncatedFeatureFileNamedInError) {
  SceneSpec spec = random_scene_spec(6);
  spec.view_count = 2;
  const auto dir = temp_dir("truncated");
  write_dataset(dir, synth_scene(spec, 6));
  const auto victim = dir / "view_001_distilled.fmap";
  fs::resize_file(victim, fs::file_size(victim) / 2);
  try {
    read_dataset(dir);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("view_001_distilled.fmap"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, WrongMagicAndFormatRejected) {
  SceneSpec spec = random_scene_spec(6);
  spec.view_count = 2;
  const auto dir = temp_dir("magic");
  write_dataset(dir, synth_scene(spec, 6));
  {
    std::fstream f(dir / "view_000_color.fmap", std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(read_dataset(dir), Error);
  const auto dir2 = temp_dir("format");
  write_dataset(dir2, synth_scene(spec, 6));
  std::ofstream(dir2 / "scene.json") << R"({"format": "something-else", "version": 1})";
  EXPECT_THROW(read_dataset(dir2), Error);
  std::ofstream(dir2 / "scene.json") << "{not json";
  EXPECT_THROW(read_dataset(dir2), Error);
  EXPECT_THROW(read_dataset(temp_dir("missing")), Error);
}

TEST(DatasetIo, DimensionMismatchRejected) {
  SceneSpec spec = random_scene_spec(7);
  spec.view_count = 2;
  const auto dir = temp_dir("dims");
  const Dataset ds = synth_scene(spec, 7);
  write_dataset(dir, ds);
  write_fmap(dir / "view_000_distilled.fmap", FeatureMap(Grid<float>(3, 3, 32), FeatureKind::distilled));
  EXPECT_THROW(read_dataset(dir), Error);
}

TEST(Correspondences, PairsSeeTheSameSurface) {
  SceneSpec spec = random_scene_spec(12);
  spec.raw_dim = 24;
  spec.feature_noise = 0.0;
  const Dataset ds = synth_scene(spec, 12);
  Rng rng(1);
  const auto batch = dataset_correspondences(ds, 50, rng);
  ASSERT_EQ(batch.feats_a.rows(), 50);
  ASSERT_EQ(batch.feats_a.cols(), 24);
  double mean_cos = 0.0;
  for (int k = 0; k < 50; ++k)
    mean_cos += cosine_similarity(batch.feats_a.row(k).transpose(), batch.feats_b.row(k).transpose()) / 50.0;
  EXPECT_GT(mean_cos, 0.9);
}
