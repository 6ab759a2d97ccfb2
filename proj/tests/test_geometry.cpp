#include "vsnerf/geometry.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include <random>

using namespace vsnerf;

namespace {

Camera test_camera() {
  Camera cam;
  cam.intrinsics = {100.0, 100.0, 50.0, 50.0, 100, 100};
  return cam;
}

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  Pose p;
  p.rotation = q.normalized().toRotationMatrix();
  p.translation = Vec3(n(rng), n(rng), n(rng));
  return p;
}

}  // namespace

TEST(Geometry, PrincipalPointBackProjectsToOpticalAxis) {
  const Ray r = generate_ray(test_camera(), 50.0, 50.0);
  EXPECT_NEAR((r.direction - Vec3(0, 0, 1)).norm(), 0.0, 1e-15);
  EXPECT_EQ(r.origin, Vec3::Zero());
}

TEST(Geometry, OffAxisPixelDirection) {
  const Ray r = generate_ray(test_camera(), 75.0, 50.0);
  const Vec3 expected = Vec3(0.25, 0.0, 1.0).normalized();
  EXPECT_NEAR((r.direction - expected).norm(), 0.0, 1e-15);
}

TEST(Geometry, OutOfBoundsPixelThrows) {
  EXPECT_THROW(generate_ray(test_camera(), -1.0, 0.0), Error);
  EXPECT_THROW(generate_ray(test_camera(), 100.0, 0.0), Error);
  EXPECT_THROW(generate_ray(test_camera(), 0.0, 100.0), Error);
  EXPECT_NO_THROW(generate_ray(test_camera(), 0.0, 0.0));
}

TEST(Geometry, ProjectOnAxisPoint) {
  const auto p = project(test_camera(), Vec3(0, 0, 2));
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 50.0);
  EXPECT_DOUBLE_EQ(p->v, 50.0);
  EXPECT_DOUBLE_EQ(p->depth, 2.0);
}

TEST(Geometry, ProjectOffAxisPoint) {
  const auto p = project(test_camera(), Vec3(0.5, 0, 2));
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->u, 75.0);
  EXPECT_DOUBLE_EQ(p->v, 50.0);
  EXPECT_DOUBLE_EQ(p->depth, 2.0);
}

TEST(Geometry, ProjectBehindCameraIsEmpty) {
  EXPECT_FALSE(project(test_camera(), Vec3(0, 0, -1)));
  EXPECT_FALSE(project(test_camera(), Vec3(0, 0, 0)));
}

TEST(Geometry, ProjectOutsideFieldOfViewIsEmpty) { EXPECT_FALSE(project(test_camera(), Vec3(2.0, 0, 2))); }

TEST(Geometry, ShrinkingFieldOfViewNeverAddsVisibility) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Camera wide = test_camera();
  Camera narrow = wide;
  narrow.intrinsics.fx = narrow.intrinsics.fy = 200.0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    if (project(narrow, x)) {
      EXPECT_TRUE(project(wide, x));
    }
  }
}

TEST(Geometry, RayProjectRoundTrip) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pix(0.0, 99.999), depth(0.01, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    Camera cam = test_camera();
    cam.pose = random_pose(rng);
    cam.pose.validate();
    const double u = pix(rng), v = pix(rng);
    const Ray r = generate_ray(cam, u, v);
    const auto p = project(cam, r.at(depth(rng)));
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->u, u, 1e-6);
    EXPECT_NEAR(p->v, v, 1e-6);
  }
}

TEST(Geometry, ContractExamples) {
  EXPECT_EQ(contract(Vec3(0.5, 0, 0)), Vec3(0.5, 0, 0));
  EXPECT_NEAR((contract(Vec3(2, 0, 0)) - Vec3(1.5, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_EQ(contract(Vec3(0, 0, 0)), Vec3(0, 0, 0));
}

TEST(Geometry, ContractIsContinuousAtUnitSphere) {
  const Vec3 dir = Vec3(1, 2, 3).normalized();
  const Vec3 inside = contract(Vec3((1.0 - 1e-9) * dir));
  const Vec3 outside = contract(Vec3((1.0 + 1e-9) * dir));
  EXPECT_NEAR((inside - outside).norm(), 0.0, 1e-8);
}

TEST(Geometry, ContractIsNormMonotoneAndBounded) {
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> radius(0.0, 2.0);
  std::normal_distribution<double> n;
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < 5000; ++i) {
    const Vec3 x = Vec3(n(rng), n(rng), n(rng)).normalized() * radius(rng);
    const double c = contract(x).norm();
    EXPECT_LT(c, 2.0);
    pairs.emplace_back(x.norm(), c);
  }
  std::sort(pairs.begin(), pairs.end());
  for (std::size_t i = 1; i < pairs.size(); ++i) EXPECT_LE(pairs[i - 1].second, pairs[i].second);
}

TEST(Geometry, LookAtPointsForwardAtTarget) {
  const Pose p = look_at(Vec3(2, 1, 0), Vec3::Zero());
  p.validate();
  EXPECT_NEAR((p.rotation.col(2) - Vec3(-2, -1, 0).normalized()).norm(), 0.0, 1e-12);
  // Image "down" has a negative component along world up.
  EXPECT_LT(p.rotation.col(1).dot(Vec3::UnitY()), 0.0);
}

TEST(Geometry, InvalidPoseAndIntrinsicsRejected) {
  Pose p;
  p.rotation(0, 0) = 1.1;
  EXPECT_THROW(p.validate(), Error);
  p.rotation = -Mat3::Identity();
  EXPECT_THROW(p.validate(), Error);
  CameraIntrinsics k{0.0, 1.0, 0.0, 0.0, 10, 10};
  EXPECT_THROW(k.validate(), Error);
  k = {1.0, 1.0, 10.0, 0.0, 10, 10};
  EXPECT_THROW(k.validate(), Error);
}

TEST(Geometry, RayValidation) {
  Ray r;
  EXPECT_NO_THROW(r.validate());
  r.direction = Vec3(1, 1, 0);
  EXPECT_THROW(r.validate(), Error);
  r.direction = Vec3::UnitX();
  r.t_near = 2.0;
  EXPECT_THROW(r.validate(), Error);
}

TEST(Geometry, SphereIntersection) {
  const auto hit = intersect_sphere(Vec3(0, 0, -5), Vec3::UnitZ(), Vec3::Zero(), 1.0);
  ASSERT_TRUE(hit);
  EXPECT_DOUBLE_EQ(hit->first, 4.0);
  EXPECT_DOUBLE_EQ(hit->second, 6.0);
  EXPECT_FALSE(intersect_sphere(Vec3(0, 2, -5), Vec3::UnitZ(), Vec3::Zero(), 1.0));
  const auto inside = intersect_sphere(Vec3::Zero(), Vec3::UnitX(), Vec3::Zero(), 3.0);
  ASSERT_TRUE(inside);
  EXPECT_DOUBLE_EQ(inside->first, -3.0);
  EXPECT_DOUBLE_EQ(inside->second, 3.0);
}
