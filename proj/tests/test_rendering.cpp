#include "support/gradcheck.hpp"
#include "vsnerf/rendering.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace vsnerf;
using vsnerf::testing::central_differences;
using vsnerf::testing::max_relative_error;

namespace {

struct Samples {
  std::vector<double> t, delta;
  SigmaRow<double> sigma;
  RgbCols<double> rgb;

  RenderResult<double> render() const { return render_ray<double>(t, delta, sigma, rgb); }
};

Samples random_samples(Rng& rng, int n, double density_scale) {
  Samples s;
  s.sigma.resize(1, n);
  s.rgb.resize(3, n);
  double t = 0.5;
  for (int i = 0; i < n; ++i) {
    const double gap = 0.05 + 0.2 * uniform01(rng);
    s.t.push_back(t);
    s.delta.push_back(gap);
    t += gap;
    s.sigma(0, i) = density_scale * (0.01 + uniform01(rng));
    for (int c = 0; c < 3; ++c) s.rgb(c, i) = uniform01(rng);
  }
  return s;
}

}  // namespace

TEST(Render, EmptySpaceIsTransparent) {
  Samples s{{1, 2, 3}, {1, 1, 1}, SigmaRow<double>::Zero(1, 3), RgbCols<double>::Constant(3, 3, 0.7)};
  const auto r = s.render();
  EXPECT_EQ(r.color, Vec3::Zero());
  EXPECT_EQ(r.expected_depth, 0.0);
  EXPECT_EQ(r.accumulation, 0.0);
  for (double w : r.weights) EXPECT_EQ(w, 0.0);
}

TEST(Render, HalfOpaqueSample) {
  Samples s{{1.0}, {1.0}, SigmaRow<double>::Constant(1, 1, std::log(2.0)), RgbCols<double>::Ones(3, 1)};
  const auto r = s.render();
  EXPECT_NEAR(r.weights[0], 0.5, 1e-15);
  EXPECT_NEAR(r.color[1], 0.5, 1e-15);
  EXPECT_NEAR(r.expected_depth, 0.5, 1e-15);
}

TEST(Render, TwoSampleExample) {
  Samples s{{1.0, 2.0}, {1.0, 1.0}, SigmaRow<double>::Constant(1, 2, std::log(2.0)), RgbCols<double>(3, 2)};
  s.rgb << 1, 0, 0, 1, 0, 0;
  const auto r = s.render();
  EXPECT_NEAR(r.weights[0], 0.5, 1e-15);
  EXPECT_NEAR(r.weights[1], 0.25, 1e-15);
  EXPECT_NEAR(r.color[0], 0.5, 1e-15);
  EXPECT_NEAR(r.color[1], 0.25, 1e-15);
  EXPECT_NEAR(r.color[2], 0.0, 1e-15);
  EXPECT_NEAR(r.expected_depth, 1.0, 1e-15);
  EXPECT_NEAR(r.transmittance[1], 0.5, 1e-15);
}

TEST(Render, RejectsNegativeOrNanDensityAndShapeMismatch) {
  Samples s{{1.0, 2.0}, {1.0, 1.0}, SigmaRow<double>(1, 2), RgbCols<double>::Zero(3, 2)};
  s.sigma << 1.0, -0.1;
  EXPECT_THROW(s.render(), Error);
  s.sigma << std::nan(""), 0.0;
  EXPECT_THROW(s.render(), Error);
  s.sigma << 1.0, 1.0;
  s.delta = {1.0};
  EXPECT_THROW(s.render(), Error);
  Samples empty{{}, {}, SigmaRow<double>(1, 0), RgbCols<double>(3, 0)};
  EXPECT_THROW(empty.render(), Error);
}

TEST(RenderProperties, WeightsBoundedAndTelescoping) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_samples(rng, 1 + static_cast<int>(uniform_index(rng, 40)), 20.0 * uniform01(rng));
    const auto r = s.render();
    double sum = 0.0;
    for (double w : r.weights) {
      EXPECT_GE(w, 0.0);
      sum += w;
    }
    EXPECT_LE(sum, 1.0 + 1e-12);
    const std::size_t n = s.t.size();
    const double t_final = r.transmittance[n - 1] * std::exp(-s.sigma(0, n - 1) * s.delta[n - 1]);
    EXPECT_NEAR(sum + t_final, 1.0, 1e-12);
    for (std::size_t i = 1; i < n; ++i) EXPECT_LE(r.transmittance[i], r.transmittance[i - 1]);
  }
}

TEST(RenderProperties, ZeroDensityInsertionIsInvariant) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_samples(rng, 12, 5.0);
    const auto base = s.render();
    const std::size_t at = uniform_index(rng, 13);
    Samples ins;
    ins.sigma.resize(1, 13);
    ins.rgb.resize(3, 13);
    for (std::size_t i = 0, j = 0; i < 13; ++i) {
      if (i == at) {
        ins.t.push_back(10.0 * uniform01(rng));
        ins.delta.push_back(uniform01(rng));
        ins.sigma(0, static_cast<Eigen::Index>(i)) = 0.0;
        ins.rgb.col(static_cast<Eigen::Index>(i)) = Vec3(uniform01(rng), uniform01(rng), uniform01(rng));
        continue;
      }
      ins.t.push_back(s.t[j]);
      ins.delta.push_back(s.delta[j]);
      ins.sigma(0, static_cast<Eigen::Index>(i)) = s.sigma(0, static_cast<Eigen::Index>(j));
      ins.rgb.col(static_cast<Eigen::Index>(i)) = s.rgb.col(static_cast<Eigen::Index>(j));
      ++j;
    }
    const auto r = ins.render();
    EXPECT_NEAR((r.color - base.color).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR(r.expected_depth, base.expected_depth, 1e-12);
    EXPECT_NEAR(r.accumulation, base.accumulation, 1e-12);
  }
}

TEST(RenderProperties, QuadratureConvergesAtFirstOrder) {
  // sigma(t) = t on [0, 2]: exact opacity 1 - exp(-2).
  auto error = [](int n) {
    Samples s;
    s.sigma.resize(1, n);
    s.rgb = RgbCols<double>::Ones(3, n);
    const double h = 2.0 / n;
    for (int i = 0; i < n; ++i) {
      s.t.push_back(i * h);
      s.delta.push_back(h);
      s.sigma(0, i) = i * h;
    }
    return std::abs(s.render().accumulation - (1.0 - std::exp(-2.0)));
  };
  double prev = error(16);
  for (int n = 32; n <= 1024; n *= 2) {
    const double e = error(n);
    EXPECT_GT(std::log2(prev / e), 0.9) << "n = " << n;
    prev = e;
  }
}

TEST(RenderProperties, TransmittanceIsFloored) {
  Samples s{{1, 2, 3}, {1, 1, 1}, SigmaRow<double>::Constant(1, 3, 1e4), RgbCols<double>::Ones(3, 3)};
  const auto r = s.render();
  EXPECT_EQ(r.transmittance[1], kTransmittanceFloor);
  EXPECT_EQ(r.transmittance[2], kTransmittanceFloor);
}

TEST(RenderGradients, ColorAdjointIsWeight) {
  Rng rng(3);
  const auto s = random_samples(rng, 10, 4.0);
  const auto r = s.render();
  const auto adj = render_ray_backward<double>(s.t, s.delta, s.sigma, s.rgb, r, Vec3(1, 0, 0), 0.0);
  for (int i = 0; i < 10; ++i) {
    EXPECT_DOUBLE_EQ(adj.d_rgb(0, i), r.weights[i]);
    EXPECT_EQ(adj.d_rgb(1, i), 0.0);
  }
}

TEST(RenderGradients, ZeroAdjointsGiveZero) {
  Rng rng(4);
  const auto s = random_samples(rng, 10, 4.0);
  const auto adj = render_ray_backward<double>(s.t, s.delta, s.sigma, s.rgb, s.render(), Vec3::Zero(), 0.0);
  EXPECT_EQ(adj.d_sigma.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(adj.d_rgb.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RenderGradients, DensityAdjointMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_samples(rng, 16, 6.0);
    const Vec3 a(normal01(rng), normal01(rng), normal01(rng));
    const double b = normal01(rng);
    auto loss = [&] {
      const auto r = s.render();
      return a.dot(r.color) + b * r.expected_depth;
    };
    const auto adj = render_ray_backward<double>(s.t, s.delta, s.sigma, s.rgb, s.render(), a, b);
    std::vector<double> numeric = central_differences(std::span<double>(s.sigma.data(), 16), loss);
    std::vector<double> analytic(adj.d_sigma.data(), adj.d_sigma.data() + 16);
    EXPECT_LT(max_relative_error(analytic, numeric), 1e-5);
    std::vector<double> rgb_numeric = central_differences(std::span<double>(s.rgb.data(), 48), loss);
    std::vector<double> rgb_analytic(adj.d_rgb.data(), adj.d_rgb.data() + 48);
    EXPECT_LT(max_relative_error(rgb_analytic, rgb_numeric), 1e-5);
  }
}
