#pragma once

// Emission-absorption quadrature along a ray and its exact adjoint.
//
//   w_i = T_i (1 - exp(-sigma_i delta_i)),  T_1 = 1,  T_{i+1} = T_i exp(-sigma_i delta_i)
//   color = sum_i w_i c_i,  expected depth = sum_i w_i t_i

#include "vsnerf/common.hpp"

#include <span>

namespace vsnerf {

/// Floor applied to transmittance after each multiplication.
inline constexpr double kTransmittanceFloor = 1e-30;

template <typename Scalar>
struct RenderResult {
  Rgb<Scalar> color = Rgb<Scalar>::Zero();
  Scalar expected_depth = Scalar(0);
  std::vector<Scalar> weights;
  std::vector<Scalar> transmittance;
  Scalar accumulation = Scalar(0);
};

template <typename Scalar>
using SigmaRow = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using RgbCols = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

template <typename Scalar>
RenderResult<Scalar> render_ray(std::span<const Scalar> t, std::span<const Scalar> delta,
                                const Eigen::Ref<const SigmaRow<Scalar>>& sigma,
                                const Eigen::Ref<const RgbCols<Scalar>>& rgb) {
  const std::size_t n = t.size();
  require(n >= 1, "render_ray: need at least one sample");
  require(delta.size() == n && static_cast<std::size_t>(sigma.cols()) == n && static_cast<std::size_t>(rgb.cols()) == n,
          "render_ray: sample/output count mismatch");
  RenderResult<Scalar> r;
  r.weights.resize(n);
  r.transmittance.resize(n);
  const Scalar floor = static_cast<Scalar>(kTransmittanceFloor);
  Scalar trans = Scalar(1);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar s = sigma(0, static_cast<Eigen::Index>(i));
    if (!(s >= Scalar(0))) fail("render_ray: negative or non-finite density ", s, " at sample ", i);
    const Scalar attenuation = std::exp(-s * delta[i]);
    r.transmittance[i] = trans;
    r.weights[i] = trans * (Scalar(1) - attenuation);
    r.color += r.weights[i] * rgb.col(static_cast<Eigen::Index>(i));
    r.expected_depth += r.weights[i] * t[i];
    r.accumulation += r.weights[i];
    trans = std::max(trans * attenuation, floor);
  }
  return r;
}

template <typename Scalar>
struct RenderAdjoints {
  SigmaRow<Scalar> d_sigma;
  RgbCols<Scalar> d_rgb;
};

/// Adjoints of densities and colors given adjoints of the rendered color and
/// expected depth.
template <typename Scalar>
RenderAdjoints<Scalar> render_ray_backward(std::span<const Scalar> t, std::span<const Scalar> delta,
                                           const Eigen::Ref<const SigmaRow<Scalar>>& sigma,
                                           const Eigen::Ref<const RgbCols<Scalar>>& rgb,
                                           const RenderResult<Scalar>& forward, const Rgb<Scalar>& d_color,
                                           Scalar d_depth) {
  const std::size_t n = t.size();
  require(forward.weights.size() == n && delta.size() == n && static_cast<std::size_t>(sigma.cols()) == n &&
              static_cast<std::size_t>(rgb.cols()) == n,
          "render_ray_backward: shape mismatch");
  RenderAdjoints<Scalar> adj;
  adj.d_sigma.resize(1, static_cast<Eigen::Index>(n));
  adj.d_rgb.resize(3, static_cast<Eigen::Index>(n));
  // suffix = sum_{i > k} w_i g_i with g_i = <d_color, c_i> + d_depth t_i
  Scalar suffix = Scalar(0);
  for (std::size_t k = n; k-- > 0;) {
    const auto ki = static_cast<Eigen::Index>(k);
    const Scalar g = d_color.dot(rgb.col(ki)) + d_depth * t[k];
    adj.d_rgb.col(ki) = forward.weights[k] * d_color;
    const Scalar survive = forward.transmittance[k] * std::exp(-sigma(0, ki) * delta[k]);
    adj.d_sigma(0, ki) = delta[k] * (survive * g - suffix);
    suffix += forward.weights[k] * g;
  }
  return adj;
}

}  // namespace vsnerf
