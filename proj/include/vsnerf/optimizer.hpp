#pragma once

// Adam with bias correction over flat parameter vectors.

#include "vsnerf/common.hpp"

#include <span>

namespace vsnerf {

struct AdamConfig {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  AlignedVector<Scalar> m;
  AlignedVector<Scalar> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, Scalar(0)), v(n, Scalar(0)) {}

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

template <typename Scalar>
void adam_step(std::span<Scalar> params, std::span<const Scalar> grads, AdamState<Scalar>& state,
               const AdamConfig& cfg) {
  require(params.size() == grads.size(), "adam_step: ", params.size(), " parameters vs ", grads.size(), " gradients");
  if (state.m.empty() && state.v.empty()) state = AdamState<Scalar>(params.size());
  require(state.m.size() == params.size() && state.v.size() == params.size(), "adam_step: state size mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Scalar b1 = static_cast<Scalar>(cfg.beta1);
  const Scalar b2 = static_cast<Scalar>(cfg.beta2);
  const Scalar step_size = static_cast<Scalar>(cfg.lr / bc1);
  const Scalar inv_sqrt_bc2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
  const Scalar eps = static_cast<Scalar>(cfg.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Scalar g = grads[i];
    state.m[i] = b1 * state.m[i] + (Scalar(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (Scalar(1) - b2) * g * g;
    params[i] -= step_size * state.m[i] / (std::sqrt(state.v[i]) * inv_sqrt_bc2 + eps);
  }
}

}  // namespace vsnerf
