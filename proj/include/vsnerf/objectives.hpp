#pragma once

// Photometric and depth-pushing losses, and the batched loss/gradient
// evaluation chaining rendering and field backward passes.

#include "vsnerf/field.hpp"
#include "vsnerf/optimizer.hpp"
#include "vsnerf/rendering.hpp"
#include "vsnerf/sampling.hpp"

namespace vsnerf {

struct LossReport {
  double color_loss = 0.0;
  double depth_pushing_loss = 0.0;
  double total = 0.0;
  double lambda_depth = 0.0;
  double epsilon = 0.01;
  std::size_t batch_size = 0;
};

/// Mean over rays of ||rendered - target||^2.
template <typename Scalar>
double color_loss(std::span<const Rgb<Scalar>> rendered, std::span<const Rgb<Scalar>> target) {
  require(!rendered.empty() && rendered.size() == target.size(), "color_loss: need equal, non-empty batches (",
          rendered.size(), " vs ", target.size(), ")");
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i)
    sum += static_cast<double>((rendered[i] - target[i]).squaredNorm());
  return sum / static_cast<double>(rendered.size());
}

/// -(1/|B|) sum log(d + eps). Strictly decreasing in every depth.
template <typename Scalar>
double depth_pushing_loss(std::span<const Scalar> expected_depths, double epsilon) {
  require(epsilon > 0.0, "depth_pushing_loss: epsilon must be positive");
  require(!expected_depths.empty(), "depth_pushing_loss: empty batch");
  double sum = 0.0;
  for (Scalar d : expected_depths) {
    if (!(d >= Scalar(0))) fail("depth_pushing_loss: negative expected depth ", d);
    sum += std::log(static_cast<double>(d) + epsilon);
  }
  return -sum / static_cast<double>(expected_depths.size());
}

/// Rays with their final samples and target colors.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<SampleSet> samples;
  std::vector<Vec3> targets;

  std::size_t size() const { return rays.size(); }

  void validate() const {
    require(!rays.empty(), "ray batch: empty");
    require(samples.size() == rays.size() && targets.size() == rays.size(), "ray batch: inconsistent sizes");
    for (const auto& s : samples) require(s.size() >= 2, "ray batch: every ray needs at least two samples");
  }
};

template <typename Scalar>
struct LossAndGradients {
  LossReport report;
  AlignedVector<Scalar> grads;
  std::vector<Rgb<Scalar>> colors;  // rendered color per ray
  std::vector<Scalar> depths;       // expected depth per ray
};

struct LossOptions {
  double lambda_depth = 1e-4;
  double epsilon = 0.01;
  unsigned threads = 1;
  std::size_t chunk_rays = 64;  // fixed work unit; reduction order is by chunk
};

/// total = L_color + lambda * L_depu, with gradients w.r.t. field parameters.
/// Each chunk of rays accumulates into its own buffer; buffers are summed in
/// chunk order so the result does not depend on the thread count.
template <typename Scalar>
LossAndGradients<Scalar> total_loss_and_grads(const RadianceField<Scalar>& field, const RayBatch& batch,
                                              const LossOptions& opt) {
  batch.validate();
  require(opt.epsilon > 0.0, "total_loss: epsilon must be positive");
  require(opt.chunk_rays >= 1, "total_loss: chunk size must be positive");
  const std::size_t n_rays = batch.size();
  const std::size_t chunks = (n_rays + opt.chunk_rays - 1) / opt.chunk_rays;
  const double inv_b = 1.0 / static_cast<double>(n_rays);

  LossAndGradients<Scalar> out;
  out.colors.resize(n_rays);
  out.depths.resize(n_rays);
  std::vector<AlignedVector<Scalar>> chunk_grads(chunks);
  std::vector<double> chunk_color(chunks, 0.0), chunk_depth(chunks, 0.0);

  parallel_chunks(chunks, opt.threads, [&](std::size_t c) {
    const std::size_t r0 = c * opt.chunk_rays;
    const std::size_t r1 = std::min(n_rays, r0 + opt.chunk_rays);
    std::size_t total = 0;
    for (std::size_t r = r0; r < r1; ++r) total += batch.samples[r].size();
    Eigen::Matrix<double, 3, Eigen::Dynamic> xs(3, total), ds(3, total);
    std::vector<Scalar> ts(total), deltas(total);
    std::size_t col = 0;
    for (std::size_t r = r0; r < r1; ++r) {
      const auto& depths = batch.samples[r].depths;
      const auto sp = sample_spacing(depths);
      for (std::size_t i = 0; i < depths.size(); ++i, ++col) {
        xs.col(static_cast<Eigen::Index>(col)) = batch.rays[r].at(depths[i]);
        ds.col(static_cast<Eigen::Index>(col)) = batch.rays[r].direction;
        ts[col] = static_cast<Scalar>(depths[i]);
        deltas[col] = static_cast<Scalar>(sp[i]);
      }
    }
    FieldTape<Scalar> tape;
    const auto fo = field.forward(xs, ds, &tape);
    SigmaRow<Scalar> d_sigma(1, static_cast<Eigen::Index>(total));
    RgbCols<Scalar> d_rgb(3, static_cast<Eigen::Index>(total));
    col = 0;
    for (std::size_t r = r0; r < r1; ++r) {
      const std::size_t s = batch.samples[r].size();
      const auto ci = static_cast<Eigen::Index>(col);
      const auto si = static_cast<Eigen::Index>(s);
      const std::span<const Scalar> t_span(ts.data() + col, s), d_span(deltas.data() + col, s);
      const auto res = render_ray<Scalar>(t_span, d_span, fo.sigma.middleCols(ci, si), fo.rgb.middleCols(ci, si));
      const Rgb<Scalar> target = batch.targets[r].template cast<Scalar>();
      const Rgb<Scalar> diff = res.color - target;
      chunk_color[c] += static_cast<double>(diff.squaredNorm());
      chunk_depth[c] += std::log(static_cast<double>(res.expected_depth) + opt.epsilon);
      out.colors[r] = res.color;
      out.depths[r] = res.expected_depth;
      const Rgb<Scalar> d_color = static_cast<Scalar>(2.0 * inv_b) * diff;
      const Scalar d_depth =
          static_cast<Scalar>(-opt.lambda_depth * inv_b / (static_cast<double>(res.expected_depth) + opt.epsilon));
      const auto adj = render_ray_backward<Scalar>(t_span, d_span, fo.sigma.middleCols(ci, si),
                                                   fo.rgb.middleCols(ci, si), res, d_color, d_depth);
      d_sigma.middleCols(ci, si) = adj.d_sigma;
      d_rgb.middleCols(ci, si) = adj.d_rgb;
      col += s;
    }
    chunk_grads[c].assign(field.parameter_count(), Scalar(0));
    field.backward(tape, d_sigma, d_rgb, chunk_grads[c]);
  });

  out.grads.assign(field.parameter_count(), Scalar(0));
  double color_sum = 0.0, log_sum = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    color_sum += chunk_color[c];
    log_sum += chunk_depth[c];
    for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k] += chunk_grads[c][k];
  }
  auto& rep = out.report;
  rep.color_loss = color_sum * inv_b;
  rep.depth_pushing_loss = -log_sum * inv_b;
  rep.lambda_depth = opt.lambda_depth;
  rep.epsilon = opt.epsilon;
  rep.batch_size = n_rays;
  rep.total = rep.color_loss + opt.lambda_depth * rep.depth_pushing_loss;
  if (!std::isfinite(rep.total)) fail("total_loss: non-finite loss (color ", rep.color_loss, ", depth ",
                                      rep.depth_pushing_loss, ")");
  return out;
}

/// One Adam update of the field parameters.
template <typename Scalar>
void optimizer_step(RadianceField<Scalar>& field, std::span<const Scalar> grads, AdamState<Scalar>& state,
                    const AdamConfig& cfg) {
  adam_step<Scalar>(field.params(), grads, state, cfg);
}

}  // namespace vsnerf
