#pragma once

// Training loop: ray batches, sample placement (view-consistent importance
// sampling during the first vs_iterations, then stratified), rendering,
// losses and Adam updates; periodic held-out PSNR/SSIM evaluation.

#include "vsnerf/metrics.hpp"
#include "vsnerf/objectives.hpp"

#include <chrono>
#include <functional>

namespace vsnerf {

enum class SamplerMode { vs, uniform, stratified };

inline const char* to_string(SamplerMode m) {
  switch (m) {
    case SamplerMode::vs: return "vs";
    case SamplerMode::uniform: return "uniform";
    case SamplerMode::stratified: return "stratified";
  }
  return "?";
}

inline SamplerMode sampler_from_string(const std::string& s) {
  if (s == "vs") return SamplerMode::vs;
  if (s == "uniform") return SamplerMode::uniform;
  if (s == "stratified") return SamplerMode::stratified;
  fail("unknown sampler \"", s, "\" (expected vs, uniform or stratified)");
}

/// Scalar type used for the field during training and evaluation.
using TrainScalar = float;

struct TrainConfig {
  int iterations = 3000;
  int vs_iterations = 500;  // view-consistent sampling is active for iterations [0, vs_iterations)
  int batch_size = 512;
  int presamples = 64;
  int samples = 24;
  int eval_samples = 48;
  double delta = 0.4;
  double lambda_depth = 1e-4;
  double epsilon = 0.01;
  double bin_floor = 0.01;
  double presample_growth = 1.05;
  SamplerMode sampler = SamplerMode::vs;
  std::uint64_t seed = 0;
  int eval_interval = 500;  // 0 evaluates only at the end
  int eval_views = 3;
  int train_views = 0;  // 0 = every view not held out
  unsigned threads = 0;
  bool deterministic = true;
  AdamConfig adam{};
  FieldConfig field{};

  void validate() const {
    require(iterations >= 0, "train: iterations must be >= 0");
    require(vs_iterations >= 0 && vs_iterations <= iterations, "train: need 0 <= vs_iterations <= iterations");
    require(batch_size >= 1 && presamples >= 2 && samples >= 2 && eval_samples >= 2,
            "train: batch size must be >= 1 and sample counts >= 2");
    require(epsilon > 0.0 && lambda_depth >= 0.0 && bin_floor >= 0.0, "train: invalid loss/floor settings");
    require(eval_interval >= 0 && eval_views >= 1 && train_views >= 0, "train: invalid evaluation settings");
    field.validate();
  }
};

struct ViewSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

/// Evenly spaced held-out views; the remaining views are subsampled evenly
/// for training (train_count 0 keeps all of them).
inline ViewSplit split_views(std::size_t total, std::size_t eval_count, std::size_t train_count) {
  require(eval_count >= 1 && eval_count < total, "split: need 1 <= eval views < total views (", total, ")");
  ViewSplit split;
  std::vector<bool> held(total, false);
  for (std::size_t k = 0; k < eval_count; ++k) {
    const auto idx = static_cast<std::size_t>((k + 0.5) * static_cast<double>(total) / eval_count);
    held[std::min(idx, total - 1)] = true;
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < total; ++i) (held[i] ? split.eval : rest).push_back(i);
  if (train_count == 0 || train_count >= rest.size()) {
    split.train = rest;
  } else {
    for (std::size_t k = 0; k < train_count; ++k)
      split.train.push_back(rest[static_cast<std::size_t>(k * static_cast<double>(rest.size()) / train_count)]);
  }
  require(split.train.size() >= 1, "split: no training views left");
  return split;
}

/// A dataset restricted to a subset of its views.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.bounds = ds.bounds;
  for (auto i : indices) out.views.push_back(ds.views.at(i));
  if (ds.ground_truth) {
    GroundTruth gt;
    for (auto i : indices) {
      gt.depth.push_back(ds.ground_truth->depth.at(i));
      gt.points.push_back(ds.ground_truth->points.at(i));
    }
    out.ground_truth = std::move(gt);
  }
  return out;
}

struct PixelRef {
  std::size_t view = 0;
  int row = 0;
  int col = 0;
};

/// |B| pixels drawn uniformly over all pixels of all views.
inline std::vector<PixelRef> sample_ray_batch(std::span<const PosedView> views, std::size_t batch, Rng& rng) {
  require(!views.empty(), "sample_ray_batch: no views");
  require(batch >= 1, "sample_ray_batch: batch size must be >= 1");
  std::vector<std::uint64_t> cumulative;
  std::uint64_t total = 0;
  for (const auto& v : views) {
    total += v.image.pixel_count();
    cumulative.push_back(total);
  }
  std::vector<PixelRef> out(batch);
  for (auto& p : out) {
    const std::uint64_t k = uniform_index(rng, total);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), k);
    p.view = static_cast<std::size_t>(it - cumulative.begin());
    const std::uint64_t local = k - (p.view == 0 ? 0 : cumulative[p.view - 1]);
    const int w = views[p.view].image.width;
    p.row = static_cast<int>(local / w);
    p.col = static_cast<int>(local % w);
  }
  return out;
}

/// Places the final samples of one training ray.
inline SampleSet place_samples(const Dataset& train, const PixelRef& px, const Ray& ray, SamplerMode mode,
                               const TrainConfig& cfg, Rng& rng) {
  switch (mode) {
    case SamplerMode::uniform: return uniform_sample(ray, cfg.samples);
    case SamplerMode::stratified: return stratified_sample(ray, cfg.samples, rng);
    case SamplerMode::vs: {
      const auto pre = pre_sample(ray, cfg.presamples, uniform_cutoff(ray), cfg.presample_growth);
      const auto ref = reference_features(train.views[px.view], px.row, px.col);
      const auto profile = profile_ray(ray, pre, train.views, px.view, ref, cfg.delta);
      return pdf_sample(bins_from_profile(profile, cfg.bin_floor), cfg.samples, rng);
    }
  }
  fail("unreachable sampler mode");
}

struct Metrics {
  int iteration = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double wall_ms = 0.0;
};

struct EvalOutput {
  Metrics metrics;
  std::vector<double> psnr_per_view;
  std::vector<double> ssim_per_view;
  std::vector<Image> renders;
};

/// Renders every pixel of the given views with the stratified sampler and
/// scores them against the stored images (mean of per-view PSNR and SSIM).
template <typename Scalar>
EvalOutput eval_metrics(const RadianceField<Scalar>& field, const Dataset& views, int samples, std::uint64_t seed,
                        unsigned threads = 0) {
  require(!views.views.empty(), "eval_metrics: no held-out views");
  EvalOutput out;
  for (std::size_t v = 0; v < views.views.size(); ++v) {
    const auto& view = views.views[v];
    Image render(view.image.height, view.image.width, 3);
    const int h = view.image.height, w = view.image.width;
    parallel_chunks(static_cast<std::size_t>(h), threads, [&](std::size_t row_index) {
      const int row = static_cast<int>(row_index);
      const std::size_t total = static_cast<std::size_t>(w) * samples;
      Eigen::Matrix<double, 3, Eigen::Dynamic> xs(3, total), ds(3, total);
      std::vector<Scalar> ts(total), deltas(total);
      for (int col = 0; col < w; ++col) {
        const Ray ray = views.pixel_ray(v, row, col);
        Rng rng(derive_seed(seed, v, static_cast<std::uint64_t>(row) * w + col));
        const auto s = stratified_sample(ray, samples, rng);
        const auto sp = sample_spacing(s.depths);
        for (int i = 0; i < samples; ++i) {
          const auto k = static_cast<std::size_t>(col) * samples + i;
          xs.col(static_cast<Eigen::Index>(k)) = ray.at(s.depths[i]);
          ds.col(static_cast<Eigen::Index>(k)) = ray.direction;
          ts[k] = static_cast<Scalar>(s.depths[i]);
          deltas[k] = static_cast<Scalar>(sp[i]);
        }
      }
      const auto fo = field.forward(xs, ds);
      for (int col = 0; col < w; ++col) {
        const auto off = static_cast<std::size_t>(col) * samples;
        const auto res = render_ray<Scalar>({ts.data() + off, static_cast<std::size_t>(samples)},
                                            {deltas.data() + off, static_cast<std::size_t>(samples)},
                                            fo.sigma.middleCols(static_cast<Eigen::Index>(off), samples),
                                            fo.rgb.middleCols(static_cast<Eigen::Index>(off), samples));
        for (int c = 0; c < 3; ++c) render.at(row, col, c) = static_cast<float>(res.color[c]);
      }
    });
    out.psnr_per_view.push_back(psnr(render, view.image));
    out.ssim_per_view.push_back(ssim(render, view.image));
    out.renders.push_back(std::move(render));
  }
  const double n = static_cast<double>(out.psnr_per_view.size());
  for (std::size_t i = 0; i < out.psnr_per_view.size(); ++i) {
    out.metrics.psnr += out.psnr_per_view[i] / n;
    out.metrics.ssim += out.ssim_per_view[i] / n;
  }
  return out;
}

struct IterationLog {
  int iteration = 0;
  SamplerMode sampler = SamplerMode::uniform;
  LossReport loss;
};

struct MetricsRow {
  Metrics metrics;
  SamplerMode sampler = SamplerMode::uniform;
  double color_loss = 0.0;  // means over iterations since the previous row
  double depth_pushing_loss = 0.0;
  double total_loss = 0.0;
};

struct TrainResult {
  RadianceField<TrainScalar> field;  // last good parameters
  std::vector<IterationLog> log;
  std::vector<MetricsRow> metrics;
  bool aborted = false;
  std::string abort_reason;
  double wall_ms = 0.0;
};

/// Sampler in effect at a given iteration.
inline SamplerMode active_sampler(const TrainConfig& cfg, int iteration) {
  if (cfg.sampler != SamplerMode::vs) return cfg.sampler;
  return iteration < cfg.vs_iterations ? SamplerMode::vs : SamplerMode::stratified;
}

/// Trains a field on `train` views and evaluates on `held_out` views.
/// A non-finite loss stops training and returns the last good field with
/// `aborted` set.
inline TrainResult train(const Dataset& train_set, const Dataset& held_out, const TrainConfig& cfg,
                         const std::function<void(const MetricsRow&, const RadianceField<TrainScalar>&)>& on_eval = {}) {
  cfg.validate();
  require(!train_set.views.empty(), "train: no training views");
  if (cfg.sampler == SamplerMode::vs && cfg.vs_iterations > 0) {
    require(train_set.views.size() >= 2, "train: view-consistent sampling needs at least two views");
    for (const auto& v : train_set.views)
      require(v.has_features(FeatureKind::color) && v.has_features(FeatureKind::distilled),
              "train: view-consistent sampling needs color and distilled feature maps");
  }
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed_ms = [&] {
    return cfg.deterministic ? 0.0 : std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  };

  TrainResult result;
  result.field = init_field<TrainScalar>(cfg.field, derive_seed(cfg.seed, 0xF1E1D));
  AdamState<TrainScalar> adam(result.field.parameter_count());
  LossOptions loss_opt;
  loss_opt.lambda_depth = cfg.lambda_depth;
  loss_opt.epsilon = cfg.epsilon;
  loss_opt.threads = cfg.threads;

  double win_color = 0.0, win_depth = 0.0, win_total = 0.0;
  int win_count = 0;
  auto evaluate = [&](int iteration, SamplerMode mode) {
    MetricsRow row;
    row.sampler = mode;
    if (win_count > 0) {
      row.color_loss = win_color / win_count;
      row.depth_pushing_loss = win_depth / win_count;
      row.total_loss = win_total / win_count;
    }
    win_color = win_depth = win_total = 0.0;
    win_count = 0;
    const auto ev = eval_metrics(result.field, held_out, cfg.eval_samples, derive_seed(cfg.seed, 0xE7A1), cfg.threads);
    row.metrics = ev.metrics;
    row.metrics.iteration = iteration;
    row.metrics.wall_ms = elapsed_ms();
    result.metrics.push_back(row);
    if (on_eval) on_eval(row, result.field);
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    const SamplerMode mode = active_sampler(cfg, it);
    Rng batch_rng(derive_seed(cfg.seed, 0xBA7C, static_cast<std::uint64_t>(it)));
    const auto pixels = sample_ray_batch(train_set.views, static_cast<std::size_t>(cfg.batch_size), batch_rng);
    RayBatch batch;
    batch.rays.resize(pixels.size());
    batch.samples.resize(pixels.size());
    batch.targets.resize(pixels.size());
    constexpr std::size_t kChunk = 32;
    parallel_chunks((pixels.size() + kChunk - 1) / kChunk, cfg.threads, [&](std::size_t c) {
      for (std::size_t r = c * kChunk; r < std::min(pixels.size(), (c + 1) * kChunk); ++r) {
        const auto& px = pixels[r];
        const auto& img = train_set.views[px.view].image;
        batch.rays[r] = train_set.pixel_ray(px.view, px.row, px.col);
        batch.targets[r] = Vec3(img.at(px.row, px.col, 0), img.at(px.row, px.col, 1), img.at(px.row, px.col, 2));
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(it) + 1, r));
        batch.samples[r] = place_samples(train_set, px, batch.rays[r], mode, cfg, rng);
      }
    });

    LossAndGradients<TrainScalar> lg;
    try {
      lg = total_loss_and_grads(result.field, batch, loss_opt);
    } catch (const Error& e) {
      result.aborted = true;
      result.abort_reason = "iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
    optimizer_step<TrainScalar>(result.field, lg.grads, adam, cfg.adam);
    result.log.push_back({it, mode, lg.report});
    win_color += lg.report.color_loss;
    win_depth += lg.report.depth_pushing_loss;
    win_total += lg.report.total;
    ++win_count;
    const int done = it + 1;
    if (cfg.eval_interval > 0 && done % cfg.eval_interval == 0 && done != cfg.iterations) evaluate(done, mode);
  }
  if (!result.aborted)
    evaluate(static_cast<int>(result.log.size()),
             result.log.empty() ? active_sampler(cfg, 0) : result.log.back().sampler);
  result.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return result;
}

}  // namespace vsnerf
