#include "vsnerf/vsnerf.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace vsnerf;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
};

/// Collects typed flags as dotted-key assignments applied after --set.
struct FlagOverrides {
  std::vector<std::pair<std::string, std::string>> entries;

  template <typename T>
  void add(const std::string& key, const std::optional<T>& v) {
    if (!v) return;
    entries.emplace_back(key, Json(*v).dump());
  }
};

RunConfig resolve(const Common& common, FlagOverrides flags, Json& resolved) {
  std::vector<std::string> assignments = common.sets;
  flags.add("seed", common.seed);
  flags.add("train.threads", common.threads);
  for (const auto& [k, v] : flags.entries) assignments.push_back(k + "=" + v);
  std::optional<fs::path> file;
  if (!common.config_file.empty()) file = common.config_file;
  return resolve_config(file, assignments, &resolved);
}

void write_config(const fs::path& dir, const Json& resolved) { write_text(dir / "config.json", resolved.dump(2) + "\n"); }

Dataset make_dataset(const RunConfig& rc) {
  SceneSpec spec = rc.scene;
  if (spec.spheres.empty() && spec.boxes.empty()) spec = random_scene_spec(rc.seed, spec);
  return synth_scene(spec, rc.seed);
}

int cmd_synth(const Common& common, const fs::path& out, FlagOverrides flags) {
  Json resolved;
  const RunConfig rc = resolve(common, std::move(flags), resolved);
  const Dataset ds = make_dataset(rc);
  write_dataset(out, ds);
  write_config(out, resolved);
  std::cout << "wrote " << ds.views.size() << " views to " << out.string() << "\n";
  return 0;
}

int cmd_distill(const Common& common, const fs::path& out, const std::string& dataset_dir, FlagOverrides flags) {
  Json resolved;
  RunConfig rc = resolve(common, std::move(flags), resolved);
  Rng eval_rng(derive_seed(rc.seed, 0xE7A1));
  nlohmann::ordered_json report;
  DistillReport dr;
  CorrespondenceBatch held_out;
  if (dataset_dir.empty()) {
    require(rc.distill.c_in == rc.correspondence.c_in, "distill: distill.c_in (", rc.distill.c_in,
            ") must equal correspondence.c_in (", rc.correspondence.c_in, ")");
    SyntheticCorrespondenceGenerator gen(rc.correspondence);
    Rng rng(derive_seed(rc.seed, 0xB47C));
    dr = distill_train([&](std::size_t) { return gen.batch(static_cast<std::size_t>(rc.distill.batch_size), rng); },
                       rc.distill);
    held_out = gen.batch(50, eval_rng);
    report["source"] = "synthetic";
  } else {
    const Dataset ds = read_dataset(dataset_dir);
    require(!ds.views.empty() && ds.views.front().has_features(FeatureKind::raw),
            "distill: dataset has no raw feature maps (synthesize with scene.raw_dim > 0)");
    rc.distill.c_in = ds.views.front().features(FeatureKind::raw).channels();
    resolved["distill"]["c_in"] = rc.distill.c_in;
    Rng rng(derive_seed(rc.seed, 0xB47C));
    dr = distill_train(
        [&](std::size_t) { return dataset_correspondences(ds, static_cast<std::size_t>(rc.distill.batch_size), rng); },
        rc.distill);
    held_out = dataset_correspondences(ds, 50, eval_rng);
    report["source"] = fs::path(dataset_dir).string();
  }
  write_projector(out, dr.projector);
  const double raw = diagonal_argmax_fraction(similarity_matrix(held_out.feats_a, held_out.feats_b));
  const double distilled = diagonal_argmax_fraction(similarity_matrix(apply_projector(dr.projector, held_out.feats_a),
                                                                      apply_projector(dr.projector, held_out.feats_b)));
  report["final_loss"] = dr.final_loss;
  report["diagonal_argmax_raw"] = raw;
  report["diagonal_argmax_distilled"] = distilled;
  report["config"] = resolved;
  fs::path report_path = out;
  report_path += ".json";
  write_text(report_path, report.dump(2) + "\n");
  std::cout << "final loss " << dr.final_loss << ", held-out diagonal argmax: distilled " << distilled << ", raw "
            << raw << "\n";
  return 0;
}

struct SplitData {
  Dataset train;
  Dataset eval;
};

SplitData split_dataset(const Dataset& ds, const TrainConfig& cfg) {
  const auto split = split_views(ds.views.size(), static_cast<std::size_t>(cfg.eval_views),
                                 static_cast<std::size_t>(cfg.train_views));
  return {subset(ds, split.train), subset(ds, split.eval)};
}

int cmd_train(const Common& common, const std::string& dataset_dir, const fs::path& out, FlagOverrides flags) {
  Json resolved;
  const RunConfig rc = resolve(common, std::move(flags), resolved);
  const Dataset ds = read_dataset(dataset_dir);
  const auto data = split_dataset(ds, rc.train);
  fs::create_directories(out);
  write_config(out, resolved);
  auto checkpoint = [&](const MetricsRow& row, const RadianceField<TrainScalar>& field) {
    char name[64];
    std::snprintf(name, sizeof(name), "field_%06d.vsfd", row.metrics.iteration);
    write_field(out / name, field);
    std::cerr << "iter " << row.metrics.iteration << " (" << to_string(row.sampler) << "): psnr "
              << format_number(row.metrics.psnr) << " ssim " << row.metrics.ssim << " loss " << row.total_loss << "\n";
  };
  const TrainResult result = train(data.train, data.eval, rc.train, checkpoint);
  write_field(out / "field.vsfd", result.field);
  write_text(out / "metrics.csv", metrics_csv(result.metrics));
  std::string log = "iteration,sampler,color_loss,depth_pushing_loss,total_loss\n";
  for (const auto& l : result.log)
    log += std::to_string(l.iteration) + "," + to_string(l.sampler) + "," + format_number(l.loss.color_loss) + "," +
           format_number(l.loss.depth_pushing_loss) + "," + format_number(l.loss.total) + "\n";
  write_text(out / "train_log.csv", log);
  write_text(out / "summary.json", summary_json(result).dump(2) + "\n");
  if (result.aborted) {
    std::cerr << "vsnerf: training aborted: " << result.abort_reason << " (last good field written)\n";
    return 2;
  }
  std::cout << "trained " << result.log.size() << " iterations; checkpoint " << (out / "field.vsfd").string() << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& dataset_dir, const std::string& checkpoint, const fs::path& out,
             bool all_views, FlagOverrides flags) {
  Json resolved;
  const RunConfig rc = resolve(common, std::move(flags), resolved);
  const Dataset ds = read_dataset(dataset_dir);
  const auto field = read_field<TrainScalar>(checkpoint);
  const Dataset views = all_views ? ds : split_dataset(ds, rc.train).eval;
  const auto ev = eval_metrics(field, views, rc.train.eval_samples, derive_seed(rc.seed, 0xE7A1), rc.train.threads);
  fs::create_directories(out);
  write_config(out, resolved);
  std::string csv = "view,psnr,ssim\n";
  for (std::size_t i = 0; i < ev.renders.size(); ++i) {
    write_pfm(out / ("render_" + detail::view_stem(i) + ".pfm"), ev.renders[i]);
    csv += std::to_string(i) + "," + format_number(ev.psnr_per_view[i]) + "," + format_number(ev.ssim_per_view[i]) +
           "\n";
  }
  write_text(out / "metrics.csv", csv);
  nlohmann::ordered_json summary{{"checkpoint", checkpoint},
                                 {"views", ev.renders.size()},
                                 {"psnr", metric_value(ev.metrics.psnr)},
                                 {"ssim", ev.metrics.ssim}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "psnr " << format_number(ev.metrics.psnr) << " ssim " << ev.metrics.ssim << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vsnerf: view-consistent sampling and depth-pushing training lab"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--config", common.config_file, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--set", common.sets, "Override a config value (dotted.key=value); repeatable");
  app.add_option("--threads", common.threads, "Worker threads (0 = auto)");
  app.add_option("--seed", common.seed, "Root seed (default: VSNERF_SEED or 0)");

  fs::path out;
  std::string dataset_dir, checkpoint;
  bool all_views = false;
  FlagOverrides flags;

  std::optional<int> views, width, height, raw_dim;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--views", views, "Number of views");
  synth->add_option("--width", width, "Image width");
  synth->add_option("--height", height, "Image height");
  synth->add_option("--raw-dim", raw_dim, "Raw feature dimension (0 disables)");

  std::optional<int> steps;
  auto* distill = app.add_subcommand("distill", "Train a feature projector");
  distill->add_option("--out", out, "Projector file")->required();
  distill->add_option("--dataset", dataset_dir, "Dataset with raw feature maps (default: synthetic correspondences)");
  distill->add_option("--steps", steps, "Optimization steps");

  std::optional<std::string> sampler;
  std::optional<int> iters, vs_iters, batch, presamples, samples, eval_interval;
  std::optional<double> lambda_depth;
  std::optional<bool> deterministic;
  auto* trn = app.add_subcommand("train", "Train a radiance field");
  trn->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  trn->add_option("--out", out, "Run directory")->required();
  trn->add_option("--sampler", sampler, "vs | uniform | stratified");
  trn->add_option("--iters", iters, "Total iterations");
  trn->add_option("--vs-iters", vs_iters, "Iterations with view-consistent sampling (default: iterations / 6)");
  trn->add_option("--batch", batch, "Rays per batch");
  trn->add_option("--presamples", presamples, "Pre-samples per ray");
  trn->add_option("--samples", samples, "Final samples per ray");
  trn->add_option("--lambda-depth", lambda_depth, "Depth-pushing weight");
  trn->add_option("--eval-interval", eval_interval, "Iterations between evaluations (0 = end only)");
  trn->add_flag("--deterministic,!--no-deterministic", deterministic, "Zero wall-clock fields in metrics");

  std::optional<int> eval_samples;
  auto* evl = app.add_subcommand("eval", "Render held-out views and score them");
  evl->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  evl->add_option("--checkpoint", checkpoint, "Field checkpoint")->required()->check(CLI::ExistingFile);
  evl->add_option("--out", out, "Output directory")->required();
  evl->add_option("--samples", eval_samples, "Samples per ray");
  evl->add_flag("--all-views", all_views, "Evaluate every view instead of the held-out split");

  std::uint64_t m_batch = 0, m_pre = 0, m_views = 0, m_channels = 0, m_bytes = 0;
  auto* memest = app.add_subcommand("memest", "Projection-feature memory estimate in bytes");
  memest->add_option("--batch", m_batch, "Rays per batch")->required();
  memest->add_option("--presamples", m_pre, "Pre-samples per ray")->required();
  memest->add_option("--views", m_views, "Views")->required();
  memest->add_option("--channels", m_channels, "Feature channels")->required();
  memest->add_option("--bytes", m_bytes, "Bytes per scalar")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) {
      flags.add("scene.view_count", views);
      flags.add("scene.width", width);
      flags.add("scene.height", height);
      flags.add("scene.raw_dim", raw_dim);
      return cmd_synth(common, out, flags);
    }
    if (*distill) {
      flags.add("distill.steps", steps);
      return cmd_distill(common, out, dataset_dir, flags);
    }
    if (*trn) {
      flags.add("train.sampler", sampler);
      flags.add("train.iterations", iters);
      flags.add("train.vs_iterations", vs_iters);
      flags.add("train.batch_size", batch);
      flags.add("train.presamples", presamples);
      flags.add("train.samples", samples);
      flags.add("train.lambda_depth", lambda_depth);
      flags.add("train.eval_interval", eval_interval);
      flags.add("train.deterministic", deterministic);
      return cmd_train(common, dataset_dir, out, flags);
    }
    if (*evl) {
      flags.add("train.eval_samples", eval_samples);
      return cmd_eval(common, dataset_dir, checkpoint, out, all_views, flags);
    }
    if (*memest) {
      const auto bytes = memory_estimate(m_batch, m_pre, m_views, m_channels, m_bytes);
      std::cout << bytes << " (" << human_bytes(bytes) << ")\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "vsnerf: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
