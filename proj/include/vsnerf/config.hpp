#pragma once

// Run configuration: defaults, JSON config file, and dotted-key overrides,
// merged with precedence overrides > file > defaults. Unknown keys are errors.

#include "vsnerf/projector.hpp"
#include "vsnerf/trainer.hpp"

#include <json.hpp>

#include <cstdlib>

namespace vsnerf {

using Json = nlohmann::ordered_json;

struct RunConfig {
  std::uint64_t seed = 0;
  SceneSpec scene{};
  TrainConfig train{};
  DistillConfig distill{};
  SyntheticCorrespondenceConfig correspondence{};

  /// Copies the root seed into every component.
  void propagate_seed() {
    train.seed = seed;
    distill.seed = derive_seed(seed, 0xD15);
    correspondence.seed = derive_seed(seed, 0xC0);
  }
};

namespace detail {

inline Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec_from(const Json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) fail("config: ", key, " must be an array of three numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
void read_field(const Json& j, const char* name, T& out, const std::string& prefix) {
  const auto it = j.find(name);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    fail("config: ", prefix, name, " has the wrong type (got ", it->dump(), ")");
  }
}

}  // namespace detail

inline Json to_json(const RunConfig& c) {
  Json spheres = Json::array(), boxes = Json::array();
  for (const auto& s : c.scene.spheres)
    spheres.push_back({{"center", detail::vec_json(s.center)}, {"radius", s.radius}, {"color", detail::vec_json(s.color)}});
  for (const auto& b : c.scene.boxes)
    boxes.push_back({{"lo", detail::vec_json(b.lo)}, {"hi", detail::vec_json(b.hi)}, {"color", detail::vec_json(b.color)}});
  const auto& s = c.scene;
  const auto& t = c.train;
  const auto& f = t.field;
  const auto& d = c.distill;
  return Json{
      {"seed", c.seed},
      {"scene",
       {{"spheres", spheres},
        {"boxes", boxes},
        {"enclosure_radius", s.enclosure_radius},
        {"view_count", s.view_count},
        {"ring_radius", s.ring_radius},
        {"ring_height", s.ring_height},
        {"look_at", detail::vec_json(s.look_at)},
        {"width", s.width},
        {"height", s.height},
        {"focal", s.focal},
        {"near", s.near},
        {"color_noise", s.color_noise},
        {"feature_noise", s.feature_noise},
        {"distilled_dim", s.distilled_dim},
        {"raw_dim", s.raw_dim},
        {"feature_frequency", s.feature_frequency}}},
      {"train",
       {{"iterations", t.iterations},
        {"vs_iterations", t.vs_iterations},
        {"batch_size", t.batch_size},
        {"presamples", t.presamples},
        {"samples", t.samples},
        {"eval_samples", t.eval_samples},
        {"delta", t.delta},
        {"lambda_depth", t.lambda_depth},
        {"epsilon", t.epsilon},
        {"bin_floor", t.bin_floor},
        {"presample_growth", t.presample_growth},
        {"sampler", to_string(t.sampler)},
        {"eval_interval", t.eval_interval},
        {"eval_views", t.eval_views},
        {"train_views", t.train_views},
        {"threads", t.threads},
        {"deterministic", t.deterministic},
        {"adam", {{"lr", t.adam.lr}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}},
        {"field",
         {{"pos_frequencies", f.pos_frequencies},
          {"dir_frequencies", f.dir_frequencies},
          {"include_input", f.include_input},
          {"width", f.width},
          {"depth", f.depth},
          {"geo_features", f.geo_features},
          {"head_width", f.head_width}}}}},
      {"distill",
       {{"c_in", d.c_in},
        {"c_out", d.c_out},
        {"hidden", d.hidden},
        {"temperature", d.temperature},
        {"steps", d.steps},
        {"batch_size", d.batch_size},
        {"lr", d.lr}}},
      {"correspondence",
       {{"c_in", c.correspondence.c_in},
        {"latent_dim", c.correspondence.latent_dim},
        {"nuisance_scale", c.correspondence.nuisance_scale}}}};
}

/// Reads a complete (already merged and key-checked) config tree.
inline RunConfig from_json(const Json& j) {
  using detail::read_field;
  RunConfig c;
  read_field(j, "seed", c.seed, "");
  const Json& s = j.at("scene");
  auto& sc = c.scene;
  sc.spheres.clear();
  for (const auto& e : s.at("spheres")) {
    Sphere sp;
    if (e.contains("center")) sp.center = detail::vec_from(e["center"], "scene.spheres[].center");
    read_field(e, "radius", sp.radius, "scene.spheres[].");
    if (e.contains("color")) sp.color = detail::vec_from(e["color"], "scene.spheres[].color");
    sc.spheres.push_back(sp);
  }
  sc.boxes.clear();
  for (const auto& e : s.at("boxes")) {
    Box b;
    if (e.contains("lo")) b.lo = detail::vec_from(e["lo"], "scene.boxes[].lo");
    if (e.contains("hi")) b.hi = detail::vec_from(e["hi"], "scene.boxes[].hi");
    if (e.contains("color")) b.color = detail::vec_from(e["color"], "scene.boxes[].color");
    sc.boxes.push_back(b);
  }
  read_field(s, "enclosure_radius", sc.enclosure_radius, "scene.");
  read_field(s, "view_count", sc.view_count, "scene.");
  read_field(s, "ring_radius", sc.ring_radius, "scene.");
  read_field(s, "ring_height", sc.ring_height, "scene.");
  sc.look_at = detail::vec_from(s.at("look_at"), "scene.look_at");
  read_field(s, "width", sc.width, "scene.");
  read_field(s, "height", sc.height, "scene.");
  read_field(s, "focal", sc.focal, "scene.");
  read_field(s, "near", sc.near, "scene.");
  read_field(s, "color_noise", sc.color_noise, "scene.");
  read_field(s, "feature_noise", sc.feature_noise, "scene.");
  read_field(s, "distilled_dim", sc.distilled_dim, "scene.");
  read_field(s, "raw_dim", sc.raw_dim, "scene.");
  read_field(s, "feature_frequency", sc.feature_frequency, "scene.");

  const Json& t = j.at("train");
  auto& tc = c.train;
  read_field(t, "iterations", tc.iterations, "train.");
  if (t.contains("vs_iterations") && t["vs_iterations"].is_null())
    tc.vs_iterations = tc.iterations / 6;
  else
    read_field(t, "vs_iterations", tc.vs_iterations, "train.");
  read_field(t, "batch_size", tc.batch_size, "train.");
  read_field(t, "presamples", tc.presamples, "train.");
  read_field(t, "samples", tc.samples, "train.");
  read_field(t, "eval_samples", tc.eval_samples, "train.");
  read_field(t, "delta", tc.delta, "train.");
  read_field(t, "lambda_depth", tc.lambda_depth, "train.");
  read_field(t, "epsilon", tc.epsilon, "train.");
  read_field(t, "bin_floor", tc.bin_floor, "train.");
  read_field(t, "presample_growth", tc.presample_growth, "train.");
  std::string sampler = to_string(tc.sampler);
  read_field(t, "sampler", sampler, "train.");
  tc.sampler = sampler_from_string(sampler);
  read_field(t, "eval_interval", tc.eval_interval, "train.");
  read_field(t, "eval_views", tc.eval_views, "train.");
  read_field(t, "train_views", tc.train_views, "train.");
  read_field(t, "threads", tc.threads, "train.");
  read_field(t, "deterministic", tc.deterministic, "train.");
  const Json& a = t.at("adam");
  read_field(a, "lr", tc.adam.lr, "train.adam.");
  read_field(a, "beta1", tc.adam.beta1, "train.adam.");
  read_field(a, "beta2", tc.adam.beta2, "train.adam.");
  read_field(a, "eps", tc.adam.eps, "train.adam.");
  const Json& f = t.at("field");
  read_field(f, "pos_frequencies", tc.field.pos_frequencies, "train.field.");
  read_field(f, "dir_frequencies", tc.field.dir_frequencies, "train.field.");
  read_field(f, "include_input", tc.field.include_input, "train.field.");
  read_field(f, "width", tc.field.width, "train.field.");
  read_field(f, "depth", tc.field.depth, "train.field.");
  read_field(f, "geo_features", tc.field.geo_features, "train.field.");
  read_field(f, "head_width", tc.field.head_width, "train.field.");

  const Json& d = j.at("distill");
  read_field(d, "c_in", c.distill.c_in, "distill.");
  read_field(d, "c_out", c.distill.c_out, "distill.");
  read_field(d, "hidden", c.distill.hidden, "distill.");
  read_field(d, "temperature", c.distill.temperature, "distill.");
  read_field(d, "steps", c.distill.steps, "distill.");
  read_field(d, "batch_size", c.distill.batch_size, "distill.");
  read_field(d, "lr", c.distill.lr, "distill.");
  const Json& g = j.at("correspondence");
  read_field(g, "c_in", c.correspondence.c_in, "correspondence.");
  read_field(g, "latent_dim", c.correspondence.latent_dim, "correspondence.");
  read_field(g, "nuisance_scale", c.correspondence.nuisance_scale, "correspondence.");
  c.propagate_seed();
  return c;
}

/// Recursively merges `patch` into `base`; every key of `patch` must exist
/// in `base`. Arrays and scalars replace wholesale.
inline void merge_checked(Json& base, const Json& patch, const std::string& prefix = "") {
  require(patch.is_object(), "config: expected an object at \"", prefix.empty() ? "<root>" : prefix, "\"");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    const auto it = base.find(key);
    if (it == base.end()) fail("config: unknown key \"", path, "\"");
    if (it->is_object())
      merge_checked(*it, value, path);
    else
      *it = value;
  }
}

/// Sets one dotted key; the value is parsed as JSON, falling back to a plain
/// string.
inline void apply_override(Json& cfg, const std::string& dotted, const std::string& raw) {
  require(!dotted.empty(), "config: empty override key");
  Json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) fail("config: unknown key \"", dotted, "\"");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) fail("config: \"", dotted, "\" is a section, not a value");
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  *node = value;
}

/// Parses "key=value".
inline void apply_assignment(Json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "config: expected key=value, got \"", assignment, "\"");
  apply_override(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

/// Defaults with the VSNERF_SEED environment override applied.
inline Json default_config_json() {
  RunConfig defaults;
  if (const char* env = std::getenv("VSNERF_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      defaults.seed = std::stoull(env, &used);
      require(used == std::strlen(env), "");
    } catch (const std::exception&) {
      fail("VSNERF_SEED must be a non-negative integer, got \"", env, "\"");
    }
  }
  Json j = to_json(defaults);
  j["train"]["vs_iterations"] = nullptr;  // null: one sixth of the iterations
  return j;
}

inline Json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open config file ", path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    fail("malformed config file ", path.string(), ": ", e.what());
  }
}

/// defaults <- file (optional) <- overrides, then typed and validated.
inline RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const std::vector<std::string>& assignments, Json* resolved = nullptr) {
  Json cfg = default_config_json();
  if (file) merge_checked(cfg, load_json_file(*file));
  for (const auto& a : assignments) apply_assignment(cfg, a);
  RunConfig rc = from_json(cfg);
  if (resolved) *resolved = to_json(rc);
  return rc;
}

}  // namespace vsnerf
