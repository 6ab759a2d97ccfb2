#pragma once

// Metrics CSV and JSON summary emission.

#include "vsnerf/trainer.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace vsnerf {

/// Shortest round-trip decimal rendering; "inf" for +infinity.
inline std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline constexpr const char* kMetricsHeader =
    "iteration,sampler,psnr,ssim,color_loss,depth_pushing_loss,total_loss,wall_ms";

inline std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.metrics.iteration) + "," + to_string(r.sampler) + "," + format_number(r.metrics.psnr) +
           "," + format_number(r.metrics.ssim) + "," + format_number(r.color_loss) + "," +
           format_number(r.depth_pushing_loss) + "," + format_number(r.total_loss) + "," +
           format_number(r.metrics.wall_ms) + "\n";
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot write ", path.string());
  os << text;
  require(static_cast<bool>(os), "failed writing ", path.string());
}

/// PSNR may be infinite; JSON has no infinity, so it is emitted as the
/// string "inf".
inline nlohmann::ordered_json metric_value(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

inline nlohmann::ordered_json summary_json(const TrainResult& r) {
  nlohmann::ordered_json j;
  j["iterations_completed"] = r.log.size();
  j["aborted"] = r.aborted;
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  if (!r.metrics.empty()) {
    const auto& last = r.metrics.back();
    j["final"] = {{"iteration", last.metrics.iteration},
                  {"psnr", metric_value(last.metrics.psnr)},
                  {"ssim", last.metrics.ssim},
                  {"total_loss", last.total_loss}};
  }
  std::size_t vs = 0;
  for (const auto& l : r.log) vs += l.sampler == SamplerMode::vs ? 1 : 0;
  j["vs_iterations_run"] = vs;
  return j;
}

}  // namespace vsnerf
