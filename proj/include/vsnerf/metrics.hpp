#pragma once

// PSNR and SSIM for images with values in [0, 1].

#include "vsnerf/image.hpp"

namespace vsnerf {

inline double mean_squared_error(const Image& a, const Image& b) {
  require(a.height == b.height && a.width == b.width && a.channels == b.channels, "mse: image shapes differ");
  require(!a.data.empty(), "mse: empty images");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data.size());
}

/// -10 log10(mse); +infinity for identical images.
inline double psnr_from_mse(double mse) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

inline double psnr(const Image& a, const Image& b) { return psnr_from_mse(mean_squared_error(a, b)); }

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), k1 = 0.01,
/// k2 = 0.03, dynamic range 1, over valid window positions; channels are
/// averaged.
inline double ssim(const Image& a, const Image& b) {
  require(a.height == b.height && a.width == b.width && a.channels == b.channels, "ssim: image shapes differ");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  require(a.height >= kWin && a.width >= kWin, "ssim: images must be at least 11x11");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;

  std::array<double, kWin> g{};
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    g[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    gsum += g[i];
  }
  for (double& x : g) x /= gsum;

  const int oh = a.height - kWin + 1, ow = a.width - kWin + 1;
  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    // Separable filtering of x, y, x^2, y^2, xy.
    auto filter = [&](auto&& value) {
      std::vector<double> rows(static_cast<std::size_t>(a.height) * ow, 0.0);
      for (int i = 0; i < a.height; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = 0.0;
          for (int k = 0; k < kWin; ++k) s += g[k] * value(i, j + k);
          rows[static_cast<std::size_t>(i) * ow + j] = s;
        }
      std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = 0.0;
          for (int k = 0; k < kWin; ++k) s += g[k] * rows[static_cast<std::size_t>(i + k) * ow + j];
          out[static_cast<std::size_t>(i) * ow + j] = s;
        }
      return out;
    };
    auto x = [&](int i, int j) { return static_cast<double>(a.at(i, j, ch)); };
    auto y = [&](int i, int j) { return static_cast<double>(b.at(i, j, ch)); };
    const auto mx = filter(x);
    const auto my = filter(y);
    const auto mxx = filter([&](int i, int j) { return x(i, j) * x(i, j); });
    const auto myy = filter([&](int i, int j) { return y(i, j) * y(i, j); });
    const auto mxy = filter([&](int i, int j) { return x(i, j) * y(i, j); });
    double sum = 0.0;
    for (std::size_t p = 0; p < mx.size(); ++p) {
      const double vx = mxx[p] - mx[p] * mx[p];
      const double vy = myy[p] - my[p] * my[p];
      const double cxy = mxy[p] - mx[p] * my[p];
      sum += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cxy + c2)) /
             ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

}  // namespace vsnerf
