#pragma once

// Dense H x W x C grids and PFM image I/O.

#include "vsnerf/common.hpp"

#include <filesystem>
#include <fstream>
#include <span>

namespace vsnerf {

/// Row-major, channel-last H x W x C array.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
    require(h >= 0 && w >= 0 && c >= 1, "grid: invalid shape ", h, "x", w, "x", c);
  }

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  T& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
  const T& at(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }

  std::span<T> pixel(int row, int col) { return {data.data() + index(row, col), static_cast<std::size_t>(channels)}; }
  std::span<const T> pixel(int row, int col) const {
    return {data.data() + index(row, col), static_cast<std::size_t>(channels)};
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

  template <typename U>
  Grid<U> cast() const {
    Grid<U> out(height, width, channels);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T x) { return static_cast<U>(x); });
    return out;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using Image = Grid<float>;

/// Writes a little-endian PFM ("PF" for 3 channels, "Pf" for 1).
/// Scanlines are stored bottom-to-top as the format requires.
inline void write_pfm(const std::filesystem::path& path, const Image& image) {
  require(image.channels == 1 || image.channels == 3, path.string(), ": PFM needs 1 or 3 channels");
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), path.string(), ": cannot open for writing");
  os << (image.channels == 3 ? "PF" : "Pf") << '\n'
     << image.width << ' ' << image.height << '\n'
     << "-1.0\n";
  for (int row = image.height - 1; row >= 0; --row)
    for (int col = 0; col < image.width; ++col)
      for (int ch = 0; ch < image.channels; ++ch) write_le<float>(os, image.at(row, col, ch));
  require(static_cast<bool>(os), path.string(), ": write failed");
}

inline Image read_pfm(const std::filesystem::path& path) {
  const std::string what = path.string();
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), what, ": cannot open");
  std::string magic;
  is >> magic;
  int channels = 0;
  if (magic == "PF")
    channels = 3;
  else if (magic == "Pf")
    channels = 1;
  else
    fail(what, ": bad PFM magic");
  int width = 0, height = 0;
  double scale = 0.0;
  is >> width >> height >> scale;
  require(static_cast<bool>(is) && width > 0 && height > 0, what, ": malformed PFM header");
  require(scale < 0.0, what, ": only little-endian PFM (negative scale) is supported");
  is.get();  // single whitespace byte before the raster
  Image image(height, width, channels);
  for (int row = height - 1; row >= 0; --row)
    for (int col = 0; col < width; ++col)
      for (int ch = 0; ch < channels; ++ch) image.at(row, col, ch) = read_le<float>(is, what);
  return image;
}

}  // namespace vsnerf
