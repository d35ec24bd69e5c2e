#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "imm/grid.hpp"
#include "imm/util.hpp"

namespace imm {
namespace detail {

inline void push_u32(std::vector<unsigned char>& v, std::uint32_t x) {
  v.push_back(static_cast<unsigned char>((x >> 24) & 0xff));
  v.push_back(static_cast<unsigned char>((x >> 16) & 0xff));
  v.push_back(static_cast<unsigned char>((x >> 8) & 0xff));
  v.push_back(static_cast<unsigned char>(x & 0xff));
}

inline void push_chunk(std::vector<unsigned char>& out, const char type[4],
                       const std::vector<unsigned char>& payload) {
  push_u32(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  push_u32(out, crc);
}

// compact blue->green->yellow colormap
inline void colormap(double t, unsigned char& r, unsigned char& g, unsigned char& b) {
  static const double anchors[7][3] = {
      {0.267, 0.005, 0.329}, {0.283, 0.141, 0.458}, {0.254, 0.265, 0.530},
      {0.207, 0.372, 0.553}, {0.128, 0.567, 0.551}, {0.369, 0.789, 0.383},
      {0.993, 0.906, 0.144}};
  t = std::clamp(t, 0.0, 1.0) * 6.0;
  int i = std::min(5, static_cast<int>(t));
  double w = t - i;
  r = static_cast<unsigned char>(255.0 * ((1 - w) * anchors[i][0] + w * anchors[i + 1][0]));
  g = static_cast<unsigned char>(255.0 * ((1 - w) * anchors[i][1] + w * anchors[i + 1][1]));
  b = static_cast<unsigned char>(255.0 * ((1 - w) * anchors[i][2] + w * anchors[i + 1][2]));
}

}  // namespace detail

// 8-bit RGB PNG from raw pixel rows (top row first).
inline void write_png_rgb(const std::string& path, int width, int height,
                          const std::vector<unsigned char>& rgb) {
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter type none
    const unsigned char* row = rgb.data() + static_cast<std::size_t>(y) * 3 * width;
    raw.insert(raw.end(), row, row + 3 * width);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw std::runtime_error("png: deflate failed");
  }
  compressed.resize(bound);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<unsigned char> ihdr;
  detail::push_u32(ihdr, static_cast<std::uint32_t>(width));
  detail::push_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::push_chunk(out, "IHDR", ihdr);
  detail::push_chunk(out, "IDAT", compressed);
  detail::push_chunk(out, "IEND", {});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw UserError("cannot open for writing: " + path);
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
}

// Heatmap of a raster, scaled to its own maximum; row 0 is drawn at the
// bottom (northing increases upward).
inline void write_raster_png(const GridSpec& grid, const Raster& raster,
                             const std::string& path) {
  double peak = 0.0;
  for (double v : raster) peak = std::max(peak, v);
  std::vector<unsigned char> rgb(static_cast<std::size_t>(grid.n_rows) *
                                 grid.n_cols * 3);
  for (int row = 0; row < grid.n_rows; ++row) {
    for (int col = 0; col < grid.n_cols; ++col) {
      double v = raster[static_cast<std::size_t>(row) * grid.n_cols + col];
      unsigned char r, g, b;
      detail::colormap(peak > 0.0 ? v / peak : 0.0, r, g, b);
      std::size_t y = static_cast<std::size_t>(grid.n_rows - 1 - row);
      std::size_t idx = (y * grid.n_cols + col) * 3;
      rgb[idx] = r;
      rgb[idx + 1] = g;
      rgb[idx + 2] = b;
    }
  }
  write_png_rgb(path, grid.n_cols, grid.n_rows, rgb);
}

}  // namespace imm
