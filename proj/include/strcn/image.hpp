#pragma once

#include <filesystem>
#include <vector>

namespace strcn {

/// Dense H x W x C raster. Pipeline images hold intensities in [0,1];
/// intermediate buffers (pyramid bands, differences) may be signed.
struct Image {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> data;  // row-major, channel-interleaved

  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0)
      : h(height), w(width), c(channels),
        data(static_cast<std::size_t>(height) * width * channels, fill) {}

  double& at(int y, int x, int ch = 0) {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  double at(int y, int x, int ch = 0) const {
    return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  std::size_t size() const { return data.size(); }
  bool same_dims(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

/// Channel mean; returns the input unchanged for single-channel images.
Image to_gray(const Image& img);

/// Bilinear sample with coordinates clamped to the image border.
double sample_bilinear(const Image& img, double y, double x, int ch);

/// Align-corners bilinear resize: output corners map exactly onto input corners.
Image resize_bilinear(const Image& img, int out_h, int out_w);

/// Reads PGM/PPM (8/16-bit binary) or PNG (8/16-bit gray/RGB), normalized to [0,1].
Image read_image(const std::filesystem::path& path);

/// Writes an image, format chosen from the extension (.pgm/.ppm/.png).
/// Values are clamped to [0,1] and quantized to the requested bit depth.
void write_image(const Image& img, const std::filesystem::path& path, int bit_depth = 16);

}  // namespace strcn
