#include "strcn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "strcn/errors.hpp"

namespace strcn {

Image to_gray(const Image& img) {
  if (img.c == 1) return img;
  Image out(img.h, img.w, 1);
  const double inv = 1.0 / img.c;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double s = 0.0;
      for (int ch = 0; ch < img.c; ++ch) s += img.at(y, x, ch);
      out.at(y, x) = s * inv;
    }
  return out;
}

double sample_bilinear(const Image& img, double y, double x, int ch) {
  y = std::clamp(y, 0.0, static_cast<double>(img.h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(img.w - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.h - 1);
  const int x1 = std::min(x0 + 1, img.w - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  const double a = img.at(y0, x0, ch) * (1 - fx) + img.at(y0, x1, ch) * fx;
  const double b = img.at(y1, x0, ch) * (1 - fx) + img.at(y1, x1, ch) * fx;
  return a * (1 - fy) + b * fy;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: non-positive output size");
  Image out(out_h, out_w, img.c);
  const double sy = out_h > 1 ? static_cast<double>(img.h - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(img.w - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int ch = 0; ch < img.c; ++ch)
        out.at(y, x, ch) = sample_bilinear(img, y * sy, x * sx, ch);
  return out;
}

namespace {

int quantize(double v, int maxval) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<int>(std::lround(clamped * maxval));
}

// --- PNM ----------------------------------------------------------------

void skip_pnm_whitespace(std::istream& in) {
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  std::string magic;
  in >> magic;
  int channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else if (magic == "P2")
    channels = 0;  // ASCII gray
  else
    throw IoError("unsupported PNM magic '" + magic + "' in " + path.string());

  skip_pnm_whitespace(in);
  int w, h, maxval;
  in >> w;
  skip_pnm_whitespace(in);
  in >> h;
  skip_pnm_whitespace(in);
  in >> maxval;
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw IoError("bad PNM header in " + path.string());

  if (channels == 0) {  // P2
    Image img(h, w, 1);
    for (std::size_t i = 0; i < img.size(); ++i) {
      long v;
      in >> v;
      if (!in) throw IoError("truncated PNM data in " + path.string());
      img.data[i] = static_cast<double>(v) / maxval;
    }
    return img;
  }

  in.get();  // single whitespace before raster
  Image img(h, w, channels);
  const std::size_t n = img.size();
  if (maxval < 256) {
    std::vector<unsigned char> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (!in) throw IoError("truncated PNM data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) img.data[i] = raw[i] / static_cast<double>(maxval);
  } else {
    std::vector<unsigned char> raw(n * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
    if (!in) throw IoError("truncated PNM data in " + path.string());
    for (std::size_t i = 0; i < n; ++i) {
      const int v = (raw[2 * i] << 8) | raw[2 * i + 1];  // big-endian per PNM
      img.data[i] = v / static_cast<double>(maxval);
    }
  }
  return img;
}

void write_pnm(const Image& img, const std::filesystem::path& path, int bit_depth) {
  if (img.c != 1 && img.c != 3) throw IoError("PNM supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path.string());
  const int maxval = bit_depth == 8 ? 255 : 65535;
  out << (img.c == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n" << maxval << "\n";
  if (bit_depth == 8) {
    std::vector<unsigned char> raw(img.size());
    for (std::size_t i = 0; i < img.size(); ++i)
      raw[i] = static_cast<unsigned char>(quantize(img.data[i], 255));
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<unsigned char> raw(img.size() * 2);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const int v = quantize(img.data[i], 65535);
      raw[2 * i] = static_cast<unsigned char>(v >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

// --- PNG ----------------------------------------------------------------

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng read error: " + path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  const int channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
  const double maxval = bit_depth == 16 ? 65535.0 : 255.0;

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<unsigned char> raw(row_bytes * h);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(h, w, channels);
  std::size_t i = 0;
  for (int y = 0; y < h; ++y) {
    const unsigned char* r = raw.data() + y * row_bytes;
    for (int x = 0; x < w * channels; ++x) {
      if (bit_depth == 16) {
        img.data[i++] = ((r[2 * x] << 8) | r[2 * x + 1]) / maxval;
      } else {
        img.data[i++] = r[x] / maxval;
      }
    }
  }
  return img;
}

void write_png(const Image& img, const std::filesystem::path& path, int bit_depth) {
  if (img.c != 1 && img.c != 3) throw IoError("PNG writer supports 1 or 3 channels");
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IoError("cannot write image: " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng write error: " + path.string());
  }

  png_init_io(png, fp.get());
  const int color_type = img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.w, img.h, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const int maxval = bit_depth == 16 ? 65535 : 255;
  const std::size_t row_bytes = static_cast<std::size_t>(img.w) * img.c * (bit_depth / 8);
  std::vector<unsigned char> row(row_bytes);
  for (int y = 0; y < img.h; ++y) {
    std::size_t o = 0;
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        const int v = quantize(img.at(y, x, ch), maxval);
        if (bit_depth == 16) {
          row[o++] = static_cast<unsigned char>(v >> 8);
          row[o++] = static_cast<unsigned char>(v & 0xff);
        } else {
          row[o++] = static_cast<unsigned char>(v);
        }
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::string lower_ext(const std::filesystem::path& path) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  if (ext == ".png") return read_png(path);
  throw IoError("unsupported image format: " + path.string());
}

void write_image(const Image& img, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw IoError("bit depth must be 8 or 16");
  const std::string ext = lower_ext(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return write_pnm(img, path, bit_depth);
  if (ext == ".png") return write_png(img, path, bit_depth);
  throw IoError("unsupported image format: " + path.string());
}

}  // namespace strcn
