#pragma once

/** \file augment.hpp
 *  Training-time image augmentations on raw 8-bit RGB buffers, plus binary
 *  PPM (P6) file I/O for test corpora. Pipeline order is fixed as
 *  resize -> random grayscale (visible modality only) -> horizontal flip ->
 *  random erasing; inference applies resize only.
 */

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vireid/batch.hpp"
#include "vireid/rng.hpp"

namespace vireid {

/// Row-major interleaved RGB, 8 bits per channel.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3 bytes

  std::uint8_t& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

inline void validate_image(const ImageBuffer& img) {
  if (img.width < 1 || img.height < 1) throw std::invalid_argument("ImageBuffer: empty dimensions");
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
    throw std::invalid_argument("ImageBuffer: pixel count does not match dimensions");
  }
}

struct AugmentConfig {
  double grayscale_probability = 0.5;
  double flip_probability = 0.5;
  double erasing_probability = 0.5;
  std::pair<double, double> erasing_area_range{0.02, 0.4};  // fraction of image area
  std::pair<double, double> erasing_aspect_range{0.3, 3.33};
  std::pair<int, int> target_size{320, 128};  // height, width
};

inline void validate_augment_config(const AugmentConfig& cfg) {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(cfg.grayscale_probability) || !in_unit(cfg.flip_probability) || !in_unit(cfg.erasing_probability)) {
    throw std::invalid_argument("AugmentConfig: probabilities must lie in [0, 1]");
  }
  if (cfg.erasing_area_range.first > cfg.erasing_area_range.second ||
      cfg.erasing_aspect_range.first > cfg.erasing_aspect_range.second) {
    throw std::invalid_argument("AugmentConfig: ranges must be ordered");
  }
  if (cfg.target_size.first < 1 || cfg.target_size.second < 1) {
    throw std::invalid_argument("AugmentConfig: target size must be positive");
  }
  if (cfg.target_size.first > 8192 || cfg.target_size.second > 8192) {
    throw std::invalid_argument("AugmentConfig: target size exceeds 8192");
  }
}

/// BT.601 luma, rounded half up: Y = round(0.299 R + 0.587 G + 0.114 B).
/// Output has R = G = B; idempotent.
inline ImageBuffer to_grayscale(const ImageBuffer& img) {
  validate_image(img);
  ImageBuffer out = img;
  for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
    const double y = 0.299 * img.pixels[i] + 0.587 * img.pixels[i + 1] + 0.114 * img.pixels[i + 2];
    const double clamped = std::min(255.0, std::floor(y + 0.5));
    const auto v = static_cast<std::uint8_t>(clamped);
    out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = v;
  }
  return out;
}

/// Bilinear resize with half-pixel-centered sampling; channel values are
/// rounded half up. Resizing to the source size reproduces it exactly.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w) {
  validate_image(img);
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: target dims must be positive");
  ImageBuffer out;
  out.width = out_w;
  out.height = out_h;
  out.pixels.resize(static_cast<std::size_t>(out_w) * out_h * 3);
  const double sy = static_cast<double>(img.height) / out_h;
  const double sx = static_cast<double>(img.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double src_y = (y + 0.5) * sy - 0.5;
    src_y = std::min(std::max(src_y, 0.0), static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(std::floor(src_y));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = src_y - y0;
    for (int x = 0; x < out_w; ++x) {
      double src_x = (x + 0.5) * sx - 0.5;
      src_x = std::min(std::max(src_x, 0.0), static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(std::floor(src_x));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = src_x - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
        const double bottom = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
        const double v = top * (1.0 - fy) + bottom * fy;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::min(255.0, std::floor(v + 0.5)));
      }
    }
  }
  return out;
}

namespace detail {

inline ImageBuffer horizontal_flip(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

/// Tries up to 100 (area, aspect) draws; erases only when the integer
/// rectangle keeps the realized area fraction inside the configured range.
inline void random_erase(ImageBuffer& img, const AugmentConfig& cfg, rng::Engine& rng) {
  const double total = static_cast<double>(img.width) * img.height;
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double frac = rng::uniform(rng, cfg.erasing_area_range.first, cfg.erasing_area_range.second);
    const double aspect = rng::uniform(rng, cfg.erasing_aspect_range.first, cfg.erasing_aspect_range.second);
    const double area = frac * total;
    const int h = static_cast<int>(std::lround(std::sqrt(area * aspect)));
    const int w = static_cast<int>(std::lround(std::sqrt(area / aspect)));
    if (h < 1 || w < 1 || h > img.height || w > img.width) continue;
    const double realized = static_cast<double>(h) * w / total;
    if (realized < cfg.erasing_area_range.first || realized > cfg.erasing_area_range.second) continue;
    const int top = static_cast<int>(rng::below(rng, img.height - h + 1));
    const int left = static_cast<int>(rng::below(rng, img.width - w + 1));
    for (int y = top; y < top + h; ++y) {
      for (int x = left; x < left + w; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>(rng::below(rng, 256));
      }
    }
    return;
  }
}

}  // namespace detail

/// Training pipeline: resize to target -> grayscale with probability
/// (visible images only; infrared never passes the grayscale step) ->
/// horizontal flip with probability -> random erasing with probability.
/// A fixed rng state makes this a pure function of its inputs.
inline ImageBuffer apply_train_augmentations(const ImageBuffer& img, Modality modality,
                                             const AugmentConfig& cfg, rng::Engine& rng) {
  validate_image(img);
  validate_augment_config(cfg);
  ImageBuffer out = resize_bilinear(img, cfg.target_size.first, cfg.target_size.second);
  if (modality == Modality::visible) {
    if (rng::uniform_unit(rng) < cfg.grayscale_probability) out = to_grayscale(out);
  }
  if (rng::uniform_unit(rng) < cfg.flip_probability) out = detail::horizontal_flip(out);
  if (rng::uniform_unit(rng) < cfg.erasing_probability) detail::random_erase(out, cfg, rng);
  return out;
}

/// Inference applies the resize only; no augmentation touches test images.
inline ImageBuffer apply_inference_transform(const ImageBuffer& img, const AugmentConfig& cfg) {
  validate_image(img);
  validate_augment_config(cfg);
  return resize_bilinear(img, cfg.target_size.first, cfg.target_size.second);
}

// --- Binary PPM (magic P6, maxval 255) ---------------------------------
//
// Header: ASCII fields separated by single whitespace, then
// width * height * 3 raw bytes. Write-then-read round-trips exactly.

namespace detail {

struct PpmParser {
  const std::vector<char>& bytes;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("ppm_read: " + what + " at byte offset " + std::to_string(pos));
  }
  bool at_end() const { return pos >= bytes.size(); }
  void skip_whitespace() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  }
  long parse_number() {
    skip_whitespace();
    if (at_end() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) fail("expected ASCII integer");
    long value = 0;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1 << 30) fail("integer field out of range");
      ++pos;
    }
    return value;
  }
};

}  // namespace detail

inline ImageBuffer ppm_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ppm_read: cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  detail::PpmParser p{bytes};
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') p.fail("expected magic \"P6\"");
  p.pos = 2;
  const long width = p.parse_number();
  const long height = p.parse_number();
  const long maxval = p.parse_number();
  if (width < 1 || height < 1) p.fail("dimensions must be positive");
  if (maxval != 255) p.fail("maxval must be 255, got " + std::to_string(maxval));
  if (p.at_end() || !std::isspace(static_cast<unsigned char>(bytes[p.pos]))) {
    p.fail("expected single whitespace before payload");
  }
  ++p.pos;

  const std::size_t need = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() - p.pos < need) {
    throw std::runtime_error("ppm_read: truncated payload, expected " + std::to_string(need) +
                             " bytes at byte offset " + std::to_string(p.pos) + ", got " +
                             std::to_string(bytes.size() - p.pos));
  }
  ImageBuffer img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.pixels.assign(bytes.begin() + p.pos, bytes.begin() + p.pos + need);
  return img;
}

inline void ppm_write(const ImageBuffer& img, const std::string& path) {
  validate_image(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ppm_write: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("ppm_write: write failed for " + path);
}

}  // namespace vireid
