#include "adsr/resample.hpp"

#include <algorithm>
#include <cmath>

#include "adsr/error.hpp"

namespace adsr {
namespace {

constexpr double kA = -0.5;

struct Taps {
  std::vector<std::ptrdiff_t> index;
  std::vector<double> weight;   // out * taps, row major
  std::size_t taps = 0;
};

// Precomputes clamped source indices and normalized weights for one axis.
Taps axis_taps(std::size_t in, std::size_t out, double f) {
  const double support = f < 1.0 ? 2.0 / f : 2.0;
  const double kscale = f < 1.0 ? f : 1.0;
  Taps t;
  t.taps = static_cast<std::size_t>(std::ceil(2.0 * support)) + 1;
  t.index.resize(out * t.taps);
  t.weight.resize(out * t.taps);
  const auto last = static_cast<std::ptrdiff_t>(in) - 1;
  for (std::size_t x = 0; x < out; ++x) {
    const double u = (static_cast<double>(x) + 0.5) / f - 0.5;
    const auto left = static_cast<std::ptrdiff_t>(std::floor(u - support)) + 1;
    double total = 0.0;
    for (std::size_t k = 0; k < t.taps; ++k) {
      const std::ptrdiff_t j = left + static_cast<std::ptrdiff_t>(k);
      const double wgt = kscale * cubic_kernel((u - static_cast<double>(j)) * kscale);
      t.index[x * t.taps + k] = std::clamp<std::ptrdiff_t>(j, 0, last);
      t.weight[x * t.taps + k] = wgt;
      total += wgt;
    }
    for (std::size_t k = 0; k < t.taps; ++k) t.weight[x * t.taps + k] /= total;
  }
  return t;
}

std::size_t scaled_extent(std::size_t in, Ratio r) {
  return (in * r.num + r.den - 1) / r.den;
}

}  // namespace

double cubic_kernel(double x) noexcept {
  const double ax = std::fabs(x);
  if (ax <= 1.0) return ((kA + 2.0) * ax - (kA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((kA * ax - 5.0 * kA) * ax + 8.0 * kA) * ax - 4.0 * kA;
  return 0.0;
}

std::vector<double> resize_plane(std::span<const double> src, std::size_t width,
                                 std::size_t height, std::size_t out_width,
                                 std::size_t out_height, double fx, double fy) {
  if (width == 0 || height == 0 || out_width == 0 || out_height == 0) {
    throw ParameterError("resize extents must be at least 1");
  }
  if (!(fx > 0.0) || !(fy > 0.0)) throw ParameterError("resize factor must be positive");

  const Taps tx = axis_taps(width, out_width, fx);
  const Taps ty = axis_taps(height, out_height, fy);

  // Horizontal pass.
  std::vector<double> tmp(out_width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const double* row = src.data() + y * width;
    for (std::size_t x = 0; x < out_width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < tx.taps; ++k) {
        acc += tx.weight[x * tx.taps + k] * row[tx.index[x * tx.taps + k]];
      }
      tmp[y * out_width + x] = acc;
    }
  }
  // Vertical pass.
  std::vector<double> out(out_width * out_height);
  for (std::size_t y = 0; y < out_height; ++y) {
    for (std::size_t x = 0; x < out_width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < ty.taps; ++k) {
        acc += ty.weight[y * ty.taps + k] * tmp[ty.index[y * ty.taps + k] * out_width + x];
      }
      out[y * out_width + x] = acc;
    }
  }
  return out;
}

namespace {

ImagePlane resize_channels(const ImagePlane& img, std::size_t ow, std::size_t oh, double fx,
                           double fy) {
  ImagePlane out(ow, oh, img.channels, img.color, img.range);
  for (std::size_t c = 0; c < img.channels; ++c) {
    const ImagePlane plane = img.channels == 1 ? img : img.channel(c);
    const auto resized = resize_plane(plane.samples, img.width, img.height, ow, oh, fx, fy);
    for (std::size_t i = 0; i < ow * oh; ++i) out.samples[i * img.channels + c] = resized[i];
  }
  return out;
}

}  // namespace

ImagePlane bicubic_resize(const ImagePlane& img, Ratio factor) {
  if (factor.num == 0 || factor.den == 0) throw ParameterError("resize factor must be positive");
  const std::size_t ow = scaled_extent(img.width, factor);
  const std::size_t oh = scaled_extent(img.height, factor);
  if (ow == 0 || oh == 0) throw ParameterError("resize output extent below 1");
  return resize_channels(img, ow, oh, factor.value(), factor.value());
}

ImagePlane bicubic_resize_to(const ImagePlane& img, std::size_t out_width, std::size_t out_height) {
  if (out_width == 0 || out_height == 0) throw ParameterError("resize output extent below 1");
  return resize_channels(img, out_width, out_height,
                         static_cast<double>(out_width) / static_cast<double>(img.width),
                         static_cast<double>(out_height) / static_cast<double>(img.height));
}

ImagePlane mod_crop(const ImagePlane& img, std::size_t scale) {
  if (scale == 0) throw ParameterError("scale must be positive");
  const std::size_t w = img.width - img.width % scale, h = img.height - img.height % scale;
  if (w == 0 || h == 0) throw ParameterError("image smaller than the scale factor");
  ImagePlane out(w, h, img.channels, img.color, img.range);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

ImagePlane degrade(const ImagePlane& hr, std::size_t scale) {
  if (scale == 0 || hr.width % scale != 0 || hr.height % scale != 0) {
    throw ParameterError("degrade needs extents that are multiples of the scale");
  }
  const ImagePlane lr = bicubic_resize(hr, Ratio{1, scale});
  return bicubic_resize(lr, Ratio{scale, 1});
}

}  // namespace adsr
