#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "adsr/image.hpp"

namespace adsr {

/// Positive rational resize factor num/den.
struct Ratio {
  std::size_t num = 1;
  std::size_t den = 1;

  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Keys cubic convolution kernel with a = -0.5.
double cubic_kernel(double x) noexcept;

/// Resizes a single-channel raster. Pixel centers map as
/// u = (x + 0.5) / f - 0.5; taps outside the raster clamp to the edge.
/// Downscaling widens the kernel by 1/f (antialiasing); weights are
/// normalized to sum to one.
std::vector<double> resize_plane(std::span<const double> src, std::size_t width,
                                 std::size_t height, std::size_t out_width,
                                 std::size_t out_height, double fx, double fy);

/// Output extents are ceil(extent * factor). Throws ParameterError when
/// the factor is not positive or an output extent would be zero.
ImagePlane bicubic_resize(const ImagePlane& img, Ratio factor);

/// Resize to explicit extents; the factor per axis is out/in.
ImagePlane bicubic_resize_to(const ImagePlane& img, std::size_t out_width, std::size_t out_height);

/// Crops width and height down to multiples of `scale` (top-left anchored).
ImagePlane mod_crop(const ImagePlane& img, std::size_t scale);

/// The pre-upsampling degradation: bicubic down by 1/scale then up by scale.
/// Extents must be multiples of `scale`.
ImagePlane degrade(const ImagePlane& hr, std::size_t scale);

}  // namespace adsr
