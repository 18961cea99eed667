#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "adsr/image.hpp"

namespace adsr {

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

struct QualityScore {
  double psnr_db = 0.0;
  double ssim = 0.0;
  std::size_t n_pixels = 0;
  std::size_t border_crop = 0;

  /// "PSNR/SSIM" in the usual table style, e.g. "37.37/0.9575".
  std::string str() const;
};

/// 10 log10(peak^2 / MSE) over the raster with `crop` pixels removed from
/// every side.
double psnr(std::span<const double> a, std::span<const double> b, std::size_t width,
            std::size_t height, double peak, std::size_t crop = 0);
double psnr(const ImagePlane& a, const ImagePlane& b, double peak, std::size_t crop = 0);

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5).
double ssim(std::span<const double> a, std::span<const double> b, std::size_t width,
            std::size_t height, double peak);
double ssim(const ImagePlane& a, const ImagePlane& b, double peak);

/// PSNR with `crop` border and SSIM on the same cropped region.
QualityScore quality(const ImagePlane& a, const ImagePlane& b, double peak, std::size_t crop);

}  // namespace adsr
