#include "adsr/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <vector>

#include "adsr/error.hpp"

namespace adsr {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, std::size_t width,
                std::size_t height) {
  if (a.size() != width * height || b.size() != width * height) {
    throw ShapeError("metric inputs must both hold width*height samples");
  }
}

void check_planes(const ImagePlane& a, const ImagePlane& b) {
  if (a.width != b.width || a.height != b.height || a.channels != 1 || b.channels != 1) {
    throw ShapeError("metrics need two single-channel images of equal size");
  }
}

std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> g{};
  const double mid = (kSsimWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - mid;
    g[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable Gaussian filter.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t w, std::size_t h) {
  static const auto g = gaussian_taps();
  const std::size_t ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(ow * h), out(ow * oh);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * src[y * w + x + k];
      tmp[y * ow + x] = acc;
    }
  }
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

ImagePlane crop_plane(const ImagePlane& img, std::size_t crop) {
  if (2 * crop >= img.width || 2 * crop >= img.height) {
    throw ParameterError("border crop leaves no pixels");
  }
  ImagePlane out(img.width - 2 * crop, img.height - 2 * crop, 1, img.color, img.range);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = img.at(x + crop, y + crop);
  }
  return out;
}

}  // namespace

std::string QualityScore::str() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f/%.4f", psnr_db, ssim);
  return buf;
}

double psnr(std::span<const double> a, std::span<const double> b, std::size_t width,
            std::size_t height, double peak, std::size_t crop) {
  check_pair(a, b, width, height);
  if (!(peak > 0.0)) throw ParameterError("PSNR peak must be positive");
  if (2 * crop >= width || 2 * crop >= height) throw ParameterError("border crop leaves no pixels");
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t y = crop; y < height - crop; ++y) {
    for (std::size_t x = crop; x < width - crop; ++x) {
      const double d = a[y * width + x] - b[y * width + x];
      se += d * d;
      ++count;
    }
  }
  if (se == 0.0) return kPsnrIdentical;
  const double mse = se / static_cast<double>(count);
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr(const ImagePlane& a, const ImagePlane& b, double peak, std::size_t crop) {
  check_planes(a, b);
  return psnr(a.samples, b.samples, a.width, a.height, peak, crop);
}

double ssim(std::span<const double> a, std::span<const double> b, std::size_t width,
            std::size_t height, double peak) {
  check_pair(a, b, width, height);
  if (width < kSsimWindow || height < kSsimWindow) {
    throw ParameterError("SSIM needs images of at least 11x11");
  }
  const double c1 = (kSsimK1 * peak) * (kSsimK1 * peak);
  const double c2 = (kSsimK2 * peak) * (kSsimK2 * peak);
  const std::size_t n = width * height;
  std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end()), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, width, height), mu_b = filter_valid(vb, width, height);
  const auto f_aa = filter_valid(aa, width, height), f_bb = filter_valid(bb, width, height);
  const auto f_ab = filter_valid(ab, width, height);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double saa = f_aa[i] - ma * ma, sbb = f_bb[i] - mb * mb, sab = f_ab[i] - ma * mb;
    const double num = (2.0 * ma * mb + c1) * (2.0 * sab + c2);
    const double den = (ma * ma + mb * mb + c1) * (saa + sbb + c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

double ssim(const ImagePlane& a, const ImagePlane& b, double peak) {
  check_planes(a, b);
  return ssim(a.samples, b.samples, a.width, a.height, peak);
}

QualityScore quality(const ImagePlane& a, const ImagePlane& b, double peak, std::size_t crop) {
  check_planes(a, b);
  const ImagePlane ca = crop_plane(a, crop), cb = crop_plane(b, crop);
  QualityScore q;
  q.psnr_db = psnr(ca, cb, peak, 0);
  q.ssim = ssim(ca, cb, peak);
  q.n_pixels = ca.width * ca.height;
  q.border_crop = crop;
  return q;
}

}  // namespace adsr
