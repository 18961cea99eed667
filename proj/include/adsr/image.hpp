#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adsr/tensor.hpp"

namespace adsr {

enum class ColorSpace { gray, rgb, ycbcr, ycbcr_y };

/// byte: samples hold 0..255 values; unit: samples are normalized to [0, 1].
enum class SampleRange { byte, unit };

/// Row-major interleaved raster (y, x, channel).
struct ImagePlane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> samples;
  ColorSpace color = ColorSpace::gray;
  SampleRange range = SampleRange::byte;

  ImagePlane() = default;
  ImagePlane(std::size_t w, std::size_t h, std::size_t ch, ColorSpace cs, SampleRange r,
             double fill = 0.0);

  double& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return samples[(y * width + x) * channels + c];
  }
  double at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return samples[(y * width + x) * channels + c];
  }
  double peak() const noexcept { return range == SampleRange::byte ? 255.0 : 1.0; }

  /// Single channel `c` as a gray plane.
  ImagePlane channel(std::size_t c) const;
};

/// Binary P5 (gray) or P6 (RGB), maxval 255. Errors carry the byte offset.
ImagePlane decode_pnm(std::span<const std::uint8_t> bytes);
/// Canonical encoding "P5\n<w> <h>\n255\n" + samples; values are rounded
/// and clamped to 0..255 (unit images are scaled first).
std::vector<std::uint8_t> encode_pnm(const ImagePlane& img);

ImagePlane read_pnm(const std::string& path);
void write_pnm(const std::string& path, const ImagePlane& img);

/// BT.601 luma Y = 0.299 R + 0.587 G + 0.114 B. Byte images are rounded to
/// integers.
ImagePlane rgb_to_y(const ImagePlane& rgb);

/// Full-range BT.601 YCbCr (JPEG convention), chroma centered at half peak.
ImagePlane rgb_to_ycbcr(const ImagePlane& rgb);
ImagePlane ycbcr_to_rgb(const ImagePlane& ycc);

ImagePlane to_unit(const ImagePlane& img);
/// Scales to 0..255, rounds and clamps.
ImagePlane to_byte(const ImagePlane& img);

/// Gray plane -> (1, 1, h, w) tensor, and back.
Tensor plane_to_tensor(const ImagePlane& gray);
ImagePlane tensor_to_plane(const Tensor& t, SampleRange range, ColorSpace cs = ColorSpace::gray);

/// Replaces channel `c` of `img` with the gray plane `src`.
void set_channel(ImagePlane& img, std::size_t c, const ImagePlane& src);

}  // namespace adsr
