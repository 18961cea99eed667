#include "adsr/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "adsr/error.hpp"

namespace adsr {

ImagePlane::ImagePlane(std::size_t w, std::size_t h, std::size_t ch, ColorSpace cs, SampleRange r,
                       double fill)
    : width(w), height(h), channels(ch), samples(w * h * ch, fill), color(cs), range(r) {}

ImagePlane ImagePlane::channel(std::size_t c) const {
  if (c >= channels) throw ParameterError("channel index out of range");
  ImagePlane out(width, height, 1, ColorSpace::gray, range);
  for (std::size_t i = 0; i < width * height; ++i) out.samples[i] = samples[i * channels + c];
  return out;
}

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> b, std::size_t pos) : bytes_(b), pos_(pos) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(std::string(what) + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw FormatError(std::string("expected ") + what, pos_);
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("expected whitespace before raster", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

double round_byte(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

}  // namespace

ImagePlane decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("bad magic, expected P5 or P6", 0);
  }
  const std::size_t channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader reader(bytes, 2);
  const std::size_t width = reader.number("width");
  const std::size_t height = reader.number("height");
  reader.skip_space_and_comments();
  const std::size_t maxval_offset = reader.pos();
  const std::size_t maxval = reader.number("maxval");
  if (maxval != 255) throw FormatError("maxval must be 255, got " + std::to_string(maxval), maxval_offset);
  if (width == 0 || height == 0) throw FormatError("zero image extent", 2);
  reader.single_space();
  const std::size_t start = reader.pos();
  const std::size_t need = width * height * channels;
  if (bytes.size() - start < need) {
    throw FormatError("truncated raster: " + std::to_string(bytes.size() - start) + " of " +
                          std::to_string(need) + " bytes",
                      bytes.size());
  }
  ImagePlane img(width, height, channels, channels == 1 ? ColorSpace::gray : ColorSpace::rgb,
                 SampleRange::byte);
  for (std::size_t i = 0; i < need; ++i) img.samples[i] = bytes[start + i];
  return img;
}

std::vector<std::uint8_t> encode_pnm(const ImagePlane& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ParameterError("PNM encoding supports 1 or 3 channels");
  }
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + img.samples.size());
  const double scale = img.range == SampleRange::unit ? 255.0 : 1.0;
  for (double v : img.samples) out.push_back(static_cast<std::uint8_t>(round_byte(v * scale)));
  return out;
}

ImagePlane read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  return decode_pnm(bytes);
}

void write_pnm(const std::string& path, const ImagePlane& img) {
  const auto bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImagePlane rgb_to_y(const ImagePlane& rgb) {
  if (rgb.channels != 3) throw ParameterError("rgb_to_y needs a 3-channel image");
  ImagePlane out(rgb.width, rgb.height, 1, ColorSpace::ycbcr_y, rgb.range);
  for (std::size_t i = 0; i < rgb.width * rgb.height; ++i) {
    const double* p = &rgb.samples[i * 3];
    const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    out.samples[i] = rgb.range == SampleRange::byte ? round_byte(y) : y;
  }
  return out;
}

// Chroma coefficients derived from the luma weights so the two transforms
// are exact inverses.
constexpr double kKr = 0.299, kKg = 0.587, kKb = 0.114;
constexpr double kCb = 2.0 * (1.0 - kKb), kCr = 2.0 * (1.0 - kKr);

ImagePlane rgb_to_ycbcr(const ImagePlane& rgb) {
  if (rgb.channels != 3) throw ParameterError("rgb_to_ycbcr needs a 3-channel image");
  const double mid = rgb.peak() / 2.0 + (rgb.range == SampleRange::byte ? 0.5 : 0.0);
  ImagePlane out(rgb.width, rgb.height, 3, ColorSpace::ycbcr, rgb.range);
  for (std::size_t i = 0; i < rgb.width * rgb.height; ++i) {
    const double r = rgb.samples[i * 3], g = rgb.samples[i * 3 + 1], b = rgb.samples[i * 3 + 2];
    const double y = kKr * r + kKg * g + kKb * b;
    out.samples[i * 3] = y;
    out.samples[i * 3 + 1] = mid + (b - y) / kCb;
    out.samples[i * 3 + 2] = mid + (r - y) / kCr;
  }
  return out;
}

ImagePlane ycbcr_to_rgb(const ImagePlane& ycc) {
  if (ycc.channels != 3) throw ParameterError("ycbcr_to_rgb needs a 3-channel image");
  const double mid = ycc.peak() / 2.0 + (ycc.range == SampleRange::byte ? 0.5 : 0.0);
  ImagePlane out(ycc.width, ycc.height, 3, ColorSpace::rgb, ycc.range);
  for (std::size_t i = 0; i < ycc.width * ycc.height; ++i) {
    const double y = ycc.samples[i * 3], cb = ycc.samples[i * 3 + 1] - mid,
                 cr = ycc.samples[i * 3 + 2] - mid;
    const double r = y + kCr * cr, b = y + kCb * cb;
    out.samples[i * 3] = r;
    out.samples[i * 3 + 1] = (y - kKr * r - kKb * b) / kKg;
    out.samples[i * 3 + 2] = b;
  }
  return out;
}

ImagePlane to_unit(const ImagePlane& img) {
  if (img.range == SampleRange::unit) return img;
  ImagePlane out = img;
  out.range = SampleRange::unit;
  for (double& v : out.samples) v /= 255.0;
  return out;
}

ImagePlane to_byte(const ImagePlane& img) {
  ImagePlane out = img;
  const double scale = img.range == SampleRange::unit ? 255.0 : 1.0;
  out.range = SampleRange::byte;
  for (double& v : out.samples) v = round_byte(v * scale);
  return out;
}

Tensor plane_to_tensor(const ImagePlane& gray) {
  if (gray.channels != 1) throw ParameterError("plane_to_tensor needs a single-channel image");
  return Tensor({1, 1, gray.height, gray.width}, gray.samples);
}

ImagePlane tensor_to_plane(const Tensor& t, SampleRange range, ColorSpace cs) {
  const auto& s = t.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("tensor_to_plane needs a (1,1,h,w) tensor");
  ImagePlane out(s.w, s.h, 1, cs, range);
  std::copy(t.data().begin(), t.data().end(), out.samples.begin());
  return out;
}

void set_channel(ImagePlane& img, std::size_t c, const ImagePlane& src) {
  if (src.channels != 1 || src.width != img.width || src.height != img.height || c >= img.channels) {
    throw ShapeError("set_channel: incompatible planes");
  }
  for (std::size_t i = 0; i < img.width * img.height; ++i) img.samples[i * img.channels + c] = src.samples[i];
}

}  // namespace adsr
