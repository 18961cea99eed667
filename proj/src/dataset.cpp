#include "adsr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <random>

#include "adsr/error.hpp"
#include "adsr/resample.hpp"

namespace adsr {

Tensor dihedral(const Tensor& t, int quarter_turns, bool flip) {
  const auto& s = t.shape();
  if (s.n != 1 || s.c != 1 || s.h != s.w) throw ShapeError("dihedral needs a (1,1,p,p) tensor");
  const std::size_t p = s.h;
  Tensor src = t;
  if (flip) {
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) src.at(0, 0, y, x) = t.at(0, 0, y, p - 1 - x);
    }
  }
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int r = 0; r < turns; ++r) {
    Tensor rotated(s);
    // counter-clockwise: out(y, x) = in(x, p-1-y)
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) rotated.at(0, 0, y, x) = src.at(0, 0, x, p - 1 - y);
    }
    src = std::move(rotated);
  }
  return src;
}

namespace {

Tensor crop_tensor(const ImagePlane& img, std::size_t x0, std::size_t y0, std::size_t p) {
  Tensor t({1, 1, p, p});
  for (std::size_t y = 0; y < p; ++y) {
    for (std::size_t x = 0; x < p; ++x) t.at(0, 0, y, x) = img.at(x0 + x, y0 + y);
  }
  return t;
}

}  // namespace

PatchSet make_patchset(const std::vector<ImagePlane>& hr_images, std::size_t scale,
                       std::size_t patch, std::size_t stride, Augment augment) {
  if (scale == 0 || patch == 0 || stride == 0) {
    throw ParameterError("scale, patch and stride must be positive");
  }
  if (patch % scale != 0) throw ParameterError("patch size must be a multiple of the scale");

  PatchSet set;
  set.patch = patch;
  set.scale = scale;
  for (std::size_t idx = 0; idx < hr_images.size(); ++idx) {
    const ImagePlane& raw = hr_images[idx];
    if (raw.channels != 1) throw ParameterError("make_patchset expects luminance planes");
    if (raw.width < patch || raw.height < patch) {
      std::cerr << "warning: image " << idx << " (" << raw.width << "x" << raw.height
                << ") is smaller than the patch size " << patch << ", skipped\n";
      continue;
    }
    const ImagePlane hr = to_unit(mod_crop(raw, scale));
    for (std::size_t y = 0; y + patch <= hr.height; y += stride) {
      for (std::size_t x = 0; x + patch <= hr.width; x += stride) {
        const Tensor hr_patch = crop_tensor(hr, x, y, patch);
        const ImagePlane crop = tensor_to_plane(hr_patch, SampleRange::unit);
        const Tensor lr_patch = plane_to_tensor(degrade(crop, scale));
        for (int f = 0; f < (augment.flips ? 2 : 1); ++f) {
          for (int r = 0; r < (augment.rotations ? 4 : 1); ++r) {
            set.pairs.push_back({dihedral(lr_patch, r, f == 1), dihedral(hr_patch, r, f == 1),
                                 PatchProvenance{idx, x, y, r, f == 1}});
          }
        }
      }
    }
  }
  if (set.empty()) throw ParameterError("no patches could be extracted");
  return set;
}

std::vector<ImagePlane> synthetic_corpus(std::size_t count, std::size_t width, std::size_t height,
                                         std::uint64_t seed) {
  std::vector<ImagePlane> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(splitmix64(seed + i));
    auto uni = [&](double lo, double hi) {
      return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
    };
    ImagePlane img(width, height, 1, ColorSpace::gray, SampleRange::unit);

    const double base = uni(0.25, 0.75), gx = uni(-0.3, 0.3), gy = uni(-0.3, 0.3);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        img.at(x, y) = base + gx * (static_cast<double>(x) / width - 0.5) +
                       gy * (static_cast<double>(y) / height - 0.5);
      }
    }

    // Hard-edged rotated rectangles and disks.
    const int shapes = 3 + static_cast<int>(rng() % 5);
    for (int s = 0; s < shapes; ++s) {
      const double cx = uni(0, width), cy = uni(0, height);
      const double rx = uni(3, width / 3.0), ry = uni(3, height / 3.0);
      const double theta = uni(0, std::numbers::pi);
      const double value = uni(0.0, 1.0);
      const bool disk = rng() % 2 == 0;
      const double ct = std::cos(theta), st = std::sin(theta);
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
          const bool inside = disk ? (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0
                                   : std::fabs(u) <= rx && std::fabs(v) <= ry;
          if (inside) img.at(x, y) = value;
        }
      }
    }

    // An oriented grating over a random window plus thin stripes.
    const double period = uni(5.0, 12.0), phi = uni(0, std::numbers::pi), amp = uni(0.1, 0.25);
    const double kx = std::cos(phi) * 2.0 * std::numbers::pi / period;
    const double ky = std::sin(phi) * 2.0 * std::numbers::pi / period;
    const double x0 = uni(0, width / 2.0), y0 = uni(0, height / 2.0);
    const double x1 = x0 + uni(width / 4.0, width / 2.0), y1 = y0 + uni(height / 4.0, height / 2.0);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        if (x >= x0 && x < x1 && y >= y0 && y < y1) {
          img.at(x, y) += amp * std::sin(kx * x + ky * y);
        }
      }
    }
    const int lines = static_cast<int>(rng() % 4);
    for (int l = 0; l < lines; ++l) {
      const bool horizontal = rng() % 2 == 0;
      const auto pos = static_cast<std::size_t>(uni(0, horizontal ? height : width));
      const std::size_t thick = 1 + rng() % 2;
      const double value = uni(0.0, 1.0);
      for (std::size_t t = pos; t < pos + thick; ++t) {
        for (std::size_t a = 0; a < (horizontal ? width : height); ++a) {
          if (horizontal && t < height) img.at(a, t) = value;
          if (!horizontal && t < width) img.at(t, a) = value;
        }
      }
    }

    for (double& v : img.samples) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<ImagePlane> load_luminance_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImagePlane> out;
  for (const auto& f : files) {
    ImagePlane img = to_unit(read_pnm(f.string()));
    out.push_back(img.channels == 3 ? rgb_to_y(img) : img);
  }
  return out;
}

}  // namespace adsr
