#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "adsr/image.hpp"
#include "adsr/tensor.hpp"

namespace adsr {

/// Dihedral augmentation: rotations by 0/90/180/270 degrees and an optional
/// horizontal flip before rotating.
struct Augment {
  bool flips = false;
  bool rotations = false;

  std::size_t count() const noexcept { return (flips ? 2 : 1) * (rotations ? 4 : 1); }
};

struct PatchProvenance {
  std::size_t image = 0;
  std::size_t x = 0;
  std::size_t y = 0;
  int rotation = 0;  // quarter turns, counter-clockwise
  bool flipped = false;
};

/// One training pair; both tensors are (1, 1, p, p) in [0, 1].
struct PatchPair {
  Tensor lr;  // bicubic(bicubic(hr, 1/s), s)
  Tensor hr;
  PatchProvenance from;
};

struct PatchSet {
  std::vector<PatchPair> pairs;
  std::size_t patch = 0;
  std::size_t scale = 0;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
};

/// Rotates a square (1,1,p,p) tensor by `quarter_turns` and optionally flips
/// it horizontally first.
Tensor dihedral(const Tensor& t, int quarter_turns, bool flip);

/// Cuts a deterministic patch grid from every luminance image (mod-cropped
/// to the scale). Each HR crop yields LR = degrade(crop, scale). Images
/// smaller than a patch are skipped with a warning on stderr; an empty result
/// throws ParameterError. `patch` must be a multiple of `scale`.
PatchSet make_patchset(const std::vector<ImagePlane>& hr_images, std::size_t scale,
                       std::size_t patch, std::size_t stride, Augment augment);

/// Seeded procedural luminance images in [0, 1]: smooth gradients, hard-edged
/// shapes, gratings and stripes, so bicubic degradation loses real detail.
std::vector<ImagePlane> synthetic_corpus(std::size_t count, std::size_t width, std::size_t height,
                                         std::uint64_t seed);

/// Loads every .pgm/.ppm file in `dir` (sorted by name) as unit-range luminance.
std::vector<ImagePlane> load_luminance_dir(const std::string& dir);

}  // namespace adsr
