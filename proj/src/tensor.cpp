#include "adsr/tensor.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "adsr/error.hpp"

namespace adsr {

std::size_t Shape::numel() const {
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  std::size_t total = 1;
  for (std::size_t extent : {n, c, h, w}) {
    if (extent != 0 && total > kMax / extent) {
      throw ShapeError("tensor extent product overflows: " + str());
    }
    total *= extent;
  }
  return total;
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
  }
}

std::span<double> Tensor::grad() {
  if (!grad_) grad_.emplace(data_.size(), 0.0);
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw StateError("tensor has no gradient");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) {
    std::fill(grad_->begin(), grad_->end(), 0.0);
  } else {
    grad_.emplace(data_.size(), 0.0);
  }
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor tensor_new(Shape shape, double fill) { return Tensor(shape, fill); }

Tensor seeded_uniform(Shape shape, double lo, double hi, std::uint64_t seed) {
  if (!(lo < hi)) throw ParameterError("seeded_uniform requires lo < hi");
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  const double span = hi - lo;
  for (double& v : t.data()) {
    // 53 random mantissa bits -> [0, 1)
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = lo + span * u;
    if (v >= hi) v = std::nextafter(hi, lo);
  }
  return t;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace adsr
