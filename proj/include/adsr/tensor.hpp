#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adsr {

/// Extents of a 4-D tensor in (batch, channel, height, width) order.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  /// Element count. Throws ShapeError when the product overflows size_t.
  std::size_t numel() const;
  std::size_t plane() const noexcept { return h * w; }

  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense row-major (n, c, h, w) array of doubles with an optional gradient
/// buffer of identical length.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[index(n, c, h, w)];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[index(n, c, h, w)];
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  /// Allocates a zeroed gradient buffer if none exists and returns it.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();
  void drop_grad() noexcept { grad_.reset(); }

  /// True when every element is finite.
  bool all_finite() const noexcept;

  /// Marks the tensor as a leaf whose gradient the tape must populate.
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }
  bool requires_grad() const noexcept { return requires_grad_; }

 private:
  Shape shape_{};
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
  bool requires_grad_ = false;
};

Tensor tensor_new(Shape shape, double fill);

/// Uniform samples in [lo, hi) from a seeded 64-bit Mersenne twister.
/// Bitwise reproducible for a fixed seed.
Tensor seeded_uniform(Shape shape, double lo, double hi, std::uint64_t seed);

/// splitmix64 finalizer; used to derive independent per-trial seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace adsr
